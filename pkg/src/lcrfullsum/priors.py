"""Label priors for decoding.

Training never uses a prior.  At decode time the prior enters the score as
``-beta * log prior``.  Two estimators are provided: relative frequencies
over phonemized transcripts, and an exponentially decaying average of
batch-mean posteriors.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import Lexicon, PhonemeInventory, SENTINEL, phonemize

FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class Prior:
    labels: tuple[str, ...]
    log_probs: np.ndarray
    mode: str = "transcript"

    def __post_init__(self):
        if len(self.labels) != len(self.log_probs):
            raise ValueError("labels and log_probs differ in length")

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)


def _floor_normalize(p: np.ndarray, floor: float) -> np.ndarray:
    p = np.maximum(np.asarray(p, dtype=np.float64), floor)
    return p / p.sum()


def pair_labels(inv: PhonemeInventory) -> tuple[str, ...]:
    """Names for the (left, center) pairs in joint-stream order."""
    ctx = list(inv.symbols) + [SENTINEL]
    return tuple(f"{l},{c}" for l in ctx for c in inv.symbols)


def _special_mass(inv: PhonemeInventory) -> int | None:
    return inv.silence_index if inv.silence_index is not None else inv.blank_index


def transcript_prior(transcripts: Iterable[Sequence[str]], lex: Lexicon, inv: PhonemeInventory,
                     silence_mass: float = 0.2, floor: float = FLOOR) -> Prior:
    """Relative label frequencies over phonemized transcripts.

    Silence (or blank) never appears in transcripts, so it receives a fixed
    ``silence_mass`` and the phoneme counts share the remainder.
    """
    counts = Counter()
    n_utts = 0
    for words in transcripts:
        counts.update(phonemize(words, lex))
        n_utts += 1
    if n_utts == 0 or not counts:
        raise ValueError("cannot estimate a prior from an empty corpus")
    p = np.zeros(len(inv))
    for sym, k in counts.items():
        p[inv.index(sym)] = k
    p /= p.sum()
    special = _special_mass(inv)
    if special is not None and silence_mass > 0:
        p *= 1.0 - silence_mass
        p[special] = silence_mass
    return Prior(inv.symbols, np.log(_floor_normalize(p, floor)), "transcript")


def transcript_pair_prior(transcripts: Iterable[Sequence[str]], lex: Lexicon, inv: PhonemeInventory,
                          silence_mass: float = 0.2, floor: float = FLOOR) -> Prior:
    """Prior over (left, center) pairs from adjacent-pair counts.

    The first phoneme of an utterance pairs with the sentinel; silence is
    always ``(#, sil)``.
    """
    n = len(inv)
    counts = np.zeros((n + 1) * n)
    seen = False
    for words in transcripts:
        phi = phonemize(words, lex)
        prev = inv.sentinel_index
        for sym in phi:
            c = inv.index(sym)
            counts[prev * n + c] += 1
            prev = c
            seen = True
    if not seen:
        raise ValueError("cannot estimate a prior from an empty corpus")
    p = counts / counts.sum()
    special = _special_mass(inv)
    if special is not None and silence_mass > 0:
        p *= 1.0 - silence_mass
        p[inv.sentinel_index * n + special] = silence_mass
    return Prior(pair_labels(inv), np.log(_floor_normalize(p, floor)), "transcript")


def ema_prior_update(prior: Prior, batch_mean_posterior: np.ndarray, decay: float,
                     floor: float = FLOOR) -> Prior:
    if not 0.0 <= decay <= 1.0:
        raise ValueError(f"decay must lie in [0, 1], got {decay}")
    q = np.asarray(batch_mean_posterior, dtype=np.float64)
    if q.shape != prior.log_probs.shape:
        raise ValueError(f"dimension mismatch: prior {prior.log_probs.shape} vs batch {q.shape}")
    new = decay * prior.probs + (1.0 - decay) * q
    return Prior(prior.labels, np.log(_floor_normalize(new, floor)), "ema")


def uniform_prior(labels: Sequence[str], mode: str = "ema") -> Prior:
    return Prior(tuple(labels), np.full(len(labels), -np.log(len(labels))), mode)


def write_prior(prior: Prior) -> str:
    return "".join(f"{lab}\t{lp:.17g}\n" for lab, lp in zip(prior.labels, prior.log_probs))


def read_prior(text: str, mode: str = "transcript") -> Prior:
    labels, vals = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        lab, tab, val = line.partition("\t")
        if not tab:
            raise ValueError(f"prior line {lineno}: expected 'label<TAB>log_prior'")
        labels.append(lab)
        vals.append(float(val))
    return Prior(tuple(labels), np.array(vals), mode)
