"""Phoneme inventory, lexicon, utterances, scales and context labeling.

Labels are single-state phonemes with an end-of-word (EOW) distinction: every
base phoneme ``p`` has a word-final twin ``p#eow``.  HMM inventories add one
silence symbol, CTC inventories one blank symbol; never both.

Left/right context outputs range over the inventory plus the boundary
sentinel ``#`` which always takes index ``len(inventory)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

SENTINEL = "#"
EOW_SUFFIX = "#eow"
DEFAULT_SILENCE = "[SIL]"
DEFAULT_BLANK = "<b>"


class LexiconError(ValueError):
    """Malformed lexicon/inventory input or OOV lookups."""


@dataclass(frozen=True)
class PhonemeInventory:
    symbols: tuple[str, ...]
    silence: str | None = None
    blank: str | None = None
    _index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise LexiconError("duplicate symbols in inventory")
        if SENTINEL in self.symbols:
            raise LexiconError(f"boundary sentinel {SENTINEL!r} cannot be an emitting label")
        if self.silence is not None and self.blank is not None:
            raise LexiconError("silence and blank cannot share one inventory")
        for special in (self.silence, self.blank):
            if special is not None and special not in self.symbols:
                raise LexiconError(f"special symbol {special!r} missing from symbols")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.symbols)})

    @classmethod
    def build(cls, phonemes: Iterable[str], silence: str | None = None,
              blank: str | None = None) -> "PhonemeInventory":
        """Plain phonemes, then their EOW variants, then silence or blank."""
        base = list(phonemes)
        for p in base:
            if p.endswith(EOW_SUFFIX) or p == SENTINEL:
                raise LexiconError(f"reserved phoneme name {p!r}")
        syms = base + [p + EOW_SUFFIX for p in base]
        syms += [s for s in (silence, blank) if s is not None]
        return cls(tuple(syms), silence=silence, blank=blank)

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, sym: str) -> bool:
        return sym in self._index

    def index(self, sym: str) -> int:
        if sym == SENTINEL:
            return self.sentinel_index
        try:
            return self._index[sym]
        except KeyError:
            raise LexiconError(f"unknown phoneme {sym!r}") from None

    def indices(self, syms: Sequence[str]) -> list[int]:
        return [self.index(s) for s in syms]

    def symbol(self, idx: int) -> str:
        return SENTINEL if idx == self.sentinel_index else self.symbols[idx]

    @property
    def sentinel_index(self) -> int:
        return len(self.symbols)

    @property
    def num_context(self) -> int:
        """Size of the left/right factor output spaces (labels + sentinel)."""
        return len(self.symbols) + 1

    @property
    def silence_index(self) -> int | None:
        return None if self.silence is None else self._index[self.silence]

    @property
    def blank_index(self) -> int | None:
        return None if self.blank is None else self._index[self.blank]

    def is_silence(self, sym: str) -> bool:
        return sym == self.silence

    def is_blank(self, sym: str) -> bool:
        return sym == self.blank

    def is_eow(self, sym: str) -> bool:
        return sym.endswith(EOW_SUFFIX)

    def base_phonemes(self) -> list[str]:
        return [s for s in self.symbols
                if not self.is_eow(s) and s not in (self.silence, self.blank)]

    def with_topology(self, topology: str) -> "PhonemeInventory":
        """Same phonemes, specials swapped for ``hmm`` (silence) or ``ctc`` (blank)."""
        base = self.base_phonemes()
        if topology == "hmm":
            return PhonemeInventory.build(base, silence=self.silence or DEFAULT_SILENCE)
        if topology == "ctc":
            return PhonemeInventory.build(base, blank=self.blank or DEFAULT_BLANK)
        raise ValueError(f"unknown topology {topology!r}")


def parse_inventory(text: str) -> PhonemeInventory:
    """One base phoneme per line; ``sym:silence`` or ``sym:blank`` tags specials."""
    base, silence, blank = [], None, None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        sym, _, tag = line.partition(":")
        sym, tag = sym.strip(), tag.strip()
        if tag == "silence":
            if silence is not None:
                raise LexiconError("more than one silence symbol")
            silence = sym
        elif tag == "blank":
            if blank is not None:
                raise LexiconError("more than one blank symbol")
            blank = sym
        elif tag:
            raise LexiconError(f"unknown inventory tag {tag!r}")
        else:
            base.append(sym)
    return PhonemeInventory.build(base, silence=silence, blank=blank)


def format_inventory(inv: PhonemeInventory) -> str:
    lines = inv.base_phonemes()
    if inv.silence is not None:
        lines.append(f"{inv.silence}:silence")
    if inv.blank is not None:
        lines.append(f"{inv.blank}:blank")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Lexicon:
    entries: Mapping[str, tuple[str, ...]]

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def __getitem__(self, word: str) -> tuple[str, ...]:
        return self.entries[word]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def words(self) -> list[str]:
        return list(self.entries)


def parse_lexicon(text: str, inv: PhonemeInventory) -> Lexicon:
    entries: dict[str, tuple[str, ...]] = {}
    specials = {inv.silence, inv.blank}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        word, tab, pron = line.partition("\t")
        phones = pron.split()
        if not tab or not word or not phones:
            raise LexiconError(f"line {lineno}: expected 'word<TAB>ph1 ph2 ...'")
        for p in phones:
            if p not in inv or inv.is_eow(p) or p in specials:
                raise LexiconError(f"line {lineno}: unknown phoneme {p!r} in entry {word!r}")
        if word in entries:
            raise LexiconError(f"line {lineno}: duplicate pronunciation for {word!r}")
        entries[word] = tuple(phones[:-1]) + (phones[-1] + EOW_SUFFIX,)
    return Lexicon(entries)


def format_lexicon(lex: Lexicon) -> str:
    out = []
    for word, pron in lex.entries.items():
        base = list(pron[:-1]) + [pron[-1][: -len(EOW_SUFFIX)]]
        out.append(word + "\t" + " ".join(base))
    return "\n".join(out) + "\n"


def phonemize(words: Sequence[str], lex: Lexicon) -> list[str]:
    phi: list[str] = []
    for w in words:
        if w not in lex:
            raise LexiconError(f"out-of-vocabulary word {w!r}")
        phi.extend(lex[w])
    return phi


def context_labels(phi: Sequence[str], j: int, silence: str | None = None) -> tuple[str, str, str]:
    """(left, center, right) for position ``j``; neighbors skip silence."""
    if not 0 <= j < len(phi):
        raise IndexError(f"position {j} out of range for sequence of length {len(phi)}")
    center = phi[j]
    if silence is not None and center == silence:
        return SENTINEL, center, SENTINEL
    left = next((phi[i] for i in range(j - 1, -1, -1) if phi[i] != silence), SENTINEL)
    right = next((phi[i] for i in range(j + 1, len(phi)) if phi[i] != silence), SENTINEL)
    return left, center, right


@dataclass(frozen=True)
class Utterance:
    id: str
    features: np.ndarray
    words: tuple[str, ...]

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError(f"utterance {self.id}: features must be T0 x D with T0 >= 1")

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class ScaleSet:
    alpha_left: float = 1.0
    alpha_center: float = 1.0
    alpha_right: float = 1.0
    beta: float = 0.0
    eta: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        for name in ("alpha_left", "alpha_center", "alpha_right", "beta", "eta", "lam"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"scale {name} must be finite and nonnegative, got {v}")

    def require_training(self) -> None:
        if self.beta != 0:
            raise ValueError("training losses are prior-free: beta must be 0")
