"""Synthetic speech-like corpora with known phoneme segmentations.

Each phoneme owns a prototype vector; a frame is its phoneme's prototype,
blended towards the neighbors' prototypes near the segment edges
(coarticulation), plus white gaussian noise.  Transcripts come from a random
bigram word model which is also exported as the task's ARPA LM.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..core import Lexicon, PhonemeInventory, Utterance, phonemize
from ..decoder.lm import BOS, EOS, NGramLM


@dataclass(frozen=True)
class SynthSpec:
    num_phonemes: int = 8
    feat_dim: int = 16
    noise_std: float = 0.5
    phone_dur: tuple[int, int] = (6, 14)        # input frames per phoneme
    sil_dur: tuple[int, int] = (8, 20)
    sil_between_prob: float = 0.3
    vocab_size: int = 12
    word_len: tuple[int, int] = (2, 4)          # phonemes per word
    utt_words: tuple[int, int] = (2, 4)
    coarticulation: float = 0.3
    lm_concentration: float = 1.0
    task_seed: int = 0

    def __post_init__(self):
        for name in ("phone_dur", "sil_dur", "word_len", "utt_words"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ValueError(f"{name} must satisfy 1 <= lo <= hi, got {(lo, hi)}")
        if self.num_phonemes < 1 or self.feat_dim < 1 or self.vocab_size < 1:
            raise ValueError("num_phonemes, feat_dim and vocab_size must be positive")
        if self.noise_std < 0 or not 0 <= self.coarticulation < 0.5:
            raise ValueError("noise_std must be >= 0 and coarticulation in [0, 0.5)")
        if not 0 <= self.sil_between_prob <= 1:
            raise ValueError("sil_between_prob must lie in [0, 1]")
        n_prons = sum(self.num_phonemes ** k for k in range(self.word_len[0], self.word_len[1] + 1))
        if n_prons < self.vocab_size:
            raise ValueError("not enough distinct pronunciations for the vocabulary")

    def fingerprint(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class SynthTask:
    spec: SynthSpec
    inventory: PhonemeInventory            # HMM inventory (with silence)
    lexicon: Lexicon
    prototypes: np.ndarray                 # (N + 1) x D, last row is silence
    lm: NGramLM


@dataclass
class Corpus:
    task: SynthTask
    utterances: list[Utterance]
    # per input frame: base phoneme index (0..N-1) or N for silence
    frame_labels: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.utterances)


def make_task(spec: SynthSpec) -> SynthTask:
    rng = np.random.default_rng([spec.task_seed, 7])
    N, D = spec.num_phonemes, spec.feat_dim
    base = [f"p{i}" for i in range(N)]
    inv = PhonemeInventory.build(base, silence="[SIL]")
    protos = rng.normal(size=(N + 1, D))
    protos[N] *= 0.3
    dists = np.linalg.norm(protos[:, None] - protos[None], axis=-1)[np.triu_indices(N + 1, 1)]
    if dists.size and dists.min() <= 2 * spec.noise_std:
        warnings.warn("some prototypes are closer than twice the noise std")
    prons: dict[str, tuple[str, ...]] = {}
    seen = set()
    while len(prons) < spec.vocab_size:
        k = int(rng.integers(spec.word_len[0], spec.word_len[1] + 1))
        pron = tuple(base[i] for i in rng.integers(0, N, size=k))
        if pron in seen:
            continue
        seen.add(pron)
        prons[f"w{len(prons):02d}"] = pron
    lex = Lexicon({w: p[:-1] + (p[-1] + "#eow",) for w, p in prons.items()})
    return SynthTask(spec, inv, lex, protos, _bigram_lm(spec, list(prons), rng))


def _bigram_lm(spec: SynthSpec, words: list[str], rng: np.random.Generator) -> NGramLM:
    lo, hi = spec.utt_words
    p_end = 1.0 / ((lo + hi) / 2.0)
    V = len(words)
    lm = NGramLM(order=2)
    lm.probs[1] = {(w,): math.log((1 - p_end) / V) for w in words}
    lm.probs[1][(EOS,)] = math.log(p_end)
    lm.probs[1][(BOS,)] = -99.0 * math.log(10)
    lm.backoffs[1] = {(w,): 0.0 for w in words + [BOS]}
    lm.probs[2] = {}
    for h in [BOS] + words:
        dist = rng.dirichlet(np.full(V, spec.lm_concentration))
        dist = np.maximum(dist, 1e-4)
        dist /= dist.sum()
        for w, p in zip(words, dist):
            lm.probs[2][(h, w)] = math.log((1 - p_end) * p)
        if h != BOS:
            lm.probs[2][(h, EOS)] = math.log(p_end)
    lm.backoffs[2] = {}
    return lm


def _sample_words(task: SynthTask, rng: np.random.Generator) -> tuple[str, ...]:
    lo, hi = task.spec.utt_words
    k = int(rng.integers(lo, hi + 1))
    words = task.lexicon.words
    hist = BOS
    out = []
    for _ in range(k):
        logp = np.array([task.lm.probs[2][(hist, w)] for w in words])
        p = np.exp(logp - logp.max())
        w = words[int(rng.choice(len(words), p=p / p.sum()))]
        out.append(w)
        hist = w
    return tuple(out)


def _render(task: SynthTask, segments: list[tuple[int, int]], rng: np.random.Generator) -> np.ndarray:
    spec = task.spec
    protos = task.prototypes
    sil = spec.num_phonemes
    frames = []
    for k, (lab, dur) in enumerate(segments):
        mu = protos[lab]
        if lab == sil or spec.coarticulation == 0:
            frames.append(np.repeat(mu[None], dur, axis=0))
            continue
        left = protos[segments[k - 1][0]] if k > 0 else protos[sil]
        right = protos[segments[k + 1][0]] if k + 1 < len(segments) else protos[sil]
        u = (np.arange(dur) + 0.5) / dur
        wl = spec.coarticulation * np.clip(1 - 2 * u, 0, None)
        wr = spec.coarticulation * np.clip(2 * u - 1, 0, None)
        frames.append((1 - wl - wr)[:, None] * mu + wl[:, None] * left + wr[:, None] * right)
    x = np.concatenate(frames, axis=0)
    if spec.noise_std > 0:
        x = x + spec.noise_std * rng.normal(size=x.shape)
    return x


def synth_corpus(spec: SynthSpec, seed: int, n_utts: int, prefix: str = "utt",
                 task: SynthTask | None = None) -> Corpus:
    """Deterministic corpus for ``(spec, seed)``; the task depends on ``spec`` only."""
    if n_utts < 0:
        raise ValueError("n_utts must be >= 0")
    task = task or make_task(spec)
    rng = np.random.default_rng([seed, 11])
    sil = spec.num_phonemes
    utts, labels = [], {}
    for i in range(n_utts):
        words = _sample_words(task, rng)
        segs: list[tuple[int, int]] = []

        def silence():
            segs.append((sil, int(rng.integers(spec.sil_dur[0], spec.sil_dur[1] + 1))))

        silence()
        for wi, w in enumerate(words):
            for sym in task.lexicon[w]:
                base = sym[:-4] if sym.endswith("#eow") else sym
                segs.append((int(base[1:]), int(rng.integers(spec.phone_dur[0], spec.phone_dur[1] + 1))))
            if wi + 1 < len(words) and rng.random() < spec.sil_between_prob:
                silence()
        silence()
        uid = f"{prefix}{i:05d}"
        utts.append(Utterance(uid, _render(task, segs, rng), words))
        labels[uid] = np.concatenate([np.full(d, lab) for lab, d in segs])
    return Corpus(task, utts, labels)


def phoneme_targets(corpus: Corpus, uid: str, stride: int = 4) -> np.ndarray:
    """Generating base-phoneme label at each subsampled frame (N = silence)."""
    lab = corpus.frame_labels[uid]
    return lab[::stride]


def transcripts(corpus: Corpus) -> list[tuple[str, ...]]:
    return [u.words for u in corpus.utterances]


def phi_of(corpus: Corpus, utt: Utterance) -> list[str]:
    return phonemize(utt.words, corpus.task.lexicon)
