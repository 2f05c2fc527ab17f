"""Time-synchronous Viterbi beam search over a lexical prefix tree.

Score of a hypothesis (all terms in nats)::

    sum_t [log P(label | h_t) - beta * log prior(label)]
      + eta * sum(log transition) + lam * log P_LM(W)

The LM is applied when a hypothesis enters a word-end node, and the
sentence-end probability is added at the last frame.  In ``diphone`` mode the
label is the (left, center) pair and the posterior/prior are the joint ones.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..core import Lexicon, PhonemeInventory, ScaleSet, phonemize
from ..fullsum import frame_scores
from ..priors import Prior
from ..topology import Transitions, build_ctc_fsa, build_hmm_fsa
from .align import viterbi
from .lm import BOS, EOS, NGramLM
from .tree import PrefixTree

PHONE, BOUNDARY, INNER_BLANK = 0, 1, 2
FRAME_SHIFT = 0.01
SUBSAMPLING = 4


@dataclass(frozen=True)
class Beam:
    size: int | None = 1024
    threshold: float = 14.0

    @classmethod
    def infinite(cls) -> "Beam":
        return cls(None, math.inf)


@dataclass
class DecodeResult:
    words: tuple[str, ...]
    score: float
    labels: list[int] = field(default_factory=list)   # best path, one label per frame
    num_frames: int = 0
    audio_seconds: float = 0.0
    wall_seconds: float = 0.0
    failed: bool = False

    @property
    def rtf(self) -> float:
        return measure_rtf(self.wall_seconds, self.audio_seconds)


def audio_seconds(num_frames: int, subsampled: bool = True, frame_shift: float = FRAME_SHIFT) -> float:
    return num_frames * frame_shift * (SUBSAMPLING if subsampled else 1)


def measure_rtf(wall_seconds: float, audio_secs: float) -> float:
    if audio_secs <= 0:
        raise ValueError("real time factor undefined for zero-duration audio")
    return wall_seconds / audio_secs


def corpus_rtf(results: Sequence[DecodeResult]) -> float:
    return measure_rtf(sum(r.wall_seconds for r in results), sum(r.audio_seconds for r in results))


class Decoder:
    """Reusable decoder; shared resources are read-only."""

    def __init__(self, tree: PrefixTree, lm: NGramLM, inv: PhonemeInventory,
                 scales: ScaleSet = ScaleSet(), prior: Prior | None = None, beam: Beam = Beam(),
                 transitions: Transitions = Transitions(), topology: str = "hmm",
                 mode: str = "center", silence: bool = True, max_words: int | None = None):
        if topology not in ("hmm", "ctc"):
            raise ValueError(f"unknown topology {topology!r}")
        if mode not in ("center", "diphone"):
            raise ValueError(f"unknown decode mode {mode!r}")
        if mode == "diphone" and topology != "hmm":
            raise ValueError("diphone decoding requires the HMM topology")
        if topology == "hmm" and silence and inv.silence is None:
            raise ValueError("inventory has no silence symbol")
        if topology == "ctc" and inv.blank is None:
            raise ValueError("inventory has no blank symbol")
        self.tree, self.lm, self.inv = tree, lm, inv
        self.scales, self.prior, self.beam = scales, prior, beam
        self.transitions, self.topology, self.mode = transitions, topology, mode
        self.silence = silence if topology == "hmm" else True
        self.max_words = max_words
        self._lm_cache: dict[tuple[tuple[str, ...], str], float] = {}
        self.boundary_label = inv.silence_index if topology == "hmm" else inv.blank_index
        n = len(inv)
        if prior is not None:
            want = (n + 1) * n if mode == "diphone" else n
            if len(prior.log_probs) != want:
                raise ValueError(f"prior has {len(prior.log_probs)} entries, expected {want}")

    # -- scoring helpers --------------------------------------------------

    def _lm(self, state: tuple[str, ...], word: str) -> float:
        key = (state, word)
        v = self._lm_cache.get(key)
        if v is None:
            v = self._lm_cache[key] = self.scales.lam * self.lm.score(state, word)
        return v

    def emissions(self, streams: Mapping[str, np.ndarray] | np.ndarray) -> np.ndarray:
        """Per-frame label scores with the prior applied."""
        if isinstance(streams, np.ndarray):
            streams = {"joint" if self.mode == "diphone" else "center": streams}
        key = "joint" if self.mode == "diphone" else "center"
        if key not in streams:
            raise ValueError(f"{self.mode} decoding needs a {key!r} stream")
        em = np.asarray(streams[key], dtype=np.float64)
        if em.ndim != 2 or em.shape[0] == 0:
            raise ValueError("empty posterior stream")
        if self.prior is not None and self.scales.beta != 0:
            em = em - self.scales.beta * self.prior.log_probs
        return em

    # -- search -----------------------------------------------------------

    def decode(self, streams: Mapping[str, np.ndarray] | np.ndarray) -> DecodeResult:
        t0 = time.perf_counter()
        em = self.emissions(streams)
        T = em.shape[0]
        nodes = self.tree.nodes
        n = len(self.inv)
        diphone = self.mode == "diphone"
        hmm = self.topology == "hmm"
        sent = self.inv.sentinel_index
        tr = self.transitions
        eta = self.scales.eta if hmm else 0.0
        w_loop, w_fw = eta * tr.log_loop, eta * tr.log_forward
        w_sloop, w_sfw = eta * tr.log_sil_loop, eta * tr.log_sil_forward
        if not self.silence:
            w_sloop = w_sfw = -math.inf
        maxw = self.max_words
        root_children = list(nodes[0].children.values())
        bl = self.boundary_label

        def nw_key(nw: int) -> int:
            return nw if maxw is not None else min(nw, 1)

        def label_of(kind: int, node: int, left: int) -> int:
            if kind == PHONE:
                lab = nodes[node].label
                if diphone:
                    ctx = left if nodes[node].depth == 1 else nodes[nodes[node].parent].label
                    return ctx * n + lab
                return lab
            if kind == BOUNDARY:
                return sent * n + bl if diphone else bl
            return self.inv.blank_index

        # token: key -> (score, words, lmstate, nwords, trace)
        def enter(node_id, base, words, lmstate, nw, prev_label):
            node = nodes[node_id]
            left = prev_label if (diphone and node.depth == 1) else -1
            if node.words:
                if maxw is not None and nw + 1 > maxw:
                    return
                for w in node.words:
                    st = self.lm.state(lmstate + (w,))
                    yield (PHONE, node_id, st, nw_key(nw + 1), left), base + self._lm(lmstate, w), \
                        words + (w,), st, nw + 1
            else:
                yield (PHONE, node_id, lmstate, nw_key(nw), left), base, words, lmstate, nw

        init_state = self.lm.state((BOS,))
        frontier: dict[tuple, tuple] = {}

        def push(out, key, score, words, lmstate, nw, trace):
            old = out.get(key)
            if old is None or score > old[0] or (score == old[0] and len(words) < len(old[1])):
                out[key] = (score, words, lmstate, nw, trace)

        # frame 0
        if self.silence:
            k = (BOUNDARY, 0, init_state, nw_key(0), sent if diphone else -1)
            lab = label_of(BOUNDARY, 0, -1)
            push(frontier, k, em[0, lab], (), init_state, 0, (lab, None))
        for c in root_children:
            for key, sc, words, st, nw in enter(c, 0.0, (), init_state, 0, sent):
                lab = label_of(PHONE, c, key[4])
                push(frontier, key, sc + em[0, lab], words, st, nw, (lab, None))
        frontier = self._prune(frontier)

        for t in range(1, T):
            nxt: dict[tuple, tuple] = {}
            row = em[t]
            for key, (score, words, lmstate, nw, trace) in frontier.items():
                kind, node_id, _, _, left = key
                succ: list[tuple] = []
                if kind == PHONE:
                    node = nodes[node_id]
                    succ.append((key, score + w_loop, words, lmstate, nw))
                    lab = node.label
                    if node.words:
                        if self.silence:
                            succ.append(((BOUNDARY, 0, lmstate, nw_key(nw), lab if diphone else -1),
                                         score + w_fw, words, lmstate, nw))
                        if maxw is None or nw < maxw:
                            for c in root_children:
                                if not hmm and nodes[c].label == lab:
                                    continue
                                succ.extend(enter(c, score + w_fw, words, lmstate, nw, lab))
                    else:
                        if not hmm:
                            succ.append(((INNER_BLANK, node_id, lmstate, nw_key(nw), -1),
                                         score, words, lmstate, nw))
                        for c in node.children.values():
                            if not hmm and nodes[c].label == lab:
                                continue
                            succ.extend(enter(c, score + w_fw, words, lmstate, nw, lab))
                elif kind == BOUNDARY:
                    succ.append((key, score + w_sloop, words, lmstate, nw))
                    if maxw is None or nw < maxw:
                        prev_lab = left if diphone else -1
                        for c in root_children:
                            succ.extend(enter(c, score + w_sfw, words, lmstate, nw, prev_lab))
                else:
                    succ.append((key, score, words, lmstate, nw))
                    for c in nodes[node_id].children.values():
                        succ.extend(enter(c, score, words, lmstate, nw, -1))
                for k2, sc, w2, st2, nw2 in succ:
                    lab = label_of(k2[0], k2[1], k2[4])
                    push(nxt, k2, sc + row[lab], w2, st2, nw2, (lab, trace))
            frontier = self._prune(nxt)
            if not frontier:
                break

        best = None
        for key, (score, words, lmstate, nw, trace) in frontier.items():
            kind, node_id = key[0], key[1]
            if nw < 1:
                continue
            if kind == PHONE and not nodes[node_id].words:
                continue
            if kind == INNER_BLANK:
                continue
            total = score + self._lm(lmstate, EOS)
            if best is None or total > best[0] or (total == best[0] and len(words) < len(best[1])):
                best = (total, words, trace)
        wall = time.perf_counter() - t0
        if best is None:
            return DecodeResult((), -math.inf, [], T, audio_seconds(T), wall, failed=True)
        labels = []
        trace = best[2]
        while trace is not None:
            labels.append(trace[0])
            trace = trace[1]
        labels.reverse()
        return DecodeResult(best[1], best[0], labels, T, audio_seconds(T), wall)

    def _prune(self, tokens: dict[tuple, tuple]) -> dict[tuple, tuple]:
        if not tokens:
            return tokens
        best = max(v[0] for v in tokens.values())
        if best == -math.inf:
            return {}
        thr = best - self.beam.threshold
        kept = [(k, v) for k, v in tokens.items() if v[0] >= thr]
        if self.beam.size is not None and len(kept) > self.beam.size:
            kept = heapq.nlargest(self.beam.size, kept, key=lambda kv: kv[1][0])
        return dict(kept)


def viterbi_decode(streams, tree: PrefixTree, lm: NGramLM, inv: PhonemeInventory,
                   scales: ScaleSet = ScaleSet(), prior: Prior | None = None, beam: Beam = Beam(),
                   transitions: Transitions = Transitions(), topology: str = "hmm",
                   mode: str = "center", silence: bool = True, max_words: int | None = None) -> DecodeResult:
    return Decoder(tree, lm, inv, scales, prior, beam, transitions, topology, mode, silence,
                   max_words).decode(streams)


def exhaustive_decode(streams, lex: Lexicon, lm: NGramLM, inv: PhonemeInventory,
                      scales: ScaleSet = ScaleSet(), prior: Prior | None = None,
                      transitions: Transitions = Transitions(), topology: str = "hmm",
                      mode: str = "center", silence: bool = True,
                      max_words: int = 2) -> tuple[tuple[str, ...], float]:
    """Score every word sequence up to ``max_words`` by max-path Viterbi on its own graph."""
    key = "joint" if mode == "diphone" else "center"
    if isinstance(streams, np.ndarray):
        streams = {key: streams}
    em = {key: np.asarray(streams[key], dtype=np.float64)}
    T = em[key].shape[0]
    am = ScaleSet(alpha_left=0.0, alpha_center=1.0, alpha_right=0.0, beta=scales.beta, eta=scales.eta)
    log_prior = prior.log_probs if prior is not None else None
    best: tuple[tuple[str, ...], float] | None = None
    for k in range(1, max_words + 1):
        for words in itertools.product(lex.words, repeat=k):
            phi = phonemize(words, lex)
            if topology == "hmm":
                g = build_hmm_fsa(phi, inv, "optional" if silence else "none", transitions)
                eta = scales.eta
            else:
                g = build_ctc_fsa(phi, inv)
                eta = 0.0
            if g.min_frames() > T:
                continue
            s, _ = viterbi(frame_scores(g, am, em, log_prior), g, eta)
            total = s + scales.lam * lm.sentence_score(words)
            if best is None or total > best[1]:
                best = (tuple(words), total)
    if best is None:
        return (), -math.inf
    return best
