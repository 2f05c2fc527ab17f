"""Viterbi over a single alignment graph: forced alignment and max-path scoring."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..core import PhonemeInventory, ScaleSet
from ..fullsum import NoPathError, build_variant_graph, canonical_variant, frame_scores, VARIANT_STREAMS
from ..topology import AlignmentGraph, Transitions


def viterbi(scores: np.ndarray, g: AlignmentGraph, transition_scale: float = 1.0) -> tuple[float, list[int]]:
    """Best path score and state sequence.

    Ties prefer the lowest-index predecessor.  States are numbered in path
    order, so on a tie the earlier state keeps the frame (stays) instead of
    the path advancing.
    """
    T, S = scores.shape
    w = transition_scale * g.arc_logw if transition_scale != 0 else np.zeros_like(g.arc_logw)
    # order arcs per destination, then by source
    order = np.lexsort((g.arc_src, g.arc_dst))
    src, dst, w = g.arc_src[order], g.arc_dst[order], w[order]
    starts = np.searchsorted(dst, np.arange(S))
    idx = np.arange(len(src))
    big = len(src)
    delta = np.full(S, -np.inf)
    delta[g.initial] = scores[0, g.initial]
    back = np.zeros((T, S), dtype=np.int64)
    for t in range(1, T):
        cand = delta[src] + w
        m = np.maximum.reduceat(cand, starts)
        first = np.minimum.reduceat(np.where(cand == m[dst], idx, big), starts)
        back[t] = src[np.minimum(first, big - 1)]
        delta = m + scores[t]
    finals = g.final
    best_final = finals[np.argmax(delta[finals])]
    best = float(delta[best_final])
    if best == -np.inf:
        raise NoPathError(f"no path of length {T} through the graph")
    path = [int(best_final)]
    for t in range(T - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return best, path


@dataclass
class Alignment:
    score: float
    states: list[int]
    # (position in phi or -1 for silence/blank, first frame, last frame inclusive)
    segments: list[tuple[int, int, int]]
    labels: list[int]


def _segments(g: AlignmentGraph, path: list[int]) -> list[tuple[int, int, int]]:
    segs: list[tuple[int, int, int]] = []
    start = 0
    for t in range(1, len(path) + 1):
        if t == len(path) or path[t] != path[start]:
            segs.append((int(g.pos[path[start]]), start, t - 1))
            start = t
    return segs


def force_align(streams: Mapping[str, np.ndarray], phi: Sequence[str], inv: PhonemeInventory,
                scales: ScaleSet = ScaleSet(), variant: str = "hmm_factored_lcr", silence: str = "none",
                transitions: Transitions = Transitions(), silence_context: str = "boundary") -> Alignment:
    """Best single path under the training frame scores of ``variant``."""
    variant = canonical_variant(variant)
    g = build_variant_graph(variant, phi, inv, silence, transitions, silence_context)
    used = {k: np.asarray(streams[k], dtype=np.float64) for k in VARIANT_STREAMS[variant]}
    eta = 0.0 if variant == "ctc" else scales.eta
    score, path = viterbi(frame_scores(g, scales, used), g, eta)
    return Alignment(score, path, _segments(g, path), [int(g.center[s]) for s in path])
