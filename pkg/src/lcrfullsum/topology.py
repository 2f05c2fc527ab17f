"""Utterance-specific alignment graphs for the HMM and CTC label topologies.

Every state emits exactly one frame.  A path of length T visits T states,
starts in ``initial``, ends in ``final`` and follows T-1 arcs; its weight is
the sum of the T frame scores plus the (transition-scaled) arc weights.
The final "exit" carries weight 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import PhonemeInventory, SENTINEL, context_labels

SILENCE_MODES = ("none", "optional")


class PathExplosionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Transitions:
    """Loop probabilities; every non-loop arc of a state carries ``1 - loop``."""

    loop: float = 0.5
    sil_loop: float = 0.5

    def __post_init__(self):
        for v in (self.loop, self.sil_loop):
            if not 0.0 < v < 1.0:
                raise ValueError("loop probabilities must lie in (0, 1)")

    @property
    def log_loop(self) -> float:
        return math.log(self.loop)

    @property
    def log_forward(self) -> float:
        return math.log1p(-self.loop)

    @property
    def log_sil_loop(self) -> float:
        return math.log(self.sil_loop)

    @property
    def log_sil_forward(self) -> float:
        return math.log1p(-self.sil_loop)


@dataclass(frozen=True, eq=False)
class AlignmentGraph:
    left: np.ndarray      # per state, index into labels + sentinel
    center: np.ndarray    # per state, index into labels
    right: np.ndarray
    pos: np.ndarray       # position in phi, -1 for silence/blank
    arc_src: np.ndarray
    arc_dst: np.ndarray
    arc_logw: np.ndarray  # unscaled log transition probabilities
    initial: np.ndarray
    final: np.ndarray
    num_labels: int

    @property
    def num_states(self) -> int:
        return len(self.center)

    @property
    def num_arcs(self) -> int:
        return len(self.arc_src)

    def successors(self) -> list[list[tuple[int, float]]]:
        succ: list[list[tuple[int, float]]] = [[] for _ in range(self.num_states)]
        for s, d, w in zip(self.arc_src.tolist(), self.arc_dst.tolist(), self.arc_logw.tolist()):
            succ[s].append((d, w))
        for lst in succ:
            lst.sort()
        return succ

    def min_frames(self) -> int | None:
        """Length of the shortest initial->final walk, None if there is none."""
        succ = self.successors()
        dist = {int(s): 1 for s in self.initial}
        frontier = sorted(dist)
        finals = set(self.final.tolist())
        while frontier:
            hit = [dist[s] for s in frontier if s in finals]
            if hit:
                return min(hit)
            nxt = []
            for s in frontier:
                for d, _ in succ[s]:
                    if d not in dist:
                        dist[d] = dist[s] + 1
                        nxt.append(d)
            frontier = sorted(nxt)
        return None

    def dump(self, inv: PhonemeInventory) -> str:
        lines = []
        for s in range(self.num_states):
            lines.append(f"state {s}, {inv.symbol(int(self.left[s]))}, "
                         f"{inv.symbol(int(self.center[s]))}, {inv.symbol(int(self.right[s]))}, "
                         f"{int(self.pos[s])}")
        for a in range(self.num_arcs):
            lines.append(f"arc {self.arc_src[a]} {self.arc_dst[a]} {self.arc_logw[a]:.6f}")
        lines.append("initial " + " ".join(map(str, self.initial.tolist())))
        lines.append("final " + " ".join(map(str, self.final.tolist())))
        return "\n".join(lines) + "\n"


class _Builder:
    def __init__(self, inv: PhonemeInventory):
        self.inv = inv
        self.states: list[tuple[int, int, int, int]] = []
        self.arcs: list[tuple[int, int, float]] = []

    def state(self, left: int, center: int, right: int, pos: int) -> int:
        self.states.append((left, center, right, pos))
        return len(self.states) - 1

    def arc(self, src: int, dst: int, logw: float) -> None:
        self.arcs.append((src, dst, logw))

    def finish(self, initial: Sequence[int], final: Sequence[int]) -> AlignmentGraph:
        st = np.array(self.states, dtype=np.int64).reshape(-1, 4)
        arcs = sorted(self.arcs, key=lambda a: (a[1], a[0]))
        return AlignmentGraph(
            left=st[:, 0].copy(), center=st[:, 1].copy(), right=st[:, 2].copy(), pos=st[:, 3].copy(),
            arc_src=np.array([a[0] for a in arcs], dtype=np.int64),
            arc_dst=np.array([a[1] for a in arcs], dtype=np.int64),
            arc_logw=np.array([a[2] for a in arcs], dtype=np.float64),
            initial=np.array(sorted(set(initial)), dtype=np.int64),
            final=np.array(sorted(set(final)), dtype=np.int64),
            num_labels=len(self.inv),
        )


def _phone_states(b: _Builder, phi: Sequence[str]) -> list[int]:
    inv = b.inv
    out = []
    for j in range(len(phi)):
        left, center, right = context_labels(phi, j)
        out.append(b.state(inv.index(left), inv.index(center), inv.index(right), j))
    return out


def build_hmm_fsa(phi: Sequence[str], inv: PhonemeInventory, silence: str = "none",
                  transitions: Transitions = Transitions(),
                  silence_context: str = "boundary") -> AlignmentGraph:
    """Single-state phoneme HMM with self-loops and optional, skippable silence.

    Silence may appear at the utterance start, at the end and after every
    word-final (EOW) phoneme that is followed by another word.
    """
    if len(phi) == 0:
        raise ValueError("cannot build an alignment graph for an empty phoneme sequence")
    if silence not in SILENCE_MODES:
        raise ValueError(f"silence must be one of {SILENCE_MODES}")
    if silence == "optional" and inv.silence is None:
        raise ValueError("inventory has no silence symbol")
    b = _Builder(inv)
    lp, fw = transitions.log_loop, transitions.log_forward
    sil_lp, sil_fw = transitions.log_sil_loop, transitions.log_sil_forward
    sent = inv.sentinel_index

    def sil_state(j: int) -> int:
        # j: index of the phoneme following this silence (len(phi) at the end)
        if silence_context == "neighbors":
            left = inv.index(phi[j - 1]) if j > 0 else sent
            right = inv.index(phi[j]) if j < len(phi) else sent
        else:
            left = right = sent
        s = b.state(left, inv.silence_index, right, -1)
        b.arc(s, s, sil_lp)
        return s

    use_sil = silence == "optional"
    initial: list[int] = []
    start_sil = sil_state(0) if use_sil else None
    phones = _phone_states(b, phi)
    for s in phones:
        b.arc(s, s, lp)
    if start_sil is not None:
        initial.append(start_sil)
        b.arc(start_sil, phones[0], sil_fw)
    initial.append(phones[0])
    for j in range(len(phi) - 1):
        src, dst = phones[j], phones[j + 1]
        b.arc(src, dst, fw)
        if use_sil and inv.is_eow(phi[j]):
            mid = sil_state(j + 1)
            b.arc(src, mid, fw)
            b.arc(mid, dst, sil_fw)
    final = [phones[-1]]
    if use_sil:
        end_sil = sil_state(len(phi))
        b.arc(phones[-1], end_sil, fw)
        final.append(end_sil)
    return b.finish(initial, final)


def build_ctc_fsa(phi: Sequence[str], inv: PhonemeInventory) -> AlignmentGraph:
    """Standard CTC topology over (blank, phi_1, blank, ..., phi_L, blank).

    All arcs carry weight 0; blank skips are forbidden between identical labels.
    """
    if len(phi) == 0:
        raise ValueError("cannot build an alignment graph for an empty phoneme sequence")
    if inv.blank is None:
        raise ValueError("inventory has no blank symbol")
    b = _Builder(inv)
    sent, blank = inv.sentinel_index, inv.blank_index

    def blank_state() -> int:
        s = b.state(sent, blank, sent, -1)
        b.arc(s, s, 0.0)
        return s

    blanks = [blank_state()]
    labels = []
    for j in range(len(phi)):
        left, center, right = context_labels(phi, j)
        s = b.state(inv.index(left), inv.index(center), inv.index(right), j)
        b.arc(s, s, 0.0)
        b.arc(blanks[-1], s, 0.0)
        if j > 0 and phi[j] != phi[j - 1]:
            b.arc(labels[-1], s, 0.0)
        labels.append(s)
        blanks.append(blank_state())
        b.arc(s, blanks[-1], 0.0)
    return b.finish([blanks[0], labels[0]], [labels[-1], blanks[-1]])


def build_graph(topology: str, phi: Sequence[str], inv: PhonemeInventory, silence: str = "none",
                transitions: Transitions = Transitions()) -> AlignmentGraph:
    if topology == "hmm":
        return build_hmm_fsa(phi, inv, silence=silence, transitions=transitions)
    if topology == "ctc":
        return build_ctc_fsa(phi, inv)
    raise ValueError(f"unknown topology {topology!r}")


def enumerate_paths(g: AlignmentGraph, T: int, limit: int = 10**6) -> list[tuple[int, ...]]:
    """All initial->final walks of exactly T states, in lexicographic order."""
    if T < 1:
        return []
    succ = [[d for d, _ in lst] for lst in g.successors()]
    # can_finish[k] = states from which a final state is reachable in exactly k more steps
    can_finish = [set(g.final.tolist())]
    for _ in range(T - 1):
        prev = can_finish[-1]
        can_finish.append({s for s in range(g.num_states) if any(d in prev for d in succ[s])})

    paths: list[tuple[int, ...]] = []
    stack: list[int] = []

    def walk(s: int, remaining: int) -> None:
        stack.append(s)
        if remaining == 0:
            if len(paths) >= limit:
                raise PathExplosionError(f"more than {limit} paths")
            paths.append(tuple(stack))
        else:
            for d in succ[s]:
                if d in can_finish[remaining - 1]:
                    walk(d, remaining - 1)
        stack.pop()

    for s in sorted(g.initial.tolist()):
        if s in can_finish[T - 1]:
            walk(s, T - 1)
    return paths


def collapse_ctc(path_labels: Sequence[int], blank: int) -> list[int]:
    out = []
    prev = None
    for y in path_labels:
        if y != prev and y != blank:
            out.append(y)
        prev = y
    return out


__all__ = [
    "AlignmentGraph", "Transitions", "PathExplosionError", "SILENCE_MODES", "SENTINEL",
    "build_hmm_fsa", "build_ctc_fsa", "build_graph", "enumerate_paths", "collapse_ctc",
]
