"""Log-space forward-backward and full-sum losses.

All losses are negative log path-sums over an alignment graph.  Gradients are
taken with respect to the *log-posterior* inputs; chaining through a softmax
is left to the caller.

Streams are passed by name:

``center``  T x N        log P(c | h_t)
``left``    T x (N+1)    log P(l | h_t), last column is the sentinel
``right``   T x (N+1)    log P(r | h_t)
``joint``   T x (N+1)*N  log P(l, c | h_t), column ``l * N + c``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .core import PhonemeInventory, ScaleSet
from .topology import (
    AlignmentGraph, Transitions, build_ctc_fsa, build_hmm_fsa, enumerate_paths,
)

LOSS_VARIANTS = ("ctc", "hmm_center", "hmm_factored_lcr", "diphone_joint")
_ALIASES = {"factored_lcr": "hmm_factored_lcr", "lcr": "hmm_factored_lcr",
            "diphone": "diphone_joint", "center": "hmm_center", "hmm": "hmm_center"}

# streams consumed by each variant
VARIANT_STREAMS = {
    "ctc": ("center",),
    "hmm_center": ("center",),
    "hmm_factored_lcr": ("left", "center", "right"),
    "diphone_joint": ("joint",),
}


def canonical_variant(name: str) -> str:
    name = _ALIASES.get(name, name)
    if name not in LOSS_VARIANTS:
        raise ValueError(f"unknown loss variant {name!r}; expected one of {LOSS_VARIANTS}")
    return name


class NoPathError(ValueError):
    """The graph admits no path of the requested length."""


@dataclass(eq=False)
class Occupancies:
    gamma: np.ndarray
    graph: AlignmentGraph = field(repr=False)

    def _marginal(self, labels: np.ndarray, size: int) -> np.ndarray:
        onehot = np.zeros((self.graph.num_states, size))
        onehot[np.arange(self.graph.num_states), labels] = 1.0
        return self.gamma @ onehot

    @cached_property
    def center(self) -> np.ndarray:
        return self._marginal(self.graph.center, self.graph.num_labels)

    @cached_property
    def left(self) -> np.ndarray:
        return self._marginal(self.graph.left, self.graph.num_labels + 1)

    @cached_property
    def right(self) -> np.ndarray:
        return self._marginal(self.graph.right, self.graph.num_labels + 1)

    @cached_property
    def joint(self) -> np.ndarray:
        n = self.graph.num_labels
        return self._marginal(self.graph.left * n + self.graph.center, (n + 1) * n)


@dataclass(eq=False)
class LossResult:
    loss: float
    grads: dict[str, np.ndarray]
    occupancies: Occupancies


def _structurally_reachable(g: AlignmentGraph, T: int) -> bool:
    succ = [[d for d, _ in lst] for lst in g.successors()]
    cur = set(g.initial.tolist())
    for _ in range(T - 1):
        cur = {d for s in cur for d in succ[s]}
        if not cur:
            return False
    return bool(cur & set(g.final.tolist()))


def _segment_lse(cand: np.ndarray, starts: np.ndarray, owner: np.ndarray) -> np.ndarray:
    m = np.maximum.reduceat(cand, starts)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.add.reduceat(np.exp(cand - m[owner]), starts)
    return m + np.log(s)


def forward_backward(scores: np.ndarray, g: AlignmentGraph,
                     transition_scale: float = 1.0) -> tuple[float, Occupancies]:
    """Total log path-score and state occupancies.

    Raises NoPathError when no initial->final walk of length T exists.
    """
    scores = np.asarray(scores, dtype=np.float64)
    T, S = scores.shape
    if S != g.num_states:
        raise ValueError(f"scores have {S} columns, graph has {g.num_states} states")
    if T < 1:
        raise ValueError("need at least one frame")
    w = transition_scale * g.arc_logw if transition_scale != 0 else np.zeros_like(g.arc_logw)
    src, dst = g.arc_src, g.arc_dst
    # arcs are sorted by destination; each state owns >= 1 incoming arc (self-loop)
    dst_starts = np.searchsorted(dst, np.arange(S))
    by_src = np.argsort(src, kind="stable")
    src_sorted, dst_by_src, w_by_src = src[by_src], dst[by_src], w[by_src]
    src_starts = np.searchsorted(src_sorted, np.arange(S))
    if np.any(np.diff(np.append(dst_starts, len(dst))) == 0) or np.any(
            np.diff(np.append(src_starts, len(src))) == 0):
        raise ValueError("every state needs at least one incoming and one outgoing arc")

    alpha = np.full((T, S), -np.inf)
    beta = np.full((T, S), -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha[0, g.initial] = scores[0, g.initial]
        for t in range(1, T):
            alpha[t] = _segment_lse(alpha[t - 1][src] + w, dst_starts, dst) + scores[t]
        beta[T - 1, g.final] = 0.0
        for t in range(T - 2, -1, -1):
            nxt = scores[t + 1] + beta[t + 1]
            beta[t] = _segment_lse(nxt[dst_by_src] + w_by_src, src_starts, src_sorted)
        loglik = float(logsumexp(alpha[T - 1, g.final]))
        if not np.isfinite(loglik):
            if loglik == -np.inf and not _structurally_reachable(g, T):
                raise NoPathError(f"no path of length {T} through the graph")
            if np.isnan(loglik):
                raise FloatingPointError("NaN in forward pass")
            return loglik, Occupancies(np.zeros((T, S)), g)
        gamma = np.exp(alpha + beta - loglik)
    return loglik, Occupancies(gamma, g)


def _check_rows(name: str, lp: np.ndarray, tol: float = 1e-6) -> None:
    dev = np.abs(logsumexp(lp, axis=1))
    if np.any(~(dev <= tol)):
        raise ValueError(f"{name} stream rows are not normalized log-probabilities")


def frame_scores(g: AlignmentGraph, scales: ScaleSet, streams: Mapping[str, np.ndarray],
                 log_prior: np.ndarray | None = None) -> np.ndarray:
    """T x states matrix of scaled log emission scores.

    ``log_prior`` is indexed like the center labels, or like the joint stream
    when a ``joint`` stream is given; it is weighted by ``-scales.beta``.
    """
    n = g.num_labels
    parts = []
    if "center" in streams:
        parts.append(scales.alpha_center * streams["center"][:, g.center])
    if "left" in streams:
        parts.append(scales.alpha_left * streams["left"][:, g.left])
    if "right" in streams:
        parts.append(scales.alpha_right * streams["right"][:, g.right])
    if "joint" in streams:
        parts.append(scales.alpha_center * streams["joint"][:, g.left * n + g.center])
    if not parts:
        raise ValueError("no streams given")
    out = parts[0].copy()
    for p in parts[1:]:
        out += p
    if log_prior is not None and scales.beta != 0:
        idx = g.left * n + g.center if "joint" in streams else g.center
        out -= scales.beta * log_prior[idx]
    return out


def _streams_for(variant: str, streams: Mapping[str, np.ndarray], inv: PhonemeInventory,
                 validate: bool) -> dict[str, np.ndarray]:
    n = len(inv)
    widths = {"center": n, "left": n + 1, "right": n + 1, "joint": (n + 1) * n}
    out = {}
    T = None
    for name in VARIANT_STREAMS[variant]:
        if name not in streams:
            raise ValueError(f"{variant} needs a {name!r} stream")
        arr = np.asarray(streams[name], dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != widths[name]:
            raise ValueError(f"{name} stream must be T x {widths[name]}, got {arr.shape}")
        if T is not None and arr.shape[0] != T:
            raise ValueError("stream lengths differ")
        T = arr.shape[0]
        if validate:
            _check_rows(name, arr)
        out[name] = arr
    return out


def build_variant_graph(variant: str, phi: Sequence[str], inv: PhonemeInventory,
                        silence: str = "none", transitions: Transitions = Transitions(),
                        silence_context: str = "boundary") -> AlignmentGraph:
    variant = canonical_variant(variant)
    if variant == "ctc":
        return build_ctc_fsa(phi, inv)
    return build_hmm_fsa(phi, inv, silence=silence, transitions=transitions,
                         silence_context=silence_context)


def sequence_loss(variant: str, streams: Mapping[str, np.ndarray], phi: Sequence[str],
                  inv: PhonemeInventory, scales: ScaleSet = ScaleSet(), silence: str = "none",
                  transitions: Transitions = Transitions(), validate: bool = True,
                  graph: AlignmentGraph | None = None, silence_context: str = "boundary") -> LossResult:
    """Shared driver for every loss variant."""
    variant = canonical_variant(variant)
    scales.require_training()
    streams = _streams_for(variant, streams, inv, validate)
    if graph is None:
        graph = build_variant_graph(variant, phi, inv, silence, transitions, silence_context)
    g = graph
    eta = 0.0 if variant == "ctc" else scales.eta
    loglik, occ = forward_backward(frame_scores(g, scales, streams), g, transition_scale=eta)
    scale_of = {"center": scales.alpha_center, "left": scales.alpha_left,
                "right": scales.alpha_right, "joint": scales.alpha_center}
    grads = {name: -scale_of[name] * getattr(occ, name) for name in streams}
    return LossResult(-loglik, grads, occ)


def ctc_loss_grad(log_post: np.ndarray, phi: Sequence[str], inv: PhonemeInventory,
                  scales: ScaleSet = ScaleSet(), validate: bool = True) -> LossResult:
    return sequence_loss("ctc", {"center": log_post}, phi, inv, scales, validate=validate)


def hmm_fullsum_loss_grad(center_log_post: np.ndarray, phi: Sequence[str], inv: PhonemeInventory,
                          scales: ScaleSet = ScaleSet(), silence: str = "none",
                          transitions: Transitions = Transitions(), validate: bool = True) -> LossResult:
    return sequence_loss("hmm_center", {"center": center_log_post}, phi, inv, scales,
                         silence, transitions, validate)


def factored_loss_grad(left_lp: np.ndarray, center_lp: np.ndarray, right_lp: np.ndarray,
                       phi: Sequence[str], inv: PhonemeInventory, scales: ScaleSet = ScaleSet(),
                       silence: str = "none", transitions: Transitions = Transitions(),
                       validate: bool = True) -> LossResult:
    """Full-sum loss with auxiliary left and right context factors.

    Each factor's gradient is weighted by its own marginal occupancy, so the
    context heads are trained without conditioning the center on context.
    """
    streams = {"left": left_lp, "center": center_lp, "right": right_lp}
    return sequence_loss("hmm_factored_lcr", streams, phi, inv, scales, silence, transitions, validate)


def diphone_loss_grad(joint_lp: np.ndarray, phi: Sequence[str], inv: PhonemeInventory,
                      scales: ScaleSet = ScaleSet(), silence: str = "none",
                      transitions: Transitions = Transitions(), validate: bool = True) -> LossResult:
    return sequence_loss("diphone_joint", {"joint": joint_lp}, phi, inv, scales,
                         silence, transitions, validate)


# -- brute-force oracle ------------------------------------------------------

def _path_scores(g: AlignmentGraph, paths: list[tuple[int, ...]], scales: ScaleSet,
                 streams: Mapping[str, np.ndarray], eta: float) -> np.ndarray:
    n = g.num_labels
    arcw = {(int(s), int(d)): float(w) for s, d, w in zip(g.arc_src, g.arc_dst, g.arc_logw)}
    out = np.empty(len(paths))
    for k, path in enumerate(paths):
        total = 0.0
        for t, s in enumerate(path):
            c, l, r = int(g.center[s]), int(g.left[s]), int(g.right[s])
            if "center" in streams:
                total += scales.alpha_center * streams["center"][t, c]
            if "left" in streams:
                total += scales.alpha_left * streams["left"][t, l]
            if "right" in streams:
                total += scales.alpha_right * streams["right"][t, r]
            if "joint" in streams:
                total += scales.alpha_center * streams["joint"][t, l * n + c]
            if t > 0 and eta != 0:
                total += eta * arcw[(path[t - 1], s)]
        out[k] = total
    return out


def bruteforce_loglik(g: AlignmentGraph, scales: ScaleSet, streams: Mapping[str, np.ndarray],
                      eta: float = 1.0, limit: int = 10**6) -> tuple[float, np.ndarray]:
    """Exact path-sum by enumeration; returns (loglik, gamma)."""
    T = next(iter(streams.values())).shape[0]
    paths = enumerate_paths(g, T, limit=limit)
    if not paths:
        raise NoPathError(f"no path of length {T} through the graph")
    ws = _path_scores(g, paths, scales, streams, eta)
    loglik = float(logsumexp(ws))
    post = np.exp(ws - loglik)
    gamma = np.zeros((T, g.num_states))
    for p, path in zip(post, paths):
        gamma[np.arange(T), list(path)] += p
    return loglik, gamma


def bruteforce_loss(variant: str, streams: Mapping[str, np.ndarray], phi: Sequence[str],
                    inv: PhonemeInventory, scales: ScaleSet = ScaleSet(), silence: str = "none",
                    transitions: Transitions = Transitions()) -> float:
    variant = canonical_variant(variant)
    g = build_variant_graph(variant, phi, inv, silence, transitions)
    used = {k: np.asarray(streams[k], dtype=np.float64) for k in VARIANT_STREAMS[variant]}
    eta = 0.0 if variant == "ctc" else scales.eta
    return -bruteforce_loglik(g, scales, used, eta)[0]


def finite_difference_grad(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``fn`` at every entry of ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = fn(x)
        flat[i] = old - h
        fm = fn(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| / max(||a||, ||b||), 0 when both vanish."""
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b)) / denom


def dump_gamma(occ: Occupancies) -> str:
    return "\n".join(" ".join(f"{v:.6g}" for v in row) for row in occ.gamma) + "\n"


__all__ = [
    "LOSS_VARIANTS", "VARIANT_STREAMS", "NoPathError", "Occupancies", "LossResult",
    "canonical_variant", "forward_backward", "frame_scores", "sequence_loss", "build_variant_graph",
    "ctc_loss_grad", "hmm_fullsum_loss_grad", "factored_loss_grad", "diphone_loss_grad",
    "bruteforce_loglik", "bruteforce_loss", "finite_difference_grad", "relative_error", "dump_gamma",
]
