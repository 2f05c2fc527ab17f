"""Seeded property suite: oracle equivalences, occupancies, gradients, reductions.

Every check draws its instances from ``numpy.random.default_rng`` seeded by
the caller, so two runs with the same seed produce bit-identical reports.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.special import log_softmax

from .core import PhonemeInventory, ScaleSet, parse_lexicon
from .decoder.lm import NGramLM, load_arpa, write_arpa
from .decoder.search import Beam, exhaustive_decode, viterbi_decode
from .decoder.tree import build_prefix_tree
from .fullsum import (
    LOSS_VARIANTS, VARIANT_STREAMS, NoPathError, bruteforce_loglik, build_variant_graph,
    finite_difference_grad, relative_error, sequence_loss,
)
from .topology import Transitions

FAULTS = ("gamma", "grad", "loss")


@dataclass
class PropertyResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    instances: int
    seconds: float = 0.0
    detail: str = ""


@dataclass
class VerifyReport:
    seed: int
    results: list[PropertyResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def by_name(self, name: str) -> PropertyResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "passed": self.passed, "results": [asdict(r) for r in self.results]}

    def digest(self) -> str:
        """Hash of everything except timings; equal across identical runs."""
        rows = [{k: v for k, v in asdict(r).items() if k != "seconds"} for r in self.results]
        blob = json.dumps(rows, sort_keys=True, default=repr).encode()
        return hashlib.sha256(blob).hexdigest()

    def format(self) -> str:
        lines = []
        for r in self.results:
            tag = "PASS" if r.passed else "FAIL"
            lines.append(f"{tag}  {r.name:<28s} max_err={r.max_error:.3e}  tol={r.tolerance:.1e}  "
                         f"n={r.instances}  {r.seconds:.1f}s" + (f"  {r.detail}" if r.detail else ""))
        return "\n".join(lines)


# -- random instances ---------------------------------------------------------

@dataclass
class Instance:
    variant: str
    inv: PhonemeInventory
    phi: list[str]
    T: int
    streams: dict[str, np.ndarray]
    scales: ScaleSet
    silence: str
    transitions: Transitions

    def graph(self):
        return build_variant_graph(self.variant, self.phi, self.inv, self.silence, self.transitions)

    def loss(self, streams=None, validate: bool = False):
        return sequence_loss(self.variant, streams or self.streams, self.phi, self.inv, self.scales,
                             self.silence, self.transitions, validate=validate)


def random_inventory(rng: np.random.Generator, topology: str) -> PhonemeInventory:
    """At most 6 emitting labels; either EOW-paired or a flat symbol set."""
    special = {"silence": "SIL"} if topology == "hmm" else {"blank": "-"}
    if rng.random() < 0.5:
        return PhonemeInventory.build(["a", "b"], **special)
    k = int(rng.integers(2, 6))
    flat = ["a", "b", "c", "d#eow", "e"][:k]
    return PhonemeInventory(tuple(flat) + tuple(special.values()), **special)


def random_streams(rng: np.random.Generator, T: int, n: int, names, sharpness: float = 2.0):
    widths = {"center": n, "left": n + 1, "right": n + 1, "joint": (n + 1) * n}
    return {h: log_softmax(sharpness * rng.normal(size=(T, widths[h])), axis=1) for h in names}


def random_instance(rng: np.random.Generator, variant: str, max_T: int = 10, max_phi: int = 4,
                    min_T: int = 1) -> Instance:
    topology = "ctc" if variant == "ctc" else "hmm"
    while True:
        inv = random_inventory(rng, topology)
        emitting = [s for s in inv.symbols if s not in (inv.silence, inv.blank)]
        phi = [emitting[i] for i in rng.integers(0, len(emitting), int(rng.integers(1, max_phi + 1)))]
        silence = "optional" if topology == "hmm" and rng.random() < 0.7 else "none"
        transitions = Transitions(float(rng.uniform(0.1, 0.9)), float(rng.uniform(0.1, 0.9)))
        g = build_variant_graph(variant, phi, inv, silence, transitions)
        lo = max(g.min_frames(), min_T)
        if lo <= max_T:
            break
    T = int(rng.integers(lo, max_T + 1))
    scales = ScaleSet(alpha_left=float(rng.uniform(0.1, 1.5)), alpha_center=float(rng.uniform(0.5, 1.5)),
                      alpha_right=float(rng.uniform(0.1, 1.5)), eta=float(rng.uniform(0.0, 1.5)))
    streams = random_streams(rng, T, len(inv), VARIANT_STREAMS[variant])
    return Instance(variant, inv, phi, T, streams, scales, silence, transitions)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300) if a != b else 0.0


# -- properties ---------------------------------------------------------------

def _timed(name: str, tol: float, fn: Callable[[], tuple[float, int, str]]) -> PropertyResult:
    t0 = time.perf_counter()
    err, n, detail = fn()
    ok = bool(np.isfinite(err) and err <= tol)
    return PropertyResult(name, ok, float(err), tol, n, time.perf_counter() - t0, detail)


def oracle_instances(seed: int, n: int) -> list[Instance]:
    rng = np.random.default_rng([seed, 11])
    return [random_instance(rng, LOSS_VARIANTS[i % len(LOSS_VARIANTS)]) for i in range(n)]


def check_oracle(instances: list[Instance], fault: str | None = None):
    """Forward-backward loss and occupancies against path enumeration.

    Returns (loss relative error, gamma abs error, gamma row-sum error).
    """
    loss_err = gamma_err = rowsum_err = 0.0
    for k, inst in enumerate(instances):
        res = inst.loss(validate=True)
        g = res.occupancies.graph
        used = {h: inst.streams[h] for h in VARIANT_STREAMS[inst.variant]}
        eta = 0.0 if inst.variant == "ctc" else inst.scales.eta
        ref_ll, ref_gamma = bruteforce_loglik(g, inst.scales, used, eta)
        loss = res.loss
        gamma = res.occupancies.gamma
        if fault == "loss" and k == 0:
            loss = loss * (1 + 1e-6)
        if fault == "gamma" and k == 0:
            gamma = gamma.copy()
            gamma[0, 0] += 1e-3
        loss_err = max(loss_err, _rel(loss, -ref_ll))
        gamma_err = max(gamma_err, float(np.max(np.abs(gamma - ref_gamma))))
        rowsum_err = max(rowsum_err, float(np.max(np.abs(gamma.sum(axis=1) - 1.0))))
    return loss_err, gamma_err, rowsum_err


def check_gradients(seed: int, variant: str, n: int, h: float = 1e-5, max_T: int = 6,
                    fault: str | None = None) -> float:
    """Worst relative error between analytic and central-difference gradients."""
    rng = np.random.default_rng([seed, 13, LOSS_VARIANTS.index(variant)])
    worst = 0.0
    for k in range(n):
        inst = random_instance(rng, variant, max_T=max_T)
        res = inst.loss()
        for name in VARIANT_STREAMS[variant]:
            def f(x, name=name):
                return inst.loss({**inst.streams, name: x}).loss
            fd = finite_difference_grad(f, inst.streams[name], h)
            an = res.grads[name]
            if fault == "grad" and k == 0:
                an = an.copy()
                an[0, 0] += 1e-2
            worst = max(worst, relative_error(an, fd))
    return worst


def check_reductions(seed: int, n: int = 50) -> dict[str, float]:
    """Uniform context streams, zero context scales, and the tiny CTC case."""
    rng = np.random.default_rng([seed, 17])
    shift_err = zero_err = 0.0
    for _ in range(n):
        inst = random_instance(rng, "hmm_factored_lcr")
        n_ctx = len(inst.inv) + 1
        T = inst.T
        uniform = np.full((T, n_ctx), -math.log(n_ctx))
        streams = {**inst.streams, "left": uniform, "right": uniform}
        fact = inst.loss(streams).loss
        center = sequence_loss("hmm_center", {"center": inst.streams["center"]}, inst.phi, inst.inv,
                               inst.scales, inst.silence, inst.transitions).loss
        expected = T * (inst.scales.alpha_left + inst.scales.alpha_right) * math.log(n_ctx)
        shift_err = max(shift_err, abs((fact - center) - expected))
        zero = ScaleSet(alpha_left=0.0, alpha_center=inst.scales.alpha_center, alpha_right=0.0,
                        eta=inst.scales.eta)
        f0 = sequence_loss("hmm_factored_lcr", inst.streams, inst.phi, inst.inv, zero, inst.silence,
                           inst.transitions).loss
        c0 = sequence_loss("hmm_center", {"center": inst.streams["center"]}, inst.phi, inst.inv, zero,
                           inst.silence, inst.transitions).loss
        zero_err = max(zero_err, abs(f0 - c0))
    inv = PhonemeInventory(("a", "b", "-"), blank="-")
    ctc = sequence_loss("ctc", {"center": np.full((2, 3), -math.log(3))}, ["a"], inv).loss
    return {"uniform_context_shift": shift_err, "zero_context_scale": zero_err,
            "ctc_single_label": abs(ctc - math.log(3))}


def random_bigram_lm(words: list[str], rng: np.random.Generator) -> NGramLM:
    """Random backoff bigram, round-tripped through ARPA text."""
    lm = NGramLM(order=2)
    vocab = list(words) + ["</s>"]
    uni = rng.dirichlet(np.ones(len(vocab)))
    lm.probs[1] = {(w,): math.log(p) for w, p in zip(vocab, uni)}
    lm.probs[1][("<s>",)] = -99 * math.log(10)
    lm.backoffs[1] = {(w,): math.log(rng.uniform(0.2, 1.0)) for w in list(words) + ["<s>"]}
    lm.probs[2] = {}
    for hist in list(words) + ["<s>"]:
        for w in vocab:
            if rng.random() < 0.5:
                lm.probs[2][(hist, w)] = math.log(rng.uniform(0.01, 0.5))
    return load_arpa(write_arpa(lm))


def decoder_cases():
    return [("hmm", "center"), ("hmm", "diphone"), ("ctc", "center")]


def check_decoder(seed: int, n: int) -> tuple[float, int]:
    """Infinite-beam tree search against exhaustive word-sequence scoring.

    Returns (worst score difference, number of argmax mismatches).
    """
    rng = np.random.default_rng([seed, 19])
    base = ["a", "b", "c", "d"]
    worst, mismatches = 0.0, 0
    cases = decoder_cases()
    for k in range(n):
        topology, mode = cases[k % len(cases)]
        special = {"silence": "SIL"} if topology == "hmm" else {"blank": "-"}
        inv = PhonemeInventory.build(base, **special)
        vocab = int(rng.integers(2, 6))
        prons: dict[str, tuple[str, ...]] = {}
        while len(prons) < vocab:
            pron = tuple(rng.choice(base, int(rng.integers(1, 4))))
            if pron not in prons.values():
                prons[f"w{len(prons)}"] = pron
        lex = parse_lexicon("\n".join(f"{w}\t{' '.join(p)}" for w, p in prons.items()), inv)
        lm = random_bigram_lm(list(prons), rng)
        T = int(rng.integers(4, 12))
        n_lab = len(inv)
        width = (n_lab + 1) * n_lab if mode == "diphone" else n_lab
        x = log_softmax(2.0 * rng.normal(size=(T, width)), axis=1)
        scales = ScaleSet(eta=float(rng.uniform(0.5, 1.5)), lam=float(rng.uniform(0.5, 2.0)))
        res = viterbi_decode(x, build_prefix_tree(lex, inv), lm, inv, scales, beam=Beam.infinite(),
                             topology=topology, mode=mode, max_words=2)
        words, score = exhaustive_decode(x, lex, lm, inv, scales, topology=topology, mode=mode,
                                         max_words=2)
        if res.words != words:
            mismatches += 1
        if math.isinf(score) and math.isinf(res.score):
            continue
        worst = max(worst, abs(res.score - score))
    return worst, mismatches


def check_no_path(seed: int) -> float:
    """T below the minimal path length must raise; returns 0 on success."""
    inv = PhonemeInventory.build(["a", "b"], silence="SIL")
    streams = random_streams(np.random.default_rng([seed, 23]), 2, len(inv), ("center",))
    try:
        sequence_loss("hmm_center", streams, ["a", "b", "a#eow"], inv)
    except NoPathError:
        return 0.0
    return math.inf


# -- suite --------------------------------------------------------------------

@dataclass(frozen=True)
class VerifySettings:
    oracle_instances: int = 500
    grad_instances: int = 100
    reduction_instances: int = 50
    decoder_streams: int = 60
    fd_step: float = 1e-5


def run_suite(seed: int = 0, settings: VerifySettings = VerifySettings(),
              fault: str | None = None, only: tuple[str, ...] | None = None) -> VerifyReport:
    """Run every property; ``fault`` injects a known error to show the suite can fail."""
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; expected one of {FAULTS}")
    report = VerifyReport(seed)

    def want(group: str) -> bool:
        return only is None or group in only

    if want("oracle"):
        t0 = time.perf_counter()
        insts = oracle_instances(seed, settings.oracle_instances)
        loss_err, gamma_err, row_err = check_oracle(insts, fault)
        dt = time.perf_counter() - t0
        n = len(insts)
        report.results += [
            PropertyResult("oracle_loss", loss_err <= 1e-10, loss_err, 1e-10, n, dt),
            PropertyResult("oracle_gamma", gamma_err <= 1e-10, gamma_err, 1e-10, n, 0.0),
            PropertyResult("gamma_row_sums", row_err <= 1e-9, row_err, 1e-9, n, 0.0),
        ]
    if want("gradients"):
        for variant in LOSS_VARIANTS:
            report.results.append(_timed(
                f"gradient_{variant}", 1e-4,
                lambda v=variant: (check_gradients(seed, v, settings.grad_instances, settings.fd_step,
                                                   fault=fault), settings.grad_instances, "")))
    if want("reductions"):
        t0 = time.perf_counter()
        red = check_reductions(seed, settings.reduction_instances)
        dt = time.perf_counter() - t0
        tols = {"uniform_context_shift": 1e-9, "zero_context_scale": 1e-12, "ctc_single_label": 1e-12}
        for key, err in red.items():
            report.results.append(PropertyResult(key, err <= tols[key], err, tols[key],
                                                 1 if key == "ctc_single_label" else settings.reduction_instances,
                                                 dt))
    if want("decoder"):
        t0 = time.perf_counter()
        diff, mism = check_decoder(seed, settings.decoder_streams)
        report.results.append(PropertyResult("decoder_oracle", diff <= 1e-9 and mism == 0, diff, 1e-9,
                                             settings.decoder_streams, time.perf_counter() - t0,
                                             f"argmax mismatches={mism}"))
    if want("no_path"):
        report.results.append(_timed("no_path_raises", 0.0, lambda: (check_no_path(seed), 1, "")))
    return report


__all__ = [
    "FAULTS", "PropertyResult", "VerifyReport", "VerifySettings", "Instance", "random_instance",
    "random_inventory", "random_streams", "oracle_instances", "check_oracle", "check_gradients",
    "check_reductions", "check_decoder", "check_no_path", "random_bigram_lm", "run_suite",
]
