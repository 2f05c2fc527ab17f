import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import log_softmax

from lcrfullsum.core import PhonemeInventory, ScaleSet
from lcrfullsum.fullsum import (
    NoPathError, bruteforce_loglik, bruteforce_loss, canonical_variant, ctc_loss_grad, diphone_loss_grad,
    dump_gamma, factored_loss_grad, finite_difference_grad, forward_backward, frame_scores,
    hmm_fullsum_loss_grad, relative_error, sequence_loss,
)
from lcrfullsum.topology import Transitions, build_ctc_fsa, build_hmm_fsa, enumerate_paths
from lcrfullsum.verify import random_instance

HMM_INV = PhonemeInventory.build(["ah", "k", "ae"], silence="SIL")
CTC_INV = PhonemeInventory(("a", "b", "-"), blank="-")
N = len(HMM_INV)


def uniform(T, n):
    return np.full((T, n), -math.log(n))


def test_single_state_single_frame():
    g = build_hmm_fsa(["ah"], HMM_INV)
    ll, occ = forward_backward(np.zeros((1, 1)), g)
    assert ll == 0.0 and occ.gamma.tolist() == [[1.0]]


def test_ctc_uniform_two_frames():
    res = ctc_loss_grad(uniform(2, 3), ["a"], CTC_INV)
    assert abs(res.loss - math.log(3)) <= 1e-12
    assert len(enumerate_paths(build_ctc_fsa(["a"], CTC_INV), 2)) == 3


def test_ctc_forced_single_frame():
    lp = np.array([[0.0, -np.inf, -np.inf]])
    res = ctc_loss_grad(lp, ["a"], CTC_INV)
    assert res.loss == 0.0
    assert res.grads["center"][0, 0] == -1.0


def test_ctc_repeated_label_too_short():
    with pytest.raises(NoPathError):
        ctc_loss_grad(uniform(2, 3), ["a", "a"], CTC_INV)
    with pytest.raises(NoPathError):
        bruteforce_loss("ctc", {"center": uniform(2, 3)}, ["a", "a"], CTC_INV)


def test_hmm_uniform_without_transitions():
    res = hmm_fullsum_loss_grad(uniform(2, N), ["k", "ae"], HMM_INV, ScaleSet(eta=0.0))
    assert res.loss == pytest.approx(2 * math.log(N), abs=1e-12)


def test_hmm_single_phoneme_loops():
    lp = np.full((3, N), -np.inf)
    lp[:, HMM_INV.index("ah")] = 0.0
    res = hmm_fullsum_loss_grad(lp, ["ah"], HMM_INV, transitions=Transitions(0.5, 0.5))
    assert res.loss == pytest.approx(-2 * math.log(0.5), abs=1e-12)


def test_hmm_zero_center_scale_only_transitions():
    rng = np.random.default_rng(0)
    phi = ["k", "ae"]
    a = hmm_fullsum_loss_grad(log_softmax(rng.normal(size=(4, N)), 1), phi, HMM_INV, ScaleSet(alpha_center=0))
    b = hmm_fullsum_loss_grad(log_softmax(rng.normal(size=(4, N)), 1), phi, HMM_INV, ScaleSet(alpha_center=0))
    assert a.loss == pytest.approx(b.loss, abs=1e-12)
    # three 4-frame paths, each taking three arcs of weight log 0.5
    assert a.loss == pytest.approx(-math.log(3 * 0.125), abs=1e-12)


def test_factored_uniform_context_shift():
    rng = np.random.default_rng(1)
    T, phi = 5, ["k", "ae#eow", "ah"]
    sc = ScaleSet(alpha_left=0.7, alpha_right=0.4)
    center = log_softmax(rng.normal(size=(T, N)), 1)
    fact = factored_loss_grad(uniform(T, N + 1), center, uniform(T, N + 1), phi, HMM_INV, sc, "optional")
    base = hmm_fullsum_loss_grad(center, phi, HMM_INV, sc, "optional")
    assert abs(fact.loss - base.loss - T * 1.1 * math.log(N + 1)) <= 1e-9
    np.testing.assert_allclose(fact.occupancies.gamma, base.occupancies.gamma, atol=1e-12)


def test_factored_boundary_sentinels():
    rng = np.random.default_rng(2)
    streams = [log_softmax(rng.normal(size=(2, k)), 1) for k in (N + 1, N, N + 1)]
    res = factored_loss_grad(*streams, ["k", "ae"], HMM_INV)
    occ = res.occupancies
    assert occ.left[0, HMM_INV.sentinel_index] == pytest.approx(1.0)
    assert occ.right[1, HMM_INV.sentinel_index] == pytest.approx(1.0)


def test_factored_zero_context_scales_match_center():
    rng = np.random.default_rng(3)
    T, phi = 6, ["k", "ae#eow", "k"]
    streams = [log_softmax(rng.normal(size=(T, k)), 1) for k in (N + 1, N, N + 1)]
    sc = ScaleSet(alpha_left=0, alpha_right=0, eta=0.7)
    a = factored_loss_grad(*streams, phi, HMM_INV, sc, "optional")
    b = hmm_fullsum_loss_grad(streams[1], phi, HMM_INV, sc, "optional")
    assert abs(a.loss - b.loss) <= 1e-12
    assert not a.grads["left"].any() and not a.grads["right"].any()


def test_diphone_separable_joint():
    rng = np.random.default_rng(4)
    T, phi = 5, ["k", "ae"]
    center = log_softmax(rng.normal(size=(T, N)), 1)
    joint = (center[:, None, :] - math.log(N + 1)).repeat(N + 1, axis=1).reshape(T, -1)
    sc = ScaleSet(alpha_center=0.8)
    a = diphone_loss_grad(joint, phi, HMM_INV, sc)
    b = hmm_fullsum_loss_grad(center, phi, HMM_INV, sc)
    assert a.loss == pytest.approx(b.loss + T * 0.8 * math.log(N + 1), abs=1e-10)


def test_diphone_one_hot_forced_path():
    joint = np.full((2, (N + 1) * N), -np.inf)
    k, ae, sent = HMM_INV.index("k"), HMM_INV.index("ae"), HMM_INV.sentinel_index
    joint[0, sent * N + k] = 0.0
    joint[1, k * N + ae] = 0.0
    res = diphone_loss_grad(joint, ["k", "ae"], HMM_INV, ScaleSet(eta=1.3))
    assert res.loss == pytest.approx(-1.3 * math.log(0.5), abs=1e-12)


def test_bruteforce_matches_ctc_ab():
    rng = np.random.default_rng(5)
    lp = log_softmax(rng.normal(size=(4, 3)), 1)
    assert ctc_loss_grad(lp, ["a", "b"], CTC_INV).loss == pytest.approx(
        bruteforce_loss("ctc", {"center": lp}, ["a", "b"], CTC_INV), rel=1e-12)


def test_unnormalized_stream_rejected():
    with pytest.raises(ValueError, match="normalized"):
        hmm_fullsum_loss_grad(np.zeros((3, N)), ["k"], HMM_INV)
    with pytest.raises(ValueError, match="stream"):
        hmm_fullsum_loss_grad(uniform(3, N + 2), ["k"], HMM_INV)


def test_prior_rejected_in_training():
    with pytest.raises(ValueError, match="beta"):
        hmm_fullsum_loss_grad(uniform(3, N), ["k"], HMM_INV, ScaleSet(beta=0.3))


def test_zero_probability_path_is_not_nan():
    lp = np.full((2, N), -np.inf)
    lp[:, HMM_INV.index("ah")] = 0.0
    res = hmm_fullsum_loss_grad(lp, ["k"], HMM_INV)
    assert res.loss == math.inf
    assert not np.isnan(res.grads["center"]).any()


def test_variant_aliases():
    assert canonical_variant("factored_lcr") == "hmm_factored_lcr"
    assert canonical_variant("diphone") == "diphone_joint"
    with pytest.raises(ValueError):
        canonical_variant("mmi")


def test_frame_scores_prior_term():
    g = build_hmm_fsa(["k"], HMM_INV)
    lp = uniform(2, N)
    prior = np.log(np.full(N, 1.0 / N))
    s = frame_scores(g, ScaleSet(beta=1.0), {"center": lp}, prior)
    np.testing.assert_allclose(s, 0.0, atol=1e-12)


def test_dump_gamma_shape():
    res = hmm_fullsum_loss_grad(uniform(3, N), ["k", "ae"], HMM_INV)
    rows = dump_gamma(res.occupancies).splitlines()
    assert len(rows) == 3 and len(rows[0].split()) == 2


def test_finite_difference_helper():
    x = np.array([1.0, -2.0, 0.5])
    g = finite_difference_grad(lambda v: float(np.sum(v ** 3)), x)
    np.testing.assert_allclose(g, 3 * x ** 2, rtol=1e-8)
    assert relative_error(np.zeros(2), np.zeros(2)) == 0.0


variants = st.sampled_from(["ctc", "hmm_center", "hmm_factored_lcr", "diphone_joint"])


@given(variants, st.integers(0, 2 ** 32 - 1))
def test_forward_backward_matches_enumeration(variant, seed):
    inst = random_instance(np.random.default_rng(seed), variant, max_T=7)
    res = inst.loss(validate=True)
    g = res.occupancies.graph
    used = {k: inst.streams[k] for k in res.grads}
    eta = 0.0 if variant == "ctc" else inst.scales.eta
    ll, gamma = bruteforce_loglik(g, inst.scales, used, eta)
    assert abs(res.loss + ll) <= 1e-10 * max(1.0, abs(ll))
    np.testing.assert_allclose(res.occupancies.gamma, gamma, atol=1e-10)
    occ = res.occupancies
    for m in [occ.gamma, occ.center, occ.left, occ.right, occ.joint]:
        np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-9)


@given(variants, st.integers(0, 2 ** 32 - 1))
def test_gradient_matches_finite_differences(variant, seed):
    inst = random_instance(np.random.default_rng(seed), variant, max_T=5)
    res = inst.loss()
    for name, x in inst.streams.items():
        fd = finite_difference_grad(lambda v: inst.loss({**inst.streams, name: v}).loss, x)
        assert relative_error(res.grads[name], fd) <= 1e-4


@given(st.lists(st.sampled_from(["k", "ae", "ah#eow"]), min_size=1, max_size=4), st.integers(1, 6),
       st.integers(0, 1000))
def test_loss_finite_iff_paths_exist(phi, T, seed):
    lp = log_softmax(np.random.default_rng(seed).normal(size=(T, N)), 1)
    g = build_hmm_fsa(phi, HMM_INV)
    if enumerate_paths(g, T):
        assert math.isfinite(hmm_fullsum_loss_grad(lp, phi, HMM_INV).loss)
    else:
        with pytest.raises(NoPathError):
            hmm_fullsum_loss_grad(lp, phi, HMM_INV)
