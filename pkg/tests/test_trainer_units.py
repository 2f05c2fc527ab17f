import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lcrfullsum.fullsum import finite_difference_grad, relative_error, sequence_loss
from lcrfullsum.trainer import checkpoint as ckpt_io
from lcrfullsum.trainer.checkpoint import Checkpoint, CheckpointError
from lcrfullsum.trainer.encoder import (
    EncoderConfig, _forward, backward, encode, encode_batch, init_params, num_output_frames, prepare_inputs,
)
from lcrfullsum.trainer.metrics import corpus_wer, wer
from lcrfullsum.trainer.optim import NAdam, clip_global_norm, constant_then_decay, oclr_schedule
from lcrfullsum.trainer.synth import SynthSpec, make_task, phoneme_targets, synth_corpus
from lcrfullsum.core import phonemize

SMALL = SynthSpec(num_phonemes=4, feat_dim=3, vocab_size=5, word_len=(1, 2), utt_words=(1, 2),
                  phone_dur=(4, 6), sil_dur=(4, 6))


# -- encoder -------------------------------------------------------------------

def test_stride_arithmetic():
    cfg = EncoderConfig(3, 5, ("center",), context=2, stride=4, hidden=(4,))
    p = init_params(cfg, np.random.default_rng(0))
    assert encode(p, np.zeros((16, 3)))["center"].shape == (4, 5)
    assert [num_output_frames(t) for t in (1, 4, 5, 17)] == [1, 1, 2, 5]


def test_zero_weights_give_uniform_posteriors():
    cfg = EncoderConfig(3, 5, ("center", "left", "right", "joint"), hidden=(4, 4))
    p = init_params(cfg, np.random.default_rng(0), zero=True)
    out = encode(p, np.random.default_rng(1).normal(size=(9, 3)))
    assert out["center"] == pytest.approx(np.full((3, 5), -math.log(5)))
    assert out["left"] == pytest.approx(np.full((3, 6), -math.log(6)))
    assert out["joint"].shape == (3, 30)


@given(st.integers(1, 40), st.integers(0, 1000))
def test_heads_are_normalized(T0, seed):
    cfg = EncoderConfig(3, 4, ("center", "left"), context=1, hidden=(5,))
    p = init_params(cfg, np.random.default_rng(seed))
    out = encode(p, np.random.default_rng(seed + 1).normal(size=(T0, 3)) * 3)
    for v in out.values():
        np.testing.assert_allclose(np.logaddexp.reduce(v, axis=1), 0.0, atol=1e-6)


def test_encoder_errors():
    cfg = EncoderConfig(3, 4, ("center",), hidden=(5,))
    p = init_params(cfg, np.random.default_rng(0))
    with pytest.raises(ValueError, match="features"):
        encode(p, np.zeros((8, 2)))
    with pytest.raises(ValueError, match="heads"):
        encode(p, np.zeros((8, 3)), heads=("left",))
    with pytest.raises(ValueError):
        EncoderConfig(3, 4, ("middle",))


def test_batch_encoding_matches_single():
    cfg = EncoderConfig(3, 4, ("center", "right"), hidden=(5,))
    p = init_params(cfg, np.random.default_rng(0))
    feats = [np.random.default_rng(k).normal(size=(n, 3)) for k, n in enumerate((7, 12, 3))]
    per, _, lengths = encode_batch(p, feats)
    assert lengths == [2, 3, 1]
    for f, got in zip(feats, per):
        single = encode(p, f)
        for h in single:
            np.testing.assert_allclose(got[h], single[h], atol=1e-12)


@pytest.mark.parametrize("variant", ["hmm_center", "hmm_factored_lcr", "diphone_joint", "ctc"])
def test_loss_through_encoder_finite_differences(variant):
    task = make_task(SMALL)
    inv = task.inventory.with_topology("ctc" if variant == "ctc" else "hmm")
    corpus = synth_corpus(SMALL, 0, 1, task=task)
    utt = corpus.utterances[0]
    phi = phonemize(utt.words, task.lexicon)
    heads = {"hmm_center": ("center",), "ctc": ("center",), "hmm_factored_lcr": ("left", "center", "right"),
             "diphone_joint": ("joint",)}[variant]
    cfg = EncoderConfig(3, len(inv), heads, context=1, stride=2, hidden=(4,))
    p = init_params(cfg, np.random.default_rng(2))
    x = prepare_inputs(p, utt.features)

    def loss_of(arrays):
        q = type(p)(cfg, arrays)
        return sequence_loss(variant, _forward(q, x, heads).logp, phi, inv, silence="optional").loss

    cache = _forward(p, x, heads)
    res = sequence_loss(variant, cache.logp, phi, inv, silence="optional")
    grads = backward(p, cache, res.grads)
    for name in ("W0", f"head_{heads[0]}_W", "b0"):
        def f(v, name=name):
            return loss_of({**p.arrays, name: v})
        fd = finite_difference_grad(f, p.arrays[name], h=1e-5)
        assert relative_error(grads[name], fd) <= 1e-3, name


# -- optimizer and schedules ---------------------------------------------------

def test_oclr_points():
    total = 1000
    assert oclr_schedule(0, total) == pytest.approx(6e-5)
    assert oclr_schedule(450, total) == pytest.approx(6e-4)
    assert oclr_schedule(900, total) == pytest.approx(6e-5)
    assert oclr_schedule(total, total) == pytest.approx(1e-6)
    with pytest.raises(ValueError):
        oclr_schedule(total + 1, total)
    with pytest.raises(ValueError):
        oclr_schedule(0, total, warmup_frac=0.95)


@given(st.integers(1, 500), st.data())
def test_oclr_bounded_and_unimodal_before_tail(total, data):
    step = data.draw(st.integers(0, total))
    lr = oclr_schedule(step, total)
    assert 1e-6 - 1e-15 <= lr <= 6e-4 + 1e-15


def test_constant_then_decay():
    assert constant_then_decay(0, 100) == 5e-5
    assert constant_then_decay(90, 100) == 5e-5
    assert constant_then_decay(100, 100) == pytest.approx(1e-6)


def test_clip_global_norm():
    g = {"a": np.array([3.0, 0.0]), "b": np.array([[4.0]])}
    assert clip_global_norm(g, 1.0) == pytest.approx(5.0)
    assert math.sqrt(sum(float((v ** 2).sum()) for v in g.values())) == pytest.approx(1.0)
    g2 = {"a": np.array([0.3])}
    clip_global_norm(g2, 1.0)
    assert g2["a"][0] == 0.3


def test_nadam_minimizes_quadratic():
    opt = NAdam()
    x = {"w": np.array([3.0, -2.0])}
    for _ in range(2000):
        opt.step(x, {"w": 2 * x["w"]}, 0.01)
    assert np.abs(x["w"]).max() < 1e-2
    opt.reset()
    assert opt.step_count == 0 and not opt.m


# -- checkpoints ---------------------------------------------------------------

def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    cfg = EncoderConfig(3, 4, ("center", "left"), hidden=(5, 2))
    p = init_params(cfg, np.random.default_rng(0))
    ck = Checkpoint(p, "abc", 7, {"losses": [1.5, 0.25]}, {"loss": "hmm_center"},
                    {"m/W0": np.ones((27, 5))}, 42, {"ema_center": np.arange(4.0)})
    ckpt_io.save(ck, tmp_path / "x.ckpt")
    back = ckpt_io.load(tmp_path / "x.ckpt")
    assert ckpt_io.dumps(back) == ckpt_io.dumps(ck)
    for k, v in p.arrays.items():
        assert back.params.arrays[k].tobytes() == v.tobytes()
    assert back.epoch == 7 and back.optimizer_step == 42 and back.params.config == cfg
    data = (tmp_path / "x.ckpt").read_bytes()
    assert data[:5] == b"LFSM1"
    with pytest.raises(CheckpointError):
        ckpt_io.loads(b"XXXXX" + data[5:])
    with pytest.raises(CheckpointError):
        ckpt_io.loads(data + b"\0")


# -- WER -----------------------------------------------------------------------

def test_wer_examples():
    s = wer("a b c".split(), "a x c".split())
    assert (s.substitutions, s.insertions, s.deletions) == (1, 0, 0)
    assert s.wer == pytest.approx(100 / 3)
    assert wer(["a"], ["a"]).wer == 0.0
    s = wer(["a"], ["a", "b"])
    assert s.insertions == 1 and s.wer == 100.0
    e = wer([], ["a"])
    assert e.empty_ref and e.wer == 100.0


def test_corpus_wer_pools_counts():
    s = corpus_wer([(["a", "b"], ["a"]), (["c"], ["c", "d"])])
    assert (s.deletions, s.insertions, s.ref_len) == (1, 1, 3)


words = st.lists(st.sampled_from("abc"), max_size=6)


@given(words, words)
def test_wer_is_edit_distance(ref, hyp):
    # classic DP on counts only
    d = np.arange(len(hyp) + 1)
    for i, r in enumerate(ref, 1):
        prev, d = d, np.empty_like(d)
        d[0] = i
        for j, h in enumerate(hyp, 1):
            d[j] = min(prev[j] + 1, d[j - 1] + 1, prev[j - 1] + (r != h))
    s = wer(ref, hyp)
    assert s.errors == d[-1]
    assert s.substitutions + s.deletions <= len(ref)
    assert len(hyp) == len(ref) - s.deletions + s.insertions


# -- synthetic data ------------------------------------------------------------

def test_noise_free_frames_are_prototypes():
    spec = SynthSpec(num_phonemes=4, noise_std=0.0, coarticulation=0.0)
    c = synth_corpus(spec, 0, 3)
    for u in c.utterances:
        np.testing.assert_array_equal(u.features, c.task.prototypes[c.frame_labels[u.id]])


def test_same_seed_same_corpus():
    a, b = synth_corpus(SMALL, 4, 5), synth_corpus(SMALL, 4, 5)
    for x, y in zip(a.utterances, b.utterances):
        assert x.words == y.words and x.features.tobytes() == y.features.tobytes()
    c = synth_corpus(SMALL, 5, 5)
    assert any(x.features.shape != y.features.shape or not np.array_equal(x.features, y.features)
               for x, y in zip(a.utterances, c.utterances))


def test_labels_align_with_frames():
    c = synth_corpus(SMALL, 0, 4)
    for u in c.utterances:
        lab = c.frame_labels[u.id]
        assert len(lab) == u.num_frames
        assert lab[0] == SMALL.num_phonemes and lab[-1] == SMALL.num_phonemes
        assert len(phoneme_targets(c, u.id)) == num_output_frames(u.num_frames)


def test_invalid_spec_rejected():
    with pytest.raises(ValueError):
        SynthSpec(phone_dur=(0, 3))
    with pytest.raises(ValueError):
        synth_corpus(SMALL, 0, -1)
    assert len(synth_corpus(SMALL, 0, 0)) == 0
