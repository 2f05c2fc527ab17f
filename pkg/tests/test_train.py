"""Training behaviour on small synthetic tasks."""

import json
import math

import numpy as np
import pytest

from lcrfullsum.core import phonemize
from lcrfullsum.decoder import force_align
from lcrfullsum.trainer import checkpoint as ckpt_io
from lcrfullsum.trainer.encoder import encode
from lcrfullsum.trainer.synth import SynthSpec, phoneme_targets, synth_corpus
from lcrfullsum.trainer.train import TrainConfig, TrainingDiverged, batch_loss_and_grads, probe_loss, train

PILOT = SynthSpec(num_phonemes=8, vocab_size=12, noise_std=0.5)


@pytest.fixture(scope="module")
def pilot(tmp_path_factory):
    train_c = synth_corpus(PILOT, 1, 200, "train")
    held = synth_corpus(PILOT, 2, 40, "held", train_c.task)
    cfg = TrainConfig(loss="hmm_factored_lcr", epochs=30, hidden=(128, 128), peak_lr=1e-3, seed=0)
    out = tmp_path_factory.mktemp("pilot")
    res = train(cfg, train_c.utterances, train_c.task.inventory, train_c.task.lexicon, out_dir=out)
    return cfg, train_c, held, res, out


def test_pilot_loss_drops_below_quarter(pilot):
    _, _, _, res, _ = pilot
    losses = [m["loss"] for m in res.metrics]
    assert losses[-1] < 0.25 * losses[0]


def test_pilot_alignment_recovers_generating_phonemes(pilot):
    cfg, corpus, _, res, _ = pilot
    inv = corpus.task.inventory
    sil = PILOT.num_phonemes
    hit = total = 0
    for u in corpus.utterances[:100]:
        streams = encode(res.checkpoint.params, u.features)
        al = force_align(streams, phonemize(u.words, corpus.task.lexicon), inv, cfg.scales, cfg.loss,
                         cfg.silence, cfg.transitions)
        truth = phoneme_targets(corpus, u.id)
        base = np.array([int(inv.base_phonemes().index(inv.symbol(l).removesuffix("#eow")))
                         if l != inv.silence_index else sil for l in al.labels])
        keep = truth != sil
        hit += int((base[keep] == truth[keep]).sum())
        total += int(keep.sum())
    assert hit / total >= 0.90


def test_pilot_left_head_becomes_informative(pilot):
    _, corpus, held, res, _ = pilot
    n_ctx = len(corpus.task.inventory) + 1
    ent = []
    for u in held.utterances:
        lp = encode(res.checkpoint.params, u.features, heads=("left",))["left"]
        ent.append(-(np.exp(lp) * lp).sum(axis=1))
    assert np.concatenate(ent).mean() < math.log(n_ctx) - 0.5


def test_pilot_writes_checkpoints_and_metrics(pilot):
    cfg, _, _, res, out = pilot
    assert (out / "final.ckpt").exists() and (out / "epoch030.ckpt").exists()
    rows = [json.loads(l) for l in (out / "metrics.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in rows] == list(range(1, 31))
    ck = ckpt_io.load(out / "final.ckpt")
    assert ck.config_fingerprint == cfg.fingerprint()


def test_resume_reproduces_recorded_probe_loss(pilot):
    cfg, corpus, _, res, out = pilot
    ck = ckpt_io.load(out / "final.ckpt")
    again = probe_loss(ck.params, cfg, corpus.task.inventory, corpus.task.lexicon, corpus.utterances)
    assert again == ck.stats["probe_loss"]
    cfg2 = TrainConfig(loss=cfg.loss, epochs=1, hidden=cfg.hidden, init_checkpoint=str(out / "final.ckpt"),
                       schedule="constant")
    res2 = train(cfg2, corpus.utterances, corpus.task.inventory, corpus.task.lexicon)
    assert res2.metrics[0]["init_probe_loss"] == ck.stats["probe_loss"]


def test_diphone_head_initialized_from_factored(pilot):
    _, corpus, _, _, out = pilot
    cfg = TrainConfig(loss="diphone_joint", epochs=1, hidden=(128, 128), init_checkpoint=str(out / "final.ckpt"),
                      schedule="constant")
    res = train(cfg, corpus.utterances[:32], corpus.task.inventory, corpus.task.lexicon)
    scratch = TrainConfig(loss="diphone_joint", epochs=1, hidden=(128, 128), schedule="constant")
    res0 = train(scratch, corpus.utterances[:32], corpus.task.inventory, corpus.task.lexicon)
    assert res.metrics[0]["init_probe_loss"] < res0.metrics[-1]["loss"]


@pytest.mark.parametrize("loss", ["ctc", "hmm_center", "hmm_factored_lcr", "diphone_joint"])
def test_single_utterance_smoothed_loss_decreases(loss):
    spec = SynthSpec(num_phonemes=6, vocab_size=6, noise_std=0.3)
    c = synth_corpus(spec, 0, 1)
    cfg = TrainConfig(loss=loss, epochs=50, batch_size=1, hidden=(32,), peak_lr=3e-4, schedule="constant",
                      constant_lr=3e-4, cycle_frac=0.99, seed=1)
    res = train(cfg, c.utterances, c.task.inventory, c.task.lexicon)
    losses = np.array([m["loss"] for m in res.metrics])
    smooth = np.convolve(losses, np.ones(5) / 5, mode="valid")
    frac = float(np.mean(np.diff(smooth) < 0))
    assert frac >= 0.9, f"{loss}: {frac:.2f}"


def test_training_is_deterministic():
    c = synth_corpus(PILOT, 0, 24)
    cfg = TrainConfig(loss="hmm_factored_lcr", epochs=2, hidden=(16,), batch_size=8, seed=3)
    a = train(cfg, c.utterances, c.task.inventory, c.task.lexicon)
    b = train(cfg, c.utterances, c.task.inventory, c.task.lexicon)
    strip = lambda ms: [{k: v for k, v in m.items() if k != "seconds"} for m in ms]
    assert strip(a.metrics) == strip(b.metrics)
    assert ckpt_io.dumps(a.checkpoint) == ckpt_io.dumps(b.checkpoint)


def test_heads_stay_normalized_after_updates():
    c = synth_corpus(PILOT, 0, 8)
    cfg = TrainConfig(loss="hmm_factored_lcr", epochs=3, hidden=(16,), batch_size=4, peak_lr=1e-2)
    res = train(cfg, c.utterances, c.task.inventory, c.task.lexicon)
    for h, lp in encode(res.checkpoint.params, c.utterances[0].features).items():
        np.testing.assert_allclose(np.logaddexp.reduce(lp, axis=1), 0.0, atol=1e-6)


def test_empty_corpus_and_impossible_targets():
    c = synth_corpus(PILOT, 0, 4)
    cfg = TrainConfig(loss="ctc", epochs=1, hidden=(8,))
    with pytest.raises(ValueError, match="empty"):
        train(cfg, [], c.task.inventory, c.task.lexicon)
    short = [type(u)(u.id, u.features[:4], u.words) for u in c.utterances]
    with pytest.raises(TrainingDiverged, match="no-path"):
        train(cfg, short, c.task.inventory, c.task.lexicon)


def test_prior_rejected_by_config():
    from lcrfullsum.core import ScaleSet
    with pytest.raises(ValueError, match="beta"):
        TrainConfig(scales=ScaleSet(beta=0.5))
