"""From-scratch full-sum training of the windowed encoder."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..core import PhonemeInventory, ScaleSet, Utterance, phonemize, Lexicon
from ..fullsum import NoPathError, VARIANT_STREAMS, canonical_variant, sequence_loss
from ..topology import Transitions
from . import checkpoint as ckpt_io
from .checkpoint import Checkpoint
from .encoder import EncoderConfig, EncoderParams, backward, encode_batch, init_params
from .optim import NAdam, clip_global_norm, constant_then_decay, oclr_schedule

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "hmm_factored_lcr"
    scales: ScaleSet = ScaleSet()
    epochs: int = 10
    batch_size: int = 16
    peak_lr: float = 6e-4
    final_lr: float = 1e-6
    warmup_frac: float = 0.45
    cycle_frac: float = 0.9
    schedule: str = "oclr"          # "oclr" | "constant"
    constant_lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0
    seed: int = 0
    hidden: tuple[int, ...] = (512, 512)
    context: int = 4
    stride: int = 4
    silence: str = "optional"
    silence_context: str = "boundary"
    transitions: Transitions = Transitions()
    init_checkpoint: str | None = None
    reset_moments: bool = True
    prior_decay: float = 0.99
    threads: int = 1
    max_no_path_rate: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "loss", canonical_variant(self.loss))
        self.scales.require_training()
        if not (0 < self.warmup_frac < 1 and 0 < self.cycle_frac < 1):
            raise ValueError("schedule fractions must lie in (0, 1)")
        if self.schedule not in ("oclr", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")

    @property
    def topology(self) -> str:
        return "ctc" if self.loss == "ctc" else "hmm"

    @property
    def heads(self) -> tuple[str, ...]:
        return VARIANT_STREAMS[self.loss]

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    metrics: list[dict] = field(default_factory=list)


def _utt_loss(cfg: TrainConfig, inv: PhonemeInventory, streams: dict, phi: list[str]):
    try:
        res = sequence_loss(cfg.loss, streams, phi, inv, cfg.scales, cfg.silence, cfg.transitions,
                            validate=False, silence_context=cfg.silence_context)
    except NoPathError:
        return None
    if not math.isfinite(res.loss):
        return None
    return res


def batch_loss_and_grads(params: EncoderParams, cfg: TrainConfig, inv: PhonemeInventory,
                         utts: list[Utterance], phis: list[list[str]], pool: ThreadPoolExecutor | None = None,
                         need_grad: bool = True):
    """Frame-normalized batch loss, parameter gradients and per-batch bookkeeping."""
    per_utt, cache, lengths = encode_batch(params, [u.features for u in utts], cfg.heads)
    jobs = list(zip(per_utt, phis))
    fn = lambda job: _utt_loss(cfg, inv, job[0], job[1])
    results = list(pool.map(fn, jobs)) if pool is not None else [fn(j) for j in jobs]
    total_frames = sum(lengths)
    loss_sum = 0.0
    no_path = 0
    grad_logp = {h: np.zeros_like(cache.logp[h]) for h in cfg.heads}
    off = 0
    for res, T in zip(results, lengths):
        if res is None:
            no_path += 1
        else:
            loss_sum += res.loss
            for h in cfg.heads:
                grad_logp[h][off:off + T] = res.grads[h]
        off += T
    loss = loss_sum / total_frames
    grads = None
    if need_grad:
        for h in cfg.heads:
            grad_logp[h] /= total_frames
        grads = backward(params, cache, grad_logp)
    mean_post = {h: np.exp(cache.logp[h]).mean(axis=0) for h in cfg.heads}
    return loss, grads, no_path, mean_post


def probe_loss(params: EncoderParams, cfg: TrainConfig, inv: PhonemeInventory, lex: Lexicon,
               utts: list[Utterance]) -> float:
    """Loss of ``params`` on the first batch in corpus order, no update."""
    batch = utts[:cfg.batch_size]
    phis = [phonemize(u.words, lex) for u in batch]
    return batch_loss_and_grads(params, cfg, inv, batch, phis, need_grad=False)[0]


def _init_from(params: EncoderParams, src: EncoderParams) -> list[str]:
    """Copy matching arrays; build a joint head from left+center heads when absent."""
    copied = []
    for name, arr in src.arrays.items():
        if name in params.arrays and params.arrays[name].shape == arr.shape:
            params.arrays[name] = arr.copy()
            copied.append(name)
    n = params.config.num_labels
    if ("head_joint_W" in params.arrays and "head_joint_W" not in src.arrays
            and "head_left_W" in src.arrays and "head_center_W" in src.arrays):
        wl, wc = src.arrays["head_left_W"], src.arrays["head_center_W"]
        bl, bc = src.arrays["head_left_b"], src.arrays["head_center_b"]
        params.arrays["head_joint_W"] = (wl[:, :, None] + wc[:, None, :]).reshape(wl.shape[0], -1)
        params.arrays["head_joint_b"] = (bl[:, None] + bc[None, :]).reshape(-1)
        assert params.arrays["head_joint_b"].shape == ((n + 1) * n,)
        copied += ["head_joint_W", "head_joint_b"]
    return copied


def train(cfg: TrainConfig, utts: list[Utterance], inv: PhonemeInventory, lex: Lexicon,
          out_dir: str | Path | None = None, callback: Callable[[dict], None] | None = None) -> TrainResult:
    if not utts:
        raise ValueError("training corpus is empty")
    inv = inv.with_topology(cfg.topology)
    feat_dim = utts[0].features.shape[1]
    rng = np.random.default_rng([cfg.seed, 3])
    enc_cfg = EncoderConfig(feat_dim, len(inv), cfg.heads, cfg.context, cfg.stride, cfg.hidden)
    allf = np.concatenate([u.features for u in utts], axis=0)
    params = init_params(enc_cfg, rng, feat_mean=allf.mean(0), feat_std=allf.std(0) + 1e-8)
    opt = NAdam(cfg.beta1, cfg.beta2, cfg.eps)
    metrics: list[dict] = []
    if cfg.init_checkpoint:
        src = ckpt_io.load(cfg.init_checkpoint)
        copied = _init_from(params, src.params)
        log.info("initialized %d arrays from %s", len(copied), cfg.init_checkpoint)
        if not cfg.reset_moments and src.optimizer:
            opt.step_count = src.optimizer_step
            for key, arr in src.optimizer.items():
                kind, name = key.split("/", 1)
                if name in params.arrays and params.arrays[name].shape == arr.shape:
                    (opt.m if kind == "m" else opt.v)[name] = arr.copy()
        metrics.append({"epoch": 0, "init_probe_loss": probe_loss(params, cfg, inv, lex, utts)})

    phis = [phonemize(u.words, lex) for u in utts]
    n_batches = -(-len(utts) // cfg.batch_size)
    total_steps = cfg.epochs * n_batches
    ema = {h: None for h in cfg.heads}
    step = 0
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            order = np.random.default_rng([cfg.seed, 5, epoch]).permutation(len(utts))
            loss_sum = frames = 0.0
            no_path = 0
            for b in range(n_batches):
                idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
                batch = [utts[i] for i in idx]
                if cfg.schedule == "oclr":
                    lr = oclr_schedule(step, total_steps, cfg.peak_lr, cfg.final_lr, cfg.warmup_frac,
                                       cfg.cycle_frac)
                else:
                    lr = constant_then_decay(step, total_steps, cfg.constant_lr, cfg.final_lr, cfg.cycle_frac)
                loss, grads, np_count, mean_post = batch_loss_and_grads(
                    params, cfg, inv, batch, [phis[i] for i in idx], pool)
                if not math.isfinite(loss):
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch} batch {b}")
                clip_global_norm(grads, cfg.clip_norm)
                opt.step(params.arrays, grads, lr)
                n_frames = sum(-(-u.num_frames // cfg.stride) for u in batch)
                loss_sum += loss * n_frames
                frames += n_frames
                no_path += np_count
                for h, q in mean_post.items():
                    ema[h] = q if ema[h] is None else cfg.prior_decay * ema[h] + (1 - cfg.prior_decay) * q
                step += 1
            rate = no_path / len(utts)
            row = {"epoch": epoch, "loss": loss_sum / frames, "no_path": no_path, "lr": lr,
                   "seconds": time.perf_counter() - t0}
            metrics.append(row)
            log.info("epoch %d loss %.4f no_path %d lr %.2e (%.1fs)", epoch, row["loss"], no_path, lr,
                     row["seconds"])
            if callback is not None:
                callback(row)
            if rate > cfg.max_no_path_rate:
                raise TrainingDiverged(f"no-path rate {rate:.0%} in epoch {epoch}: check T vs |phi|")
            ck = _make_checkpoint(params, cfg, epoch, metrics, opt, ema)
            if out_dir is not None:
                ckpt_io.save(ck, out_dir / f"epoch{epoch:03d}.ckpt")
    finally:
        if pool is not None:
            pool.shutdown()
    ck.stats["probe_loss"] = probe_loss(params, cfg, inv, lex, utts)
    if out_dir is not None:
        ckpt_io.save(ck, out_dir / "final.ckpt")
        with open(out_dir / "metrics.jsonl", "w") as f:
            for row in metrics:
                f.write(json.dumps(row) + "\n")
    return TrainResult(ck, metrics)


def _make_checkpoint(params, cfg, epoch, metrics, opt, ema) -> Checkpoint:
    losses = [m["loss"] for m in metrics if "loss" in m]
    optimizer = {f"m/{k}": v.copy() for k, v in opt.m.items()}
    optimizer.update({f"v/{k}": v.copy() for k, v in opt.v.items()})
    extra = {f"ema_{h}": np.asarray(v, dtype=np.float64).copy() for h, v in ema.items() if v is not None}
    return Checkpoint(params.copy(), cfg.fingerprint(), epoch,
                      {"losses": losses, "final_loss": losses[-1] if losses else None},
                      cfg.to_dict(), optimizer, opt.step_count, extra)


def config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    if "scales" in d and isinstance(d["scales"], dict):
        d["scales"] = ScaleSet(**d["scales"])
    if "transitions" in d and isinstance(d["transitions"], dict):
        d["transitions"] = Transitions(**d["transitions"])
    if "hidden" in d:
        d["hidden"] = tuple(d["hidden"])
    return TrainConfig(**d)
