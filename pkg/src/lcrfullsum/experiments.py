"""Desk-scale benchmark: train, decode, score and time the model variants."""

from __future__ import annotations

import dataclasses
import logging
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

from .core import ScaleSet
from .decoder.search import Beam, DecodeResult, Decoder, audio_seconds, measure_rtf
from .decoder.tree import build_prefix_tree
from .priors import transcript_pair_prior, transcript_prior
from .topology import Transitions
from .trainer.checkpoint import Checkpoint
from .trainer.encoder import EncoderParams, encode
from .trainer.metrics import WerStats, corpus_wer
from .trainer.synth import Corpus, SynthSpec, make_task, synth_corpus
from .trainer.train import TrainConfig, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecodeSettings:
    mode: str = "center"              # "center" | "diphone"
    lm_scale: float = 1.0
    prior_scale: float = 0.0
    transition_scale: float = 1.0
    beam: Beam = Beam()
    prior_silence_mass: float = 0.2
    silence: bool = True
    max_words: int | None = None


@dataclass
class EvalResult:
    wer: WerStats
    rtf: float
    results: list[DecodeResult] = field(repr=False, default_factory=list)
    wall_seconds: float = 0.0


def build_decoder(params: EncoderParams, corpus: Corpus, settings: DecodeSettings,
                  train_transcripts=None, topology: str = "hmm",
                  transitions: Transitions = Transitions()) -> Decoder:
    inv = corpus.task.inventory.with_topology(topology)
    lex = corpus.task.lexicon
    prior = None
    if settings.prior_scale != 0:
        texts = train_transcripts or [u.words for u in corpus.utterances]
        est = transcript_pair_prior if settings.mode == "diphone" else transcript_prior
        prior = est(texts, lex, inv, silence_mass=settings.prior_silence_mass)
    scales = ScaleSet(beta=settings.prior_scale, eta=settings.transition_scale, lam=settings.lm_scale)
    return Decoder(build_prefix_tree(lex, inv), corpus.task.lm, inv, scales, prior, settings.beam,
                   transitions, topology, settings.mode, settings.silence, settings.max_words)


def decode_corpus(params: EncoderParams, corpus: Corpus, settings: DecodeSettings,
                  decoder: Decoder | None = None, train_transcripts=None,
                  topology: str = "hmm", transitions: Transitions = Transitions()) -> EvalResult:
    """Decode every utterance; RTF counts encoder forward plus search."""
    dec = decoder or build_decoder(params, corpus, settings, train_transcripts, topology, transitions)
    head = "joint" if settings.mode == "diphone" else "center"
    results = []
    wall = audio = 0.0
    for utt in corpus.utterances:
        t0 = time.perf_counter()
        streams = encode(params, utt.features, heads=(head,))
        res = dec.decode(streams)
        res.wall_seconds = time.perf_counter() - t0
        res.audio_seconds = audio_seconds(utt.num_frames, subsampled=False)
        wall += res.wall_seconds
        audio += res.audio_seconds
        results.append(res)
    stats = corpus_wer((u.words, r.words) for u, r in zip(corpus.utterances, results))
    return EvalResult(stats, measure_rtf(wall, audio), results, wall)


def median_rtf(params: EncoderParams, corpus: Corpus, settings: DecodeSettings, runs: int = 5) -> float:
    dec = build_decoder(params, corpus, settings)
    return statistics.median(decode_corpus(params, corpus, settings, dec).rtf for _ in range(runs))


@dataclass(frozen=True)
class Benchmark:
    spec: SynthSpec = SynthSpec(num_phonemes=20, feat_dim=16, vocab_size=30, word_len=(2, 5),
                                utt_words=(2, 5), noise_std=1.0)
    n_train: int = 1000
    n_test: int = 200
    train_seed: int = 1
    test_seed: int = 2
    epochs: int = 12
    hidden: tuple[int, ...] = (256, 256)
    context: int = 8                      # +-8 input frames per output frame
    silence_context: str = "neighbors"    # favours the factored model; center-only ignores it
    peak_lr: float = 1e-3
    batch_size: int = 16
    decode: DecodeSettings = DecodeSettings()

    def corpora(self) -> tuple[Corpus, Corpus]:
        task = make_task(self.spec)
        return (synth_corpus(self.spec, self.train_seed, self.n_train, "train", task),
                synth_corpus(self.spec, self.test_seed, self.n_test, "test", task))

    def train_config(self, loss: str, seed: int, **kw) -> TrainConfig:
        base = dict(loss=loss, epochs=self.epochs, hidden=self.hidden, peak_lr=self.peak_lr,
                    batch_size=self.batch_size, seed=seed, context=self.context,
                    silence_context=self.silence_context)
        base.update(kw)
        return TrainConfig(**base)


def run_model(bench: Benchmark, train_c: Corpus, test_c: Corpus, loss: str, seed: int,
              mode: str = "center", out_dir: Path | None = None, **cfg_kw) -> tuple[Checkpoint, EvalResult]:
    cfg = bench.train_config(loss, seed, **cfg_kw)
    res = train(cfg, train_c.utterances, train_c.task.inventory, train_c.task.lexicon, out_dir=out_dir)
    settings = dataclasses.replace(bench.decode, mode=mode)
    ev = decode_corpus(res.checkpoint.params, test_c, settings,
                       train_transcripts=[u.words for u in train_c.utterances], topology=cfg.topology)
    log.info("%s seed %d mode %s: WER %.2f%% RTF %.4f", loss, seed, mode, ev.wer.wer, ev.rtf)
    return res.checkpoint, ev
