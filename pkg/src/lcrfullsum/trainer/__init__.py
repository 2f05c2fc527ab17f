"""Synthetic corpora, a windowed numpy encoder and the full-sum training loop."""

from .checkpoint import Checkpoint, CheckpointError
from .encoder import EncoderConfig, EncoderParams, encode, init_params
from .metrics import WerStats, corpus_wer, wer
from .optim import NAdam, oclr_schedule
from .synth import Corpus, SynthSpec, make_task, synth_corpus
from .train import TrainConfig, TrainingDiverged, train
