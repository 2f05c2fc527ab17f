"""Prefix-tree Viterbi decoding, n-gram LMs and forced alignment."""

from .align import Alignment, force_align, viterbi
from .lm import ArpaFormatError, NGramLM, load_arpa, lm_score, write_arpa
from .search import (
    Beam, DecodeResult, Decoder, audio_seconds, corpus_rtf, exhaustive_decode, measure_rtf, viterbi_decode,
)
from .tree import PrefixTree, build_prefix_tree
