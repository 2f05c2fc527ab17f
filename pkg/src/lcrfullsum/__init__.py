"""Full-sum sequence training with factored left/center/right label contexts.

Alignment graphs, log-space forward-backward losses (CTC, posterior HMM,
factored L/C/R, joint diphone), label priors, a prefix-tree Viterbi decoder
and a small numpy training harness on synthetic corpora.
"""

from .core import (
    Lexicon, LexiconError, PhonemeInventory, ScaleSet, Utterance, context_labels,
    parse_inventory, parse_lexicon, phonemize,
)
from .fullsum import (
    LOSS_VARIANTS, LossResult, NoPathError, Occupancies, bruteforce_loss, ctc_loss_grad,
    diphone_loss_grad, factored_loss_grad, forward_backward, hmm_fullsum_loss_grad, sequence_loss,
)
from .priors import Prior, transcript_pair_prior, transcript_prior
from .topology import AlignmentGraph, Transitions, build_ctc_fsa, build_hmm_fsa, enumerate_paths

__version__ = "0.1.0"
