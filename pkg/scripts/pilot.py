"""Small pilot: 200 utterances, 8 phonemes, factored loss, 30 epochs.

Prints the loss curve, forced-alignment frame accuracy against the generating
phonemes (silence excluded) and the left-head entropy on held-out data.

    python3 scripts/pilot.py [--loss hmm_factored_lcr] [--epochs 30] [--silence-context boundary]
"""

import argparse
import math

import numpy as np

from lcrfullsum.core import phonemize
from lcrfullsum.decoder import force_align
from lcrfullsum.trainer.encoder import encode
from lcrfullsum.trainer.synth import SynthSpec, phoneme_targets, synth_corpus
from lcrfullsum.trainer.train import TrainConfig, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--loss", default="hmm_factored_lcr")
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--context", type=int, default=4)
    ap.add_argument("--silence-context", default="boundary")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = SynthSpec(num_phonemes=8, vocab_size=12, noise_std=0.5)
    corpus = synth_corpus(spec, 1, 200, "train")
    held = synth_corpus(spec, 2, 40, "held", corpus.task)
    cfg = TrainConfig(loss=args.loss, epochs=args.epochs, hidden=(128, 128), peak_lr=1e-3, seed=args.seed,
                      context=args.context, silence_context=args.silence_context)
    res = train(cfg, corpus.utterances, corpus.task.inventory, corpus.task.lexicon)
    losses = [m["loss"] for m in res.metrics]
    print("loss:", " ".join(f"{x:.3f}" for x in losses))
    print(f"final / first epoch loss: {losses[-1] / losses[0]:.3f}")

    inv, sil = corpus.task.inventory, spec.num_phonemes
    params = res.checkpoint.params
    hit = total = 0
    for u in corpus.utterances[:100]:
        al = force_align(encode(params, u.features), phonemize(u.words, corpus.task.lexicon), inv, cfg.scales,
                         cfg.loss, cfg.silence, cfg.transitions, cfg.silence_context)
        hyp = np.array([sil if l == inv.silence_index else int(inv.symbol(l).removesuffix("#eow")[1:])
                        for l in al.labels])
        truth = phoneme_targets(corpus, u.id)
        keep = truth != sil
        hit += int((hyp[keep] == truth[keep]).sum())
        total += int(keep.sum())
    print(f"alignment frame accuracy (non-silence): {hit / total:.3f}")
    if "left" in params.config.heads:
        ent = np.concatenate([-(np.exp(lp) * lp).sum(1) for lp in
                              (encode(params, u.features, ("left",))["left"] for u in held.utterances)])
        print(f"left-head entropy {ent.mean():.3f} nats (uniform {math.log(len(inv) + 1):.3f})")


if __name__ == "__main__":
    main()
