"""Train and score the benchmark models: center-only vs factored L/C/R over
three seeds, the two-stage diphone recipe, and decoding RTF.

    python3 scripts/run_benchmark.py [--seeds 0,1,2] [--epochs N] [--out bench_out]

Writes a JSON summary next to the checkpoints and prints a table.
"""

import argparse
import dataclasses
import json
import logging
import time
from pathlib import Path

from lcrfullsum.experiments import Benchmark, decode_corpus, median_rtf
from lcrfullsum.trainer.synth import Corpus
from lcrfullsum.trainer.train import train


def fit(bench, train_c, loss, seed, out, **kw):
    cfg = bench.train_config(loss, seed, **kw)
    t0 = time.perf_counter()
    res = train(cfg, train_c.utterances, train_c.task.inventory, train_c.task.lexicon, out_dir=out)
    return res.checkpoint, time.perf_counter() - t0


def score(bench, params, train_c, test_c, mode="center"):
    s = dataclasses.replace(bench.decode, mode=mode)
    return decode_corpus(params, test_c, s, train_transcripts=[u.words for u in train_c.utterances])


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--epochs", type=int)
    ap.add_argument("--out", default="bench_out")
    ap.add_argument("--skip-diphone", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    bench = Benchmark() if args.epochs is None else Benchmark(epochs=args.epochs)
    out = Path(args.out)
    train_c, test_c = bench.corpora()
    rows = []
    for seed in [int(s) for s in args.seeds.split(",")]:
        for loss in ("hmm_center", "hmm_factored_lcr"):
            ck, secs = fit(bench, train_c, loss, seed, out / f"{loss}_{seed}")
            ev = score(bench, ck.params, train_c, test_c)
            rows.append({"loss": loss, "seed": seed, "mode": "center", "wer": ev.wer.wer, "rtf": ev.rtf,
                         "train_seconds": secs, "final_loss": ck.stats["final_loss"]})
            print(f"{loss:18s} seed {seed}  WER {ev.wer.wer:6.2f}%  train {secs:5.0f}s", flush=True)

    if not args.skip_diphone:
        seed = int(args.seeds.split(",")[0])
        init_from = out / f"hmm_factored_lcr_{seed}" / "final.ckpt"
        for name, kw in (("scratch", {}), ("init", {"init_checkpoint": str(init_from), "schedule": "constant"})):
            ck, secs = fit(bench, train_c, "diphone_joint", seed, out / f"diphone_{name}_{seed}", **kw)
            ev = score(bench, ck.params, train_c, test_c, "diphone")
            rows.append({"loss": "diphone_joint", "init": name, "seed": seed, "mode": "diphone",
                         "wer": ev.wer.wer, "rtf": ev.rtf, "train_seconds": secs})
            print(f"diphone ({name:7s}) seed {seed}  WER {ev.wer.wer:6.2f}%  train {secs:5.0f}s", flush=True)
        from lcrfullsum.trainer import checkpoint as ckpt_io
        subset = Corpus(test_c.task, test_c.utterances[:50], test_c.frame_labels)
        lcr = ckpt_io.load(init_from).params
        dip = ckpt_io.load(out / f"diphone_init_{seed}" / "final.ckpt").params
        rtf = {"center_of_lcr": median_rtf(lcr, subset, dataclasses.replace(bench.decode, mode="center")),
               "diphone": median_rtf(dip, subset, dataclasses.replace(bench.decode, mode="diphone"))}
        print(f"median RTF: center {rtf['center_of_lcr']:.4f}  diphone {rtf['diphone']:.4f}")
    else:
        rtf = None

    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps({"runs": rows, "rtf": rtf}, indent=2) + "\n")


if __name__ == "__main__":
    main()
