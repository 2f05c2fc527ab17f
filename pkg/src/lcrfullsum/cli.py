"""Command-line entry points: synth, train, decode, align, score, verify.

Exit codes: 0 ok, 1 usage/config error, 2 data error, 3 numerical or no-path
failure.  Every command writes a JSON report next to its human-readable log.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import corpus_io
from .config import ConfigError, RunConfig, apply_overrides, dump_config, load_config, parse_override_args
from .core import LexiconError, ScaleSet, phonemize
from .decoder.align import force_align
from .decoder.lm import ArpaFormatError
from .decoder.search import Beam
from .experiments import DecodeSettings, build_decoder, decode_corpus
from .fullsum import NoPathError
from .trainer import checkpoint as ckpt_io
from .trainer.encoder import encode
from .trainer.metrics import WerStats, corpus_wer
from .trainer.synth import make_task, synth_corpus
from .trainer.train import TrainingDiverged, config_from_dict, train
from .verify import FAULTS, run_suite

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SUBSAMPLED_SHIFT = 0.04   # seconds per encoder output frame

log = logging.getLogger("lcrfullsum")


class UsageError(Exception):
    pass


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    if isinstance(o, float) and not math.isfinite(o):
        return repr(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _wer_dict(w: WerStats) -> dict:
    return {"wer": w.wer, "substitutions": w.substitutions, "insertions": w.insertions,
            "deletions": w.deletions, "ref_words": w.ref_len, "empty_ref": w.empty_ref}


def parse_scale_range(text: str) -> list[float]:
    """``"0.5:2.0:0.25"`` -> [0.5, 0.75, ..., 2.0] (inclusive)."""
    try:
        lo, hi, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"--lm-scales expects lo:hi:step, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise UsageError("--lm-scales needs step > 0 and hi >= lo")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + k * step, 10) for k in range(n)]


# -- commands -----------------------------------------------------------------

def cmd_synth(cfg: RunConfig, out_dir: str | Path) -> dict:
    task = make_task(cfg.synth)
    c = cfg.corpus
    splits = {"train": synth_corpus(cfg.synth, c.train_seed, c.n_train, "train", task),
              "test": synth_corpus(cfg.synth, c.test_seed, c.n_test, "test", task)}
    manifest = {"seeds": {"task": cfg.synth.task_seed, "train": c.train_seed, "test": c.test_seed},
                "config_seed": cfg.seed}
    out = corpus_io.write_corpus_dir(out_dir, splits, manifest)
    log.info("wrote corpus to %s (%d train / %d test utterances)", out, c.n_train, c.n_test)
    return corpus_io.read_manifest(out)


def _load_split(cfg: RunConfig, name: str, corpus_dir: str | None = None):
    path = Path(corpus_dir or cfg.paths.corpus)
    task = corpus_io.read_task(path)
    return corpus_io.read_split(path / name, task)


def cmd_train(cfg: RunConfig) -> dict:
    corpus = _load_split(cfg, "train")
    if not corpus.utterances:
        raise corpus_io.CorpusError("training split is empty")
    out = Path(cfg.paths.out_dir)
    t0 = time.perf_counter()
    res = train(cfg.train, corpus.utterances, corpus.task.inventory, corpus.task.lexicon, out_dir=out)
    report = {"loss": cfg.train.loss, "epochs": cfg.train.epochs, "metrics": res.metrics,
              "final_loss": res.checkpoint.stats.get("final_loss"),
              "probe_loss": res.checkpoint.stats.get("probe_loss"),
              "checkpoint": str(out / "final.ckpt"), "train_seconds": time.perf_counter() - t0,
              "config_fingerprint": res.checkpoint.config_fingerprint}
    (out / "config.json").write_text(dump_config(cfg))
    return report


def _checkpoint_path(cfg: RunConfig) -> Path:
    return Path(cfg.paths.checkpoint) if cfg.paths.checkpoint else Path(cfg.paths.out_dir) / "final.ckpt"


def _load_model(cfg: RunConfig):
    path = _checkpoint_path(cfg)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint {path} not found")
    ck = ckpt_io.load(path)
    tcfg = config_from_dict(ck.train_config) if ck.train_config else cfg.train
    return ck, tcfg


def _decode_settings(cfg: RunConfig, lm_scale: float | None = None) -> DecodeSettings:
    d = cfg.decode
    return DecodeSettings(mode=d.mode, lm_scale=d.lm_scale if lm_scale is None else lm_scale,
                          prior_scale=d.prior_scale, transition_scale=d.transition_scale,
                          beam=Beam(d.beam_size, d.beam_threshold), prior_silence_mass=d.prior_silence_mass,
                          silence=d.silence, max_words=d.max_words)


def _word_times(streams, words, corpus, tcfg, settings: DecodeSettings):
    """(word, start_s, dur_s) by forced alignment of the hypothesis."""
    if not words:
        return []
    inv = corpus.task.inventory.with_topology(tcfg.topology)
    phi = phonemize(words, corpus.task.lexicon)
    variant = "ctc" if tcfg.topology == "ctc" else (
        "diphone_joint" if settings.mode == "diphone" else "hmm_center")
    scales = ScaleSet(eta=settings.transition_scale)
    al = force_align(streams, phi, inv, scales, variant=variant,
                     silence="optional" if settings.silence else "none", transitions=tcfg.transitions)
    owner = []
    for wi, w in enumerate(words):
        owner += [wi] * len(corpus.task.lexicon[w])
    first = [None] * len(words)
    last = [None] * len(words)
    for pos, a, b in al.segments:
        if pos < 0:
            continue
        wi = owner[pos]
        first[wi] = a if first[wi] is None else min(first[wi], a)
        last[wi] = b if last[wi] is None else max(last[wi], b)
    return [(w, first[i] * SUBSAMPLED_SHIFT, (last[i] - first[i] + 1) * SUBSAMPLED_SHIFT)
            for i, w in enumerate(words)]


def cmd_decode(cfg: RunConfig, lm_scales: list[float] | None = None, ctm_path: str | Path | None = None) -> dict:
    ck, tcfg = _load_model(cfg)
    corpus = _load_split(cfg, cfg.paths.eval_set)
    settings = _decode_settings(cfg)
    head = "joint" if settings.mode == "diphone" else "center"
    if head not in ck.params.config.heads:
        raise corpus_io.CorpusError(f"checkpoint has no {head!r} head (heads: {ck.params.config.heads}); "
                                    f"pick a matching --decode.mode")
    train_texts = None
    if settings.prior_scale != 0:
        texts = corpus_io.read_transcripts(Path(cfg.paths.corpus) / "train" / "transcripts.txt")
        train_texts = list(texts.values())
    scales = lm_scales or [settings.lm_scale]
    runs = []
    best = None
    for lam in scales:
        s = dataclasses.replace(settings, lm_scale=lam)
        dec = build_decoder(ck.params, corpus, s, train_texts, tcfg.topology, tcfg.transitions)
        ev = decode_corpus(ck.params, corpus, s, dec, topology=tcfg.topology, transitions=tcfg.transitions)
        row = {"lm_scale": lam, **_wer_dict(ev.wer), "rtf": ev.rtf,
               "failed": sum(r.failed for r in ev.results)}
        runs.append(row)
        log.info("lm-scale %.3g: WER %.2f%% RTF %.4f", lam, ev.wer.wer, ev.rtf)
        if best is None or ev.wer.wer < best[1].wer.wer:
            best = (s, ev)
    s, ev = best
    ctm_lines = []
    utts = []
    for utt, res in zip(corpus.utterances, ev.results):
        streams = encode(ck.params, utt.features, heads=(head,))
        try:
            timed = _word_times(streams, list(res.words), corpus, tcfg, s)
        except NoPathError:
            timed = [(w, 0.0, 0.0) for w in res.words]
        for w, start, dur in timed:
            ctm_lines.append(f"{utt.id} 1 {start:.2f} {dur:.2f} {w}")
        utts.append({"id": utt.id, "ref": " ".join(utt.words), "hyp": " ".join(res.words),
                     "score": res.score, "rtf": res.rtf, "failed": res.failed})
    ctm = Path(ctm_path) if ctm_path else Path(cfg.paths.out_dir) / f"decode_{cfg.paths.eval_set}.ctm"
    ctm.parent.mkdir(parents=True, exist_ok=True)
    ctm.write_text("\n".join(ctm_lines) + ("\n" if ctm_lines else ""))
    return {"mode": s.mode, "lm_scale": s.lm_scale, "prior_scale": s.prior_scale,
            "transition_scale": s.transition_scale, **_wer_dict(ev.wer), "rtf": ev.rtf,
            "wall_seconds": ev.wall_seconds, "sweep": runs, "ctm": str(ctm), "utterances": utts}


def cmd_align(cfg: RunConfig, out_path: str | Path | None = None) -> dict:
    ck, tcfg = _load_model(cfg)
    corpus = _load_split(cfg, cfg.paths.eval_set)
    inv = corpus.task.inventory.with_topology(tcfg.topology)
    silence = "optional" if tcfg.silence == "optional" else "none"
    lines, correct, total = [], 0, 0
    n_base = corpus.task.spec.num_phonemes
    for utt in corpus.utterances:
        streams = encode(ck.params, utt.features, heads=tcfg.heads)
        phi = phonemize(utt.words, corpus.task.lexicon)
        al = force_align(streams, phi, inv, tcfg.scales, variant=tcfg.loss, silence=silence,
                         transitions=tcfg.transitions, silence_context=tcfg.silence_context)
        for pos, a, b in al.segments:
            sym = phi[pos] if pos >= 0 else inv.symbols[al.labels[a]]
            lines.append(f"{utt.id} 1 {a * SUBSAMPLED_SHIFT:.2f} {(b - a + 1) * SUBSAMPLED_SHIFT:.2f} {sym}")
        if utt.id in corpus.frame_labels:
            tgt = corpus.frame_labels[utt.id][::tcfg.stride]
            hyp = np.array([_base_index(inv.symbols[l], inv, n_base) for l in al.labels])
            keep = tgt != n_base
            correct += int(np.sum(hyp[keep] == tgt[keep]))
            total += int(np.sum(keep))
    out = Path(out_path) if out_path else Path(cfg.paths.out_dir) / f"align_{cfg.paths.eval_set}.ctm"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + ("\n" if lines else ""))
    return {"alignment": str(out), "utterances": len(corpus.utterances),
            "frame_accuracy": correct / total if total else None}


def _base_index(sym: str, inv, n_base: int) -> int:
    if sym in (inv.silence, inv.blank):
        return n_base
    base = sym[:-4] if inv.is_eow(sym) else sym
    return int(base[1:]) if base[1:].isdigit() else -1


def read_hypotheses(path: Path) -> dict[str, tuple[str, ...]]:
    """CTM (``utt ch start dur word``) or ``utt_id<TAB>words`` transcripts."""
    text = path.read_text()
    first = next((l for l in text.splitlines() if l.strip()), "")
    if "\t" in first or not first:
        return corpus_io.read_transcripts(path)
    out: dict[str, list[tuple[float, str]]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) < 5:
            raise corpus_io.CorpusError(f"{path}:{lineno}: expected 'utt channel start dur word'")
        out.setdefault(parts[0], []).append((float(parts[2]), parts[4]))
    return {u: tuple(w for _, w in sorted(ws, key=lambda x: x[0])) for u, ws in out.items()}


def cmd_score(ref_path: str | Path, hyp_path: str | Path) -> dict:
    refs = corpus_io.read_transcripts(Path(ref_path))
    hyps = read_hypotheses(Path(hyp_path))
    missing = [u for u in hyps if u not in refs]
    if missing:
        raise corpus_io.CorpusError(f"hypotheses for unknown utterances: {missing[:3]}")
    stats = corpus_wer((refs[u], hyps.get(u, ())) for u in refs)
    return {**_wer_dict(stats), "utterances": len(refs), "missing_hyps": sum(u not in hyps for u in refs)}


def cmd_verify(cfg: RunConfig, fault: str | None = None) -> dict:
    report = run_suite(cfg.seed, cfg.verify, fault=fault)
    print(report.format())
    d = report.to_dict()
    d["digest"] = report.digest()
    return d


# -- argument handling -------------------------------------------------------

def _common_flags(p: argparse.ArgumentParser, default) -> None:
    p.add_argument("--config", default=default, help="JSON run configuration")
    p.add_argument("--report", default=default, help="JSON report path (default: per-command location)")
    p.add_argument("--threads", type=int, default=default, help="worker threads for batch gradients")
    p.add_argument("--seed", type=int, default=default)
    p.add_argument("--print-config", action="store_true", default=default,
                   help="print the resolved config and exit")
    p.add_argument("-v", "--verbose", action="store_true", default=default)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lcrfullsum", description=__doc__.split("\n\n")[0])
    _common_flags(p, None)
    # the same flags after the subcommand; SUPPRESS keeps values given before it
    common = argparse.ArgumentParser(add_help=False)
    _common_flags(common, argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic corpus directory")
    s.add_argument("--out", help="corpus directory (default: paths.corpus)")

    t = sub.add_parser("train", parents=[common], help="full-sum training from scratch or from --init")
    t.add_argument("--corpus")
    t.add_argument("--out-dir")
    t.add_argument("--loss", help="ctc | hmm_center | hmm_factored_lcr (factored_lcr) | diphone_joint")
    t.add_argument("--init", help="checkpoint to initialize from (two-stage recipe)")
    t.add_argument("--epochs", type=int)

    for name, help_ in (("decode", "prefix-tree Viterbi decoding, CTM + WER/RTF report"),
                        ("align", "forced alignment of the eval split")):
        d = sub.add_parser(name, parents=[common], help=help_)
        d.add_argument("--corpus")
        d.add_argument("--out-dir", help="model directory (default: paths.out_dir)")
        d.add_argument("--checkpoint")
        d.add_argument("--eval-set")
        d.add_argument("--out", help="CTM output path")
        if name == "decode":
            d.add_argument("--mode", choices=("center", "diphone"))
            d.add_argument("--lm-scale", type=float)
            d.add_argument("--prior-scale", type=float)
            d.add_argument("--transition-scale", type=float)
            d.add_argument("--beam-size", type=int, help="histogram beam; 0 disables")
            d.add_argument("--beam-threshold", type=float)
            d.add_argument("--lm-scales", help="sweep lo:hi:step, report WER per scale")

    sc = sub.add_parser("score", parents=[common], help="WER of hypotheses against reference transcripts")
    sc.add_argument("--ref", required=True)
    sc.add_argument("--hyp", required=True, help="CTM or utt_id<TAB>words file")

    v = sub.add_parser("verify", parents=[common], help="run the property suite")
    v.add_argument("--fault", choices=FAULTS, help="inject a known error (suite must fail)")
    return p


def _cli_overrides(args) -> dict:
    o = {}
    pairs = {
        "seed": "seed", "threads": "train.threads", "corpus": "paths.corpus", "out_dir": "paths.out_dir",
        "loss": "train.loss", "init": "train.init_checkpoint", "epochs": "train.epochs",
        "checkpoint": "paths.checkpoint", "eval_set": "paths.eval_set", "mode": "decode.mode",
        "lm_scale": "decode.lm_scale", "prior_scale": "decode.prior_scale",
        "transition_scale": "decode.transition_scale", "beam_threshold": "decode.beam_threshold",
    }
    for attr, key in pairs.items():
        v = getattr(args, attr, None)
        if v is not None:
            o[key] = v
    if getattr(args, "beam_size", None) is not None:
        o["decode.beam_size"] = args.beam_size if args.beam_size > 0 else None
    return o


def _resolve(args, extra: list[str]) -> RunConfig:
    cfg = load_config(args.config)
    overrides = parse_override_args(extra)
    overrides.update(_cli_overrides(args))
    if args.seed is not None:
        overrides["train.seed"] = args.seed
    return apply_overrides(cfg, overrides) if overrides else cfg


def _default_report(cfg: RunConfig | None, command: str, args) -> Path | None:
    if cfg is None:
        return None
    if command == "synth":
        return Path(args.out or cfg.paths.corpus) / "synth_report.json"
    if command == "score":
        return Path(args.hyp).with_suffix(".score.json")
    return Path(cfg.paths.out_dir) / f"{command}_report.json"


def run(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    report = None
    status = EXIT_OK
    error = None
    cfg = None
    try:
        cfg = _resolve(args, extra)
        if args.print_config:
            sys.stdout.write(dump_config(cfg))
            return EXIT_OK
        cmd = args.command
        if cmd == "synth":
            report = cmd_synth(cfg, args.out or cfg.paths.corpus)
        elif cmd == "train":
            report = cmd_train(cfg)
        elif cmd == "decode":
            sweep = parse_scale_range(args.lm_scales) if args.lm_scales else None
            report = cmd_decode(cfg, sweep, args.out)
            print(f"WER {report['wer']:.2f}% RTF {report['rtf']:.4f}")
            for row in report["sweep"] if sweep else []:
                print(f"lm-scale {row['lm_scale']:g}\tWER {row['wer']:.2f}%")
        elif cmd == "align":
            report = cmd_align(cfg, args.out)
        elif cmd == "score":
            report = cmd_score(args.ref, args.hyp)
            print(f"WER {report['wer']:.2f}% ({report['substitutions']} sub, {report['insertions']} ins, "
                  f"{report['deletions']} del / {report['ref_words']} words)")
        elif cmd == "verify":
            report = cmd_verify(cfg, args.fault)
            if not report["passed"]:
                status = EXIT_NUMERIC
    except (ConfigError, UsageError) as e:
        status, error = EXIT_USAGE, e
    except (corpus_io.CorpusError, LexiconError, ArpaFormatError, ckpt_io.CheckpointError,
            FileNotFoundError, IsADirectoryError) as e:
        status, error = EXIT_DATA, e
    except (NoPathError, TrainingDiverged, FloatingPointError) as e:
        status, error = EXIT_NUMERIC, e
    if error is not None:
        log.error("%s", error)
        report = {"error": str(error), "error_type": type(error).__name__}
    if report is not None:
        report = {"command": args.command, "exit_code": status, **report}
        path = Path(args.report) if args.report else _default_report(cfg, args.command, args)
        if path is not None:
            _write_json(path, report)
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
