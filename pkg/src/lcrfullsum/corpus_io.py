"""Corpus directories on disk.

Layout::

    manifest.json        seeds, synthesis spec and its hash, split sizes
    inventory.txt        base phonemes plus the ``:silence`` entry
    lexicon.txt          word<TAB>phonemes
    lm.arpa              word-level n-gram LM
    prototypes.bin       (N+1) x D float64, little-endian
    <split>/features.bin all utterances' frames, concatenated, float64 little-endian
    <split>/features.json dims, frame shift and per-utterance offsets
    <split>/transcripts.txt utt_id<TAB>words
    <split>/labels.bin   generating base-phoneme index per input frame (int32)
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .core import LexiconError, Utterance, format_inventory, format_lexicon, parse_inventory, parse_lexicon
from .decoder.lm import ArpaFormatError, load_arpa, write_arpa
from .decoder.search import FRAME_SHIFT
from .trainer.synth import Corpus, SynthSpec, SynthTask

FEAT_DTYPE = np.dtype("<f8")
LABEL_DTYPE = np.dtype("<i4")


class CorpusError(ValueError):
    """Missing or inconsistent corpus files."""


def write_split(path: Path, corpus: Corpus) -> None:
    path.mkdir(parents=True, exist_ok=True)
    utts = corpus.utterances
    dim = utts[0].features.shape[1] if utts else corpus.task.spec.feat_dim
    offsets, off = [], 0
    with open(path / "features.bin", "wb") as f:
        for u in utts:
            f.write(np.ascontiguousarray(u.features, dtype=FEAT_DTYPE).tobytes())
            offsets.append({"id": u.id, "offset": off, "frames": u.num_frames})
            off += u.num_frames
    side = {"dim": dim, "dtype": FEAT_DTYPE.str, "frame_shift": FRAME_SHIFT, "num_frames": off,
            "utterances": offsets}
    (path / "features.json").write_text(json.dumps(side, indent=1) + "\n")
    (path / "transcripts.txt").write_text("".join(f"{u.id}\t{' '.join(u.words)}\n" for u in utts))
    if corpus.frame_labels:
        labels = [np.asarray(corpus.frame_labels[u.id], dtype=LABEL_DTYPE) for u in utts]
        blob = np.concatenate(labels) if labels else np.zeros(0, LABEL_DTYPE)
        (path / "labels.bin").write_bytes(blob.tobytes())


def read_transcripts(path: Path) -> dict[str, tuple[str, ...]]:
    out: dict[str, tuple[str, ...]] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        uid, tab, words = line.partition("\t")
        if not tab:
            raise CorpusError(f"{path}:{lineno}: expected 'utt_id<TAB>words'")
        if uid in out:
            raise CorpusError(f"{path}:{lineno}: duplicate utterance id {uid!r}")
        out[uid] = tuple(words.split())
    return out


def read_split(path: Path, task: SynthTask) -> Corpus:
    if not (path / "features.json").exists():
        raise CorpusError(f"no corpus split at {path} (features.json missing)")
    side = json.loads((path / "features.json").read_text())
    dim = int(side["dim"])
    raw = np.fromfile(path / "features.bin", dtype=np.dtype(side.get("dtype", FEAT_DTYPE.str)))
    if raw.size != side["num_frames"] * dim:
        raise CorpusError(f"{path}/features.bin has {raw.size} values, sidecar implies "
                          f"{side['num_frames'] * dim}")
    feats = raw.reshape(-1, dim).astype(np.float64)
    texts = read_transcripts(path / "transcripts.txt")
    labels_path = path / "labels.bin"
    labels = np.fromfile(labels_path, dtype=LABEL_DTYPE) if labels_path.exists() else None
    utts, frame_labels = [], {}
    for row in side["utterances"]:
        uid, off, n = row["id"], row["offset"], row["frames"]
        if uid not in texts:
            raise CorpusError(f"utterance {uid!r} has features but no transcript")
        for w in texts[uid]:
            if w not in task.lexicon:
                raise CorpusError(f"utterance {uid!r}: word {w!r} not in lexicon")
        utts.append(Utterance(uid, feats[off:off + n], texts[uid]))
        if labels is not None:
            frame_labels[uid] = labels[off:off + n].astype(np.int64)
    return Corpus(task, utts, frame_labels)


def write_corpus_dir(out: str | Path, splits: dict[str, Corpus], manifest: dict) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    task = next(iter(splits.values())).task
    (out / "inventory.txt").write_text(format_inventory(task.inventory))
    (out / "lexicon.txt").write_text(format_lexicon(task.lexicon))
    (out / "lm.arpa").write_text(write_arpa(task.lm))
    (out / "prototypes.bin").write_bytes(np.ascontiguousarray(task.prototypes, dtype=FEAT_DTYPE).tobytes())
    for name, corpus in splits.items():
        write_split(out / name, corpus)
    full = dict(manifest)
    full["spec"] = dataclasses.asdict(task.spec)
    full["spec_hash"] = task.spec.fingerprint()
    full["splits"] = {name: len(c) for name, c in splits.items()}
    (out / "manifest.json").write_text(json.dumps(full, indent=2, sort_keys=True) + "\n")
    return out


def read_manifest(path: str | Path) -> dict:
    p = Path(path) / "manifest.json"
    if not p.exists():
        raise CorpusError(f"{path} is not a corpus directory (manifest.json missing)")
    return json.loads(p.read_text())


def read_task(path: str | Path) -> SynthTask:
    path = Path(path)
    manifest = read_manifest(path)
    spec_d = dict(manifest["spec"])
    for k, v in spec_d.items():
        if isinstance(v, list):
            spec_d[k] = tuple(v)
    spec = SynthSpec(**spec_d)
    try:
        inv = parse_inventory((path / "inventory.txt").read_text())
        lex = parse_lexicon((path / "lexicon.txt").read_text(), inv)
        lm = load_arpa((path / "lm.arpa").read_text())
    except FileNotFoundError as e:
        raise CorpusError(f"missing corpus file {e.filename}") from None
    except (LexiconError, ArpaFormatError) as e:
        raise CorpusError(str(e)) from None
    protos = np.fromfile(path / "prototypes.bin", dtype=FEAT_DTYPE).reshape(-1, spec.feat_dim) \
        if (path / "prototypes.bin").exists() else np.zeros((0, spec.feat_dim))
    return SynthTask(spec, inv, lex, protos, lm)


def read_corpus_dir(path: str | Path, splits=("train", "test")) -> dict[str, Corpus]:
    task = read_task(path)
    return {name: read_split(Path(path) / name, task) for name in splits}
