"""Versioned binary checkpoints.

Layout: ``LFSM1`` magic, little-endian uint64 header length, UTF-8 JSON
header, then each array's raw little-endian bytes in header order.
"""

from __future__ import annotations

import dataclasses
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .encoder import EncoderConfig, EncoderParams

MAGIC = b"LFSM1"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    params: EncoderParams
    config_fingerprint: str
    epoch: int
    stats: dict[str, Any] = field(default_factory=dict)
    train_config: dict[str, Any] = field(default_factory=dict)
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)   # "m/<name>", "v/<name>"
    optimizer_step: int = 0
    extra: dict[str, np.ndarray] = field(default_factory=dict)       # e.g. EMA priors


def _arrays(ckpt: Checkpoint) -> list[tuple[str, np.ndarray]]:
    out = [(f"param/{k}", v) for k, v in ckpt.params.arrays.items()]
    out += [(f"opt/{k}", v) for k, v in ckpt.optimizer.items()]
    out += [(f"extra/{k}", v) for k, v in ckpt.extra.items()]
    return out


def dumps(ckpt: Checkpoint) -> bytes:
    arrays = _arrays(ckpt)
    header = {
        "version": 1,
        "encoder": dataclasses.asdict(ckpt.params.config),
        "config_fingerprint": ckpt.config_fingerprint,
        "epoch": ckpt.epoch,
        "stats": ckpt.stats,
        "train_config": ckpt.train_config,
        "optimizer_step": ckpt.optimizer_step,
        "arrays": [{"name": n, "shape": list(a.shape), "dtype": np.dtype(a.dtype).newbyteorder("<").str}
                   for n, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<Q", len(blob)))
    buf.write(blob)
    for _, a in arrays:
        buf.write(np.ascontiguousarray(a, dtype=np.dtype(a.dtype).newbyteorder("<")).tobytes())
    return buf.getvalue()


def loads(data: bytes) -> Checkpoint:
    if not data.startswith(MAGIC):
        raise CheckpointError("not a checkpoint (bad magic)")
    off = len(MAGIC)
    (hlen,) = struct.unpack_from("<Q", data, off)
    off += 8
    header = json.loads(data[off:off + hlen].decode())
    off += hlen
    if header.get("version") != 1:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
    enc = header["encoder"]
    for key in ("heads", "hidden"):
        enc[key] = tuple(enc[key])
    params = EncoderParams(EncoderConfig(**enc))
    opt, extra = {}, {}
    for spec in header["arrays"]:
        dt = np.dtype(spec["dtype"])
        n = int(np.prod(spec["shape"], dtype=np.int64)) * dt.itemsize
        arr = np.frombuffer(data, dtype=dt, count=n // dt.itemsize, offset=off).reshape(spec["shape"])
        arr = arr.astype(dt.newbyteorder("="), copy=True)
        off += n
        kind, name = spec["name"].split("/", 1)
        {"param": params.arrays, "opt": opt, "extra": extra}[kind][name] = arr
    if off != len(data):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return Checkpoint(params, header["config_fingerprint"], header["epoch"], header["stats"],
                      header["train_config"], opt, header["optimizer_step"], extra)


def save(ckpt: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(dumps(ckpt))


def load(path: str | Path) -> Checkpoint:
    return loads(Path(path).read_bytes())
