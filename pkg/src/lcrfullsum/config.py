"""One JSON run configuration for every CLI command.

Sections map onto the library's dataclasses; unknown keys and ill-typed values
are rejected with the offending line and dotted field path.  Any field can be
overridden on the command line as ``--section.field value``.
"""

from __future__ import annotations

import dataclasses
import json
import re
import types
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .topology import Transitions
from .trainer.synth import SynthSpec
from .trainer.train import TrainConfig
from .verify import VerifySettings


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusConfig:
    n_train: int = 1000         # utterances in the train split
    n_test: int = 200           # utterances in the test split
    train_seed: int = 1
    test_seed: int = 2


@dataclass(frozen=True)
class DecodeConfig:
    mode: str = "center"         # "center" (center head) or "diphone" (joint head + pair prior)
    lm_scale: float = 1.0
    prior_scale: float = 0.0     # beta; 0 disables the prior (default for CTC too)
    transition_scale: float = 1.0
    beam_size: int | None = 1024  # histogram pruning; null disables
    beam_threshold: float = 14.0  # score pruning in nats
    prior_silence_mass: float = 0.2
    silence: bool = True         # optional silence between words
    max_words: int | None = None


@dataclass(frozen=True)
class PathsConfig:
    corpus: str = "corpus"       # directory written by `synth`
    out_dir: str = "run"         # training output / decode reports
    checkpoint: str | None = None  # defaults to <out_dir>/final.ckpt
    eval_set: str = "test"       # corpus split used by decode/align


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    synth: SynthSpec = SynthSpec()
    corpus: CorpusConfig = CorpusConfig()
    train: TrainConfig = TrainConfig()
    decode: DecodeConfig = DecodeConfig()
    verify: VerifySettings = VerifySettings()
    paths: PathsConfig = PathsConfig()

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))


# -- parsing ------------------------------------------------------------------

def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _err(text: str | None, path: str, msg: str) -> ConfigError:
    line = _line_of(text, path.rsplit(".", 1)[-1])
    where = f"line {line}: " if line else ""
    return ConfigError(f"{where}{path}: {msg}")


def _coerce(tp, value, path: str, text: str | None):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        if isinstance(value, tp):
            return value
        if not isinstance(value, dict):
            raise _err(text, path, f"expected an object, got {type(value).__name__}")
        return _build(tp, value, path, text)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None:
            if type(None) in args:
                return None
            raise _err(text, path, "may not be null")
        last = None
        for a in args:
            if a is type(None):
                continue
            try:
                return _coerce(a, value, path, text)
            except ConfigError as e:
                last = e
        raise last
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise _err(text, path, f"expected a list, got {type(value).__name__}")
        args = typing.get_args(tp)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], v, f"{path}[{i}]", text) for i, v in enumerate(value))
        if len(args) != len(value):
            raise _err(text, path, f"expected {len(args)} items, got {len(value)}")
        return tuple(_coerce(a, v, f"{path}[{i}]", text) for i, (a, v) in enumerate(zip(args, value)))
    if tp is bool:
        if not isinstance(value, bool):
            raise _err(text, path, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise _err(text, path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise _err(text, path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise _err(text, path, f"expected a string, got {value!r}")
        return value
    return value


def _build(cls, data: dict, prefix: str, text: str | None):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    for key in data:
        if key not in names:
            where = f"{prefix}.{key}" if prefix else key
            raise _err(text, where, f"unknown key (allowed: {', '.join(sorted(names))})")
    kwargs = {}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else key
        kwargs[key] = _coerce(hints[key], value, path, text)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as e:
        line = _line_of(text, prefix.rsplit(".", 1)[-1]) if prefix else None
        where = f"line {line}: " if line else ""
        raise ConfigError(f"{where}{prefix or 'config'}: {e}") from None


def parse_config(text: str) -> RunConfig:
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as e:
        raise ConfigError(f"line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError("line 1: top level must be an object")
    return _build(RunConfig, data, "", text)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config(text)


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(cfg: RunConfig, overrides: dict[str, Any]) -> RunConfig:
    """``{"train.epochs": 3, "train.scales.alpha_left": 0.5}`` -> new config."""
    data = cfg.to_dict()
    for dotted, value in overrides.items():
        keys = dotted.split(".")
        node = data
        for k in keys[:-1]:
            if not isinstance(node, dict) or k not in node or not isinstance(node[k], dict):
                raise ConfigError(f"{dotted}: unknown section {k!r}")
            node = node[k]
        if keys[-1] not in node:
            raise ConfigError(f"{dotted}: unknown key")
        node[keys[-1]] = _parse_value(value) if isinstance(value, str) else value
    return _build(RunConfig, data, "", None)


def parse_override_args(tokens: list[str]) -> dict[str, str]:
    """``["--train.epochs", "3", "--decode.mode=diphone"]`` -> {path: raw value}."""
    out: dict[str, str] = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or "." not in tok.split("=", 1)[0]:
            raise ConfigError(f"unrecognized argument {tok!r}")
        if "=" in tok:
            key, value = tok[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"{tok} needs a value")
            key, value = tok[2:], tokens[i + 1]
            i += 2
        out[key] = value
    return out


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2) + "\n"


__all__ = [
    "ConfigError", "CorpusConfig", "DecodeConfig", "PathsConfig", "RunConfig", "Transitions",
    "parse_config", "load_config", "apply_overrides", "parse_override_args", "dump_config",
]
