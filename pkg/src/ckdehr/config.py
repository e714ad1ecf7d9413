"""Run configuration: flat ``key = value`` files with dotted nested keys."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, fields

from .distill.soft_labels import STRATEGIES


class ConfigFileError(ValueError):
    pass


@dataclass
class ModelSpec:
    layers: int
    heads: int
    d_model: int
    d_ff: int


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "run"
    corpus: str = ""
    registry: str = ""
    template: str = ""
    raw_template: str = ""
    # synthetic cohort
    n_patients: int = 400
    visits_min: int = 2
    visits_max: int = 5
    planted: str = ""
    # fusion
    top_k: int = 5
    min_support: int = 3
    test_fraction: float = 0.25
    lenient: bool = False
    # models
    max_seq_len: int = 128
    teacher: ModelSpec = field(default_factory=lambda: ModelSpec(4, 4, 128, 512))
    student: ModelSpec = field(default_factory=lambda: ModelSpec(2, 2, 64, 128))
    rank: int = 4
    pooling: str = "mean"
    activation: str = "relu"
    causal: bool = False
    # training
    pretrain_epochs: int = 2
    pretrain_lr: float = 1e-3
    teacher_epochs: int = 6
    teacher_lr: float = 2e-3
    epochs: int = 10
    lr: float = 1e-3
    batch_size: int = 32
    alpha: float = 0.9
    temperature: float = 1.0
    strategy: str = "mlaph"
    sweep_alphas: tuple[float, ...] = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    # benchmark
    bench_repeats: int = 30
    bench_warmup: int = 5

    def validate(self) -> "RunConfig":
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigFileError(f"alpha must be in [0, 1], got {self.alpha}")
        if any(not 0.0 <= a <= 1.0 for a in self.sweep_alphas):
            raise ConfigFileError("every sweep alpha must be in [0, 1]")
        if self.strategy not in STRATEGIES:
            raise ConfigFileError(f"strategy must be one of {STRATEGIES}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigFileError("seed must be an unsigned 64-bit value")
        if self.bench_repeats < 30:
            raise ConfigFileError("bench_repeats must be at least 30")
        return self

    def flat(self) -> dict[str, object]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, ModelSpec):
                for g in fields(v):
                    out[f"{f.name}.{g.name}"] = getattr(v, g.name)
            else:
                out[f.name] = v
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.flat().items())

    def digest(self, exclude=("out",)) -> str:
        items = {k: v for k, v in self.flat().items() if k not in exclude}
        text = "".join(f"{k} = {_fmt(v)}\n" for k, v in sorted(items.items()))
        return hashlib.sha256(text.encode()).hexdigest()

    def set(self, key: str, raw) -> None:
        """Assign ``key`` (dotted for model specs) from a string or typed value."""
        head, _, tail = key.partition(".")
        if tail:
            spec = getattr(self, head, None)
            if not isinstance(spec, ModelSpec) or tail not in {f.name for f in fields(ModelSpec)}:
                raise ConfigFileError(f"unknown config key {key!r}")
            setattr(spec, tail, int(raw))
            return
        types = {f.name: f.type for f in fields(self)}
        if key not in types or types[key] == "ModelSpec":
            raise ConfigFileError(f"unknown config key {key!r}")
        setattr(self, key, _parse(types[key], raw, key))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _parse(kind: str, raw, key: str):
    if not isinstance(raw, str):
        return tuple(raw) if kind.startswith("tuple") else raw
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw, 0)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if kind.startswith("tuple"):
            return tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError:
        raise ConfigFileError(f"bad value {raw!r} for {key}") from None
    return raw


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        cfg.set(key.strip(), value)
    return cfg


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if not path:
        return RunConfig()
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())
