"""Run configuration and its line-oriented ``key = value`` file format.

Sections are ``[model]``, ``[tfr]``, ``[train]``, ``[data]`` and ``[loss]``.
Lines are blank, ``#``/``;`` comments, section headers or assignments;
anything else, and any unknown key, is a :class:`ConfigError`.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .losses import LossWeights
from .model import ModelConfig

# Default (lambda1, lambda2, lambda3) per binary target.
TARGET_LAMBDAS = {
    "valence": (0.2, 0.1, 0.6),
    "arousal": (0.1, 0.1, 0.6),
}


@dataclass
class TFRConfig:
    gamma: float = 3.0
    beta: float = 20.0
    voices_per_octave: int = 16
    f_lo_hz: float = 0.05
    f_hi_hz: float = 5.0


@dataclass
class DataConfig:
    target: str = "arousal"
    threshold: float = 5.0
    clip_seconds: float = 5.0
    val_fraction: float = 0.2


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 0.01
    epochs: int = 100
    batch_size: int = 32
    schedule: str = "cosine"
    seed: int = 0
    eval_mode: str = "invariant"
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.schedule not in ("cosine", "constant"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.eval_mode not in ("invariant", "train"):
            raise ConfigError(f"unknown eval_mode {self.eval_mode!r}")


@dataclass
class LossConfig:
    lambda1: float | None = None
    lambda2: float | None = None
    lambda3: float | None = None
    normalization: str = "mean"
    use_sub_loss: bool = True


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    tfr: TFRConfig = field(default_factory=TFRConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    loss: LossConfig = field(default_factory=LossConfig)

    SECTIONS = ("model", "tfr", "train", "data", "loss")

    def loss_weights(self) -> LossWeights:
        defaults = TARGET_LAMBDAS.get(self.data.target, TARGET_LAMBDAS["arousal"])
        given = (self.loss.lambda1, self.loss.lambda2, self.loss.lambda3)
        return LossWeights(*(d if g is None else g for g, d in zip(given, defaults)))

    def to_map(self) -> dict:
        out = {}
        for sec in self.SECTIONS:
            obj = getattr(self, sec)
            out[sec] = {
                f.name: _format(getattr(obj, f.name))
                for f in fields(obj)
                if getattr(obj, f.name) is not None
            }
        return out

    @classmethod
    def from_map(cls, m: dict) -> "RunConfig":
        kwargs = {}
        for sec in cls.SECTIONS:
            proto = cls.__dataclass_fields__[sec].default_factory()
            types = {f.name: type(getattr(proto, f.name)) for f in fields(proto)}
            values = {}
            for key, raw in m.get(sec, {}).items():
                if key not in types:
                    raise ConfigError(f"unknown key {key!r} in [{sec}]")
                values[key] = _coerce(raw, types[key], f"[{sec}] {key}")
            try:
                kwargs[sec] = dataclasses.replace(proto, **values)
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc)) from exc
        for sec in m:
            if sec not in cls.SECTIONS:
                raise ConfigError(f"unknown section [{sec}]")
        cfg = cls(**kwargs)
        try:
            cfg.model.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if cfg.data.target not in TARGET_LAMBDAS:
            raise ConfigError(f"unknown target {cfg.data.target!r}")
        return cfg


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _coerce(raw: str, typ, where: str):
    try:
        if typ is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ is int:
            return int(raw)
        if typ is float or typ is type(None):
            return float(raw)
        if typ is tuple:
            return tuple(int(v) for v in raw.split(","))
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from exc


def parse_config_text(text: str) -> dict:
    """Parse into ``{section: {key: raw_string}}``."""
    out: dict = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            if not section:
                raise ConfigError(f"line {lineno}: empty section name")
            out.setdefault(section, {})
            continue
        if "=" not in s:
            raise ConfigError(f"line {lineno}: expected key = value, got {s!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: assignment outside a section")
        key, _, value = s.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out[section]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[section][key] = value.strip()
    return out


def serialize_config_map(m: dict) -> str:
    lines = []
    for sec, items in m.items():
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {v}" for k, v in items.items())
        lines.append("")
    return "\n".join(lines)


def load_config(path) -> RunConfig:
    return RunConfig.from_map(parse_config_text(Path(path).read_text()))


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(serialize_config_map(cfg.to_map()))
