"""Experiment configuration: one YAML file plus ``section.key=value`` overrides.

Schema (version 1)::

    version: 1
    data:
      source: synth            # synth | csv | itch
      path: null               # directory of YYYY-MM-DD.csv / YYYY-MM-DD.itch files
      symbol: SYNTH            # used by the itch source
      synth: {...}             # SynthConfig fields, used by the synth source
    start: null                # first test day (YYYY-MM-DD), default: first eligible
    end: null                  # last test day, default: last available
    variant: level1            # full_lob | level1 | prices_only | volumes_only | prices_imbalance
    labels: {k: 20, k_prime: 20, target: r1k, window: 100, stride: 1, eval_stride: 1}
    model: {kind: nn, preset: auto, options: {}}
    train: {epochs: 10, batch_size: 64, learning_rate: 0.001, beta1: 0.9,
            beta2: 0.999, eps: 1.0e-8, seed: 0}
    train_days: 20
    scaler_days: 5
    directional_denominator: both_diverge   # or true_diverge
    workers: 1
    output_dir: runs/default

``preset: auto`` picks deeplob_full for full_lob, level1 for level1 and
slim for the two-/three-column variants.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import date
from pathlib import Path
from typing import Any

import yaml

from .features import Variant
from .labeling import LabelingPolicy, TargetKind
from .nn.model import PRESETS
from .nn.training import TrainConfig
from .synth import SynthConfig

CONFIG_VERSION = 1
SOURCES = ("synth", "csv", "itch")
AUTO_PRESETS = {
    Variant.FULL_LOB: "deeplob_full",
    Variant.LEVEL1: "level1",
    Variant.PRICES_ONLY: "slim",
    Variant.VOLUMES_ONLY: "slim",
    Variant.PRICES_IMBALANCE: "slim",
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    source: str = "synth"
    path: str | None = None
    symbol: str = "SYNTH"
    synth: SynthConfig = field(default_factory=SynthConfig)


@dataclass(frozen=True)
class LabelConfig:
    k: int = 20
    k_prime: int = 20
    target: str = "r1k"
    window: int = 100
    stride: int = 1
    eval_stride: int = 1


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "nn"
    preset: str = "auto"
    options: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    start: date | None = None
    end: date | None = None
    variant: Variant = Variant.LEVEL1
    labels: LabelConfig = field(default_factory=LabelConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    train_days: int = 20
    scaler_days: int = 5
    directional_denominator: str = "both_diverge"
    workers: int = 1
    output_dir: str = "runs/default"

    def __post_init__(self):
        problems = []
        if self.data.source not in SOURCES:
            problems.append(f"data.source must be one of {SOURCES}")
        if self.data.source != "synth" and not self.data.path:
            problems.append("data.path is required for csv and itch sources")
        if self.train_days < 1 or self.scaler_days < 1:
            problems.append("train_days and scaler_days must be >= 1")
        if self.model.kind not in ("nn", "naive"):
            problems.append("model.kind must be nn or naive")
        if self.model.kind == "nn" and self.model.preset != "auto" and self.model.preset not in PRESETS:
            problems.append(f"model.preset must be auto or one of {sorted(PRESETS)}")
        if self.model.kind == "naive" and self.labels.target != "rkk":
            problems.append("the naive model needs labels.target = rkk")
        if self.directional_denominator not in ("both_diverge", "true_diverge"):
            problems.append("directional_denominator must be both_diverge or true_diverge")
        if self.labels.eval_stride < 1:
            problems.append("labels.eval_stride must be >= 1")
        if self.workers < 1:
            problems.append("workers must be >= 1")
        if self.start and self.end and self.start > self.end:
            problems.append("start is after end")
        try:
            self.policy()
        except (ValueError, KeyError) as exc:
            problems.append(f"labels: {exc}")
        if problems:
            raise ConfigError("; ".join(problems))

    def policy(self, alpha: float | None = None) -> LabelingPolicy:
        lab = self.labels
        return LabelingPolicy(k=lab.k, k_prime=lab.k_prime, alpha=alpha,
                              target_kind=TargetKind(lab.target), window=lab.window,
                              stride=lab.stride)

    @property
    def preset_name(self) -> str:
        return AUTO_PRESETS[self.variant] if self.model.preset == "auto" else self.model.preset

    @property
    def min_days(self) -> int:
        return self.scaler_days + self.train_days + 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["data"]["synth"] = self.data.synth.to_dict()
        d["variant"] = self.variant.value
        d["start"] = self.start.isoformat() if self.start else None
        d["end"] = self.end.isoformat() if self.end else None
        return {"version": CONFIG_VERSION, **d}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def _section(cls, raw: Any, name: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{name} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def _date(value, name):
    if value is None or isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def from_dict(raw: dict) -> ExperimentConfig:
    raw = copy.deepcopy(raw or {})
    version = raw.pop("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    data = dict(raw.pop("data", None) or {})
    synth = data.pop("synth", None)
    data_cfg = _section(DataConfig, data, "data")
    if synth is not None:
        data_cfg = replace(data_cfg, synth=_section(SynthConfig, synth, "data.synth"))
    try:
        variant = Variant(raw.pop("variant", Variant.LEVEL1.value))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(
        data=data_cfg,
        start=_date(raw.pop("start", None), "start"),
        end=_date(raw.pop("end", None), "end"),
        variant=variant,
        labels=_section(LabelConfig, raw.pop("labels", None), "labels"),
        model=_section(ModelConfig, raw.pop("model", None), "model"),
        train=_section(TrainConfig, raw.pop("train", None), "train"),
        **raw,
    )


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``a.b.c=value`` strings to a raw mapping; values parse as YAML scalars."""
    raw = copy.deepcopy(raw or {})
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not key=value")
        node = raw
        *parents, leaf = key.strip().split(".")
        for p in parents:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {p} is not a section")
        node[leaf] = yaml.safe_load(value)
    return raw


def load(path: str | Path | None, overrides: list[str] | None = None) -> ExperimentConfig:
    raw = {}
    if path is not None:
        raw = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(apply_overrides(raw, overrides or []))


def dump(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
