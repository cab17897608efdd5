"""Flat TOML run configuration.

Every key must be a known field; a typo is an error rather than a silently
ignored setting.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .neural_net import DEFAULT_WIDTHS, TrainConfig
from .pipeline import ExperimentPlan
from .report import FORMATS


@dataclass(frozen=True)
class RunConfig:
    dataset_path: str = ""
    dataset_id: str = ""
    target: str = "G3"
    drop_g1_g2: bool = False
    k_max: int = 10
    kmeans_restarts: int = 10
    n_clusters: int = 0  # 0 = choose by elbow
    seeds: tuple[int, ...] = (0,)
    train_fraction: float = 0.7
    widths: tuple[int, ...] = DEFAULT_WIDTHS
    pretrain_epochs: int = 500
    finetune_epochs: int = 100
    batch_size: int = 10
    learning_rate: float = 1e-3
    shuffle_each_epoch: bool = True
    frozen_counts: tuple[int, ...] = (1, 2, 3)
    output_dir: str = "report"
    report_formats: tuple[str, ...] = ("csv", "md")
    emit_pca_scatter: bool = True
    emit_loss_curves: bool = True

    def validate(self) -> "RunConfig":
        if not self.report_formats:
            raise ConfigError("report_formats", "at least one format is required")
        bad = [f for f in self.report_formats if f not in FORMATS]
        if bad:
            raise ConfigError("report_formats", f"unknown format(s) {bad}; choose from {FORMATS}")
        if not self.seeds:
            raise ConfigError("seeds", "must be a nonempty list")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction", "must be in (0, 1)")
        for name in ("pretrain_epochs", "finetune_epochs", "batch_size", "kmeans_restarts"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate", "must be positive")
        if not self.widths or self.widths[-1] != 1:
            raise ConfigError("widths", "must be nonempty and end with 1")
        bad = [f for f in self.frozen_counts if not 1 <= f < len(self.widths)]
        if bad:
            raise ConfigError("frozen_counts",
                              f"{bad} out of range [1, {len(self.widths) - 1}]")
        if self.n_clusters == 0 and self.k_max < 3:
            raise ConfigError("k_max", "must be >= 3")
        if self.n_clusters not in (0,) and self.n_clusters < 2:
            raise ConfigError("n_clusters", "must be 0 (elbow) or >= 2")
        return self

    def plan(self) -> ExperimentPlan:
        if not self.dataset_path:
            raise ConfigError("dataset_path", "no dataset given (config key or --input)")
        return ExperimentPlan(
            dataset_path=self.dataset_path,
            dataset_id=self.dataset_id,
            target=self.target,
            drop_g1_g2=self.drop_g1_g2,
            k_max=self.k_max,
            kmeans_restarts=self.kmeans_restarts,
            n_clusters=self.n_clusters or None,
            seeds=self.seeds,
            train_fraction=self.train_fraction,
            widths=self.widths,
            pretrain=TrainConfig(self.pretrain_epochs, self.batch_size, self.learning_rate,
                                 shuffle_each_epoch=self.shuffle_each_epoch),
            finetune=TrainConfig(self.finetune_epochs, self.batch_size, self.learning_rate,
                                 shuffle_each_epoch=self.shuffle_each_epoch),
            frozen_counts=self.frozen_counts,
        )


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, value):
    kind = _TYPES[name]
    try:
        if kind == "bool":
            if not isinstance(value, bool):
                raise TypeError("expected true/false")
            return value
        if kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError("expected an integer")
            return value
        if kind == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError("expected a number")
            return float(value)
        if kind == "str":
            if not isinstance(value, str):
                raise TypeError("expected a string")
            return value
        if kind == "tuple[int, ...]":
            if not isinstance(value, list) or any(
                    isinstance(v, bool) or not isinstance(v, int) for v in value):
                raise TypeError("expected a list of integers")
            return tuple(value)
        if kind == "tuple[str, ...]":
            if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
                raise TypeError("expected a list of strings")
            return tuple(value)
    except TypeError as exc:
        raise ConfigError(name, f"{exc}, got {value!r}") from None
    raise AssertionError(f"unhandled config type {kind}")


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"invalid TOML: {exc}") from None
    values = {}
    for key, value in data.items():
        if key not in _TYPES:
            raise ConfigError(key, "unknown configuration key")
        if isinstance(value, dict):
            raise ConfigError(key, "nested tables are not allowed; the config is flat")
        values[key] = _coerce(key, value)
    cfg = RunConfig(**values)
    if base_dir is not None:
        for key in ("dataset_path", "output_dir"):
            p = getattr(cfg, key)
            if p and not Path(p).is_absolute():
                cfg = replace(cfg, **{key: str(base_dir / p)})
    return cfg.validate()


def load_config(path) -> RunConfig:
    """Read a config file; relative paths inside it resolve against its directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError("config", f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError("config", f"cannot read config file {path}: {exc}") from None
    return parse_config(text, path.parent)
