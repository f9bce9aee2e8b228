"""Experiment configuration files.

A config is a JSON object::

    {
      "seed": 0,                      # required
      "seeds": [0, 1, 2],             # optional, defaults to [seed]
      "folds": 5,
      "train": {...TrainConfig fields except strategy and seed...},
      "model": {...ModelConfig fields except num_nodes and source_kind...},
      "synthetic": {...SyntheticConfig fields...},
      "data": {"source": "dir", "target": "dir"}
    }

Every section is optional except ``seed``.  Unknown keys anywhere are
rejected with a :class:`ConfigError` naming the dotted key path.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .data import SyntheticConfig
from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key or path."""


_TRAIN_EXCLUDED = {"strategy", "seed"}
_MODEL_EXCLUDED = {"num_nodes", "source_kind"}
_TOP_LEVEL = {"seed", "seeds", "folds", "train", "model", "synthetic", "data"}
_DATA_KEYS = {"source", "target"}


def _names(cls, excluded=frozenset()) -> set[str]:
    return {f.name for f in fields(cls)} - set(excluded)


def _check_keys(section: str, given, allowed: set[str]) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"{section}: expected an object")
    unknown = sorted(set(given) - allowed)
    if unknown:
        prefix = f"{section}." if section else ""
        raise ConfigError(f"unknown config key {prefix}{unknown[0]}")
    return given


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    seeds: tuple[int, ...]
    folds: int = 5
    train: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    synthetic: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        _check_keys("", raw, _TOP_LEVEL)
        if "seed" not in raw:
            raise ConfigError("missing required config key seed")
        seed = raw["seed"]
        if not _is_int(seed):
            raise ConfigError("seed: must be an integer")
        seeds = raw.get("seeds", [seed])
        if not isinstance(seeds, list) or not seeds or not all(_is_int(s) for s in seeds):
            raise ConfigError("seeds: must be a non-empty list of integers")
        folds = raw.get("folds", 5)
        if not _is_int(folds) or folds < 2:
            raise ConfigError("folds: must be an integer >= 2")
        train = dict(_check_keys("train", raw.get("train", {}), _names(TrainConfig, _TRAIN_EXCLUDED)))
        model = dict(_check_keys("model", raw.get("model", {}), _names(ModelConfig, _MODEL_EXCLUDED)))
        synthetic = dict(_check_keys("synthetic", raw.get("synthetic", {}), _names(SyntheticConfig)))
        data = dict(_check_keys("data", raw.get("data", {}), _DATA_KEYS))
        if "extractor_channels" in model:
            model["extractor_channels"] = tuple(model["extractor_channels"])
        config = cls(seed=seed, seeds=tuple(seeds), folds=folds, train=train, model=model,
                     synthetic=synthetic, data=data)
        # surface value errors now, naming the section
        for section, build in (("train", lambda: config.train_config("metsk")),
                               ("model", lambda: config.model_config(22)),
                               ("synthetic", config.synthetic_config)):
            try:
                build()
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{section}: {exc}") from None
        return config

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"{path}: config file not found")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw)

    def train_config(self, strategy: str, seed: int | None = None) -> TrainConfig:
        return TrainConfig(**self.train, strategy=strategy, seed=self.seed if seed is None else seed)

    def model_config(self, num_nodes: int) -> ModelConfig:
        return ModelConfig(**self.model, num_nodes=num_nodes)

    def synthetic_config(self) -> SyntheticConfig:
        return SyntheticConfig(**self.synthetic)

    def resolved(self, num_nodes: int | None = None) -> dict:
        """Every setting with defaults filled in, for provenance."""
        train = asdict(self.train_config("metsk"))
        for key in _TRAIN_EXCLUDED:
            train.pop(key)
        model = asdict(self.model_config(num_nodes or self.synthetic_config().num_nodes))
        model.pop("source_kind")
        model["extractor_channels"] = list(model["extractor_channels"])
        out = {
            "seed": self.seed,
            "seeds": list(self.seeds),
            "folds": self.folds,
            "train": train,
            "model": model,
            "data": dict(self.data),
        }
        if not self.data:
            out["synthetic"] = asdict(self.synthetic_config())
        return out
