"""Training configuration with strict JSON parsing."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..augment import AugmentSpec
from ..errors import ConfigError
from ..models import DemodulatorConfig, MapGeneratorConfig
from ..psi import PsiMode, check_margins

_CLASSIFIER_KEYS = {f.name for f in dataclasses.fields(DemodulatorConfig)} - {
    "in_channels", "input_length", "num_symbols", "num_classes"}
_GENERATOR_KEYS = {f.name for f in dataclasses.fields(MapGeneratorConfig) if f.init} - {"in_channels", "seq_len"}


@dataclass
class TrainConfig:
    augmentation: AugmentSpec = field(default_factory=lambda: AugmentSpec("none"))
    psi_mode: PsiMode = PsiMode.NONE
    lr: float = 1e-3
    epochs: int = 50
    batch_size: int = 64
    beta1: float = 0.1
    beta2: float = 0.5
    seed: int = 0
    generator_lr: float | None = None  # None: same as lr
    eval_cadence: int = 5
    dataset: str | None = None
    classifier: dict[str, Any] = field(default_factory=dict)  # DemodulatorConfig overrides
    generator: dict[str, Any] = field(default_factory=dict)  # MapGeneratorConfig overrides

    def __post_init__(self):
        if isinstance(self.augmentation, (str, dict)):
            self.augmentation = AugmentSpec.from_dict(self.augmentation)
        self.psi_mode = PsiMode.parse(self.psi_mode)
        check_margins(self.beta1, self.beta2)
        for key in ("epochs", "batch_size", "eval_cadence"):
            value = getattr(self, key)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{key} must be an integer >= 1, got {value!r}", key=key)
        for key in ("lr", "generator_lr"):
            value = getattr(self, key)
            if value is not None and not (isinstance(value, (int, float)) and value > 0):
                raise ConfigError(f"{key} must be a positive number, got {value!r}", key=key)
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}", key="seed")
        _check_keys(self.classifier, _CLASSIFIER_KEYS, "classifier")
        _check_keys(self.generator, _GENERATOR_KEYS, "generator")

    @property
    def effective_generator_lr(self) -> float:
        return self.lr if self.generator_lr is None else self.generator_lr

    def to_dict(self) -> dict[str, Any]:
        return {
            "augmentation": self.augmentation.to_dict(),
            "psi_mode": self.psi_mode.value,
            "lr": self.lr,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "seed": self.seed,
            "generator_lr": self.effective_generator_lr,
            "eval_cadence": self.eval_cadence,
            "dataset": self.dataset,
            "classifier": dict(self.classifier),
            "generator": dict(self.generator),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object", key="config")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r}", key=unknown[0])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"invalid config: {exc}", key="config") from None

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}", key="config") from None
        return cls.from_dict(d)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def _check_keys(overrides: dict, allowed: set[str], section: str) -> None:
    if not isinstance(overrides, dict):
        raise ConfigError(f"{section} must be an object", key=section)
    unknown = sorted(set(overrides) - allowed)
    if unknown:
        raise ConfigError(f"unknown {section} setting {unknown[0]!r}", key=f"{section}.{unknown[0]}")
