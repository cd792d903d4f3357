"""Named FSK simulation runs with an on-disk result cache.

A run is cached under a key that hashes its spec together with the package
source (the CLI excluded), so any change to the numerics invalidates old
results.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .. import fsk
from .config import TrainConfig
from .runs import read_metrics, write_run
from .training import train

log = logging.getLogger(__name__)

PACKAGE_ROOT = Path(__file__).resolve().parents[1]
_UNFINGERPRINTED = {"cli.py"}


def source_fingerprint() -> str:
    h = hashlib.sha256()
    for path in sorted(PACKAGE_ROOT.rglob("*.py")):
        rel = path.relative_to(PACKAGE_ROOT).as_posix()
        if rel in _UNFINGERPRINTED:
            continue
        h.update(rel.encode())
        h.update(path.read_bytes())
    return h.hexdigest()


@dataclass(frozen=True)
class RunSpec:
    scheme: str
    augmentation: str
    psi_mode: str
    seed: int = 0
    epochs: int = 50
    snr_db: float = 10.0
    data_seed: int = 0
    overrides: dict[str, Any] = field(default_factory=dict)

    def train_config(self) -> TrainConfig:
        return TrainConfig(augmentation=self.augmentation, psi_mode=self.psi_mode, seed=self.seed,
                           epochs=self.epochs, **self.overrides)

    def fsk_scheme(self) -> fsk.FskScheme:
        return fsk.FskScheme.named(self.scheme, snr_db=self.snr_db, seed=self.data_seed)

    def key(self) -> str:
        doc = json.dumps({"spec": dataclasses.asdict(self), "source": source_fingerprint()}, sort_keys=True)
        return hashlib.sha256(doc.encode()).hexdigest()[:16]

    def label(self) -> str:
        return f"{self.scheme}/{self.augmentation}+{self.psi_mode}/seed{self.seed}"


def trend_runs(seeds=(0, 1, 2), epochs: int = 50) -> list[RunSpec]:
    """FSK32 grid of frequency masking and jittering, each with and without the learned map."""
    return [RunSpec("fsk32", aug, mode, seed, epochs)
            for aug in ("freq_mask", "jitter")
            for mode in ("none", "spectrum_preservative")
            for seed in seeds]


def carrier_map_run(epochs: int = 50) -> RunSpec:
    return RunSpec("fsk8", "freq_mask", "spectrum_preservative", 0, epochs)


def cached_run(spec: RunSpec, cache_root: str | Path, fresh: bool = False) -> Path:
    """Run directory for ``spec``, training it unless a cached result exists."""
    run_dir = Path(cache_root) / spec.key()
    if not fresh and (run_dir / "metrics.json").exists() and (run_dir / "checkpoint.simpsi").exists():
        log.info("cached %s -> %s", spec.label(), run_dir)
        return run_dir
    scheme = spec.fsk_scheme()
    dataset = fsk.generate_dataset(scheme)
    config = spec.train_config()
    log.info("training %s", spec.label())
    ckpt, result = train(config, dataset)
    write_run(run_dir, config.to_dict(), ckpt, result, dataset_id=scheme.to_dict())
    (run_dir / "spec.json").write_text(json.dumps(dataclasses.asdict(spec), indent=2, sort_keys=True) + "\n")
    log.info("%s: test accuracy %.4f (%.0fs)", spec.label(), result.test_accuracy, result.wall_time)
    return run_dir


def run_metrics(spec: RunSpec, cache_root: str | Path, fresh: bool = False) -> dict[str, Any]:
    return read_metrics(cached_run(spec, cache_root, fresh))


__all__ = ["RunSpec", "cached_run", "carrier_map_run", "run_metrics", "source_fingerprint", "trend_runs"]
