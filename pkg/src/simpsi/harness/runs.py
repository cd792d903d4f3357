"""Run directories, map export and run comparison."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any

import numpy as np

from .. import dsp, psi
from ..errors import ConfigError
from ..psi import PsiMode
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .training import RunResult

CHECKPOINT_NAME = "checkpoint.simpsi"
TIMING_FIELDS = ("wall_time",)


def write_run(run_dir: str | Path, config: dict, ckpt: Checkpoint, result: RunResult,
              dataset_id: dict | None = None) -> Path:
    out = Path(run_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    metrics = result.to_dict()
    if dataset_id is not None:
        metrics["dataset"] = dataset_id
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "L_cl", "L_pc", "val_acc"])
    for epoch, (l_cl, l_pc, val) in enumerate(zip(result.train_loss, result.pc_loss, result.val_accuracy)):
        writer.writerow([epoch, repr(l_cl), "" if l_pc is None else repr(l_pc), "" if val is None else repr(val)])
    (out / "train_log.csv").write_text(buf.getvalue())
    save_checkpoint(ckpt, out / CHECKPOINT_NAME)
    return out


def read_metrics(run: str | Path) -> dict[str, Any]:
    path = Path(run)
    if path.is_dir():
        path = path / "metrics.json"
    return json.loads(path.read_text())


def comparable_metrics(metrics: dict[str, Any]) -> dict[str, Any]:
    """Metrics with wall-time fields removed (for byte-level reproducibility checks)."""
    return {k: v for k, v in metrics.items() if k not in TIMING_FIELDS}


def compare_runs(run: dict | str | Path, baseline: dict | str | Path) -> float:
    """Test-accuracy increment of ``run`` over ``baseline`` on the same dataset."""
    a = run if isinstance(run, dict) else read_metrics(run)
    b = baseline if isinstance(baseline, dict) else read_metrics(baseline)
    if a.get("dataset") != b.get("dataset"):
        raise ConfigError("runs were evaluated on different datasets", key="dataset")
    return float(a["test_accuracy"]) - float(b["test_accuracy"])


def preservation_maps(ckpt: Checkpoint, signals: np.ndarray, labels: np.ndarray | None = None) -> np.ndarray:
    """[N, F] maps for the checkpoint's psi mode (generator, magnitude or saliency)."""
    mode = PsiMode.parse(ckpt.config.get("psi_mode", "none"))
    x_f = dsp.rfft(np.asarray(signals, dtype=np.float32))
    if mode is PsiMode.SPECTRUM_PRESERVATIVE:
        generator = ckpt.build_generator()
        rows = [psi.generator_map(generator, dsp.HalfSpectrum(x_f.data[i : i + 288], x_f.origin_length)).values
                for i in range(0, len(signals), 288)]
        return np.concatenate(rows)
    if mode is PsiMode.MAGNITUDE:
        return psi.magnitude_map(x_f).values
    if mode is PsiMode.SALIENCY:
        if labels is None:
            raise ValueError("saliency maps need labels")
        return psi.saliency_map(ckpt.build_classifier(), x_f, labels).values
    raise ConfigError(f"psi_mode {mode.value!r} has no exportable map", key="psi_mode")


def top_bins(mean_map: np.ndarray, k: int = 10) -> list[int]:
    """Indices of the ``k`` largest values, largest first; ties keep the lower bin first."""
    order = np.argsort(-np.asarray(mean_map, dtype=np.float64), kind="stable")
    return [int(i) for i in order[:k]]


def export_preservation_maps(ckpt: Checkpoint, signals: np.ndarray, labels: np.ndarray | None,
                             out_csv: str | Path) -> dict[str, Any]:
    """Write one map per sample plus a MEAN row, and a top-10 JSON sidecar."""
    maps = preservation_maps(ckpt, signals, labels)
    mean = maps.astype(np.float64).mean(axis=0)
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    n_bins = maps.shape[1]
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample"] + [f"bin_{k}" for k in range(n_bins)])
        for i, row in enumerate(maps):
            writer.writerow([i] + [repr(float(v)) for v in row])
        writer.writerow(["MEAN"] + [repr(float(v)) for v in mean])
    top = top_bins(mean)
    sidecar = {"top10_bins": top, "top10_values": [float(mean[k]) for k in top], "rows": len(maps) + 1,
               "n_bins": n_bins}
    out_csv.with_name(out_csv.stem + "_top10.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    return {"csv": str(out_csv), **sidecar, "mean_map": mean}


def load_run_checkpoint(run_dir: str | Path) -> Checkpoint:
    return load_checkpoint(Path(run_dir) / CHECKPOINT_NAME)
