"""Command-line frontend: ``simpsi fskgen|train|eval|augment|export-map|compare``.

Every command writes one JSON document to stdout and logs to stderr.
Exit codes: 0 success, 2 configuration or usage error, 3 I/O or file-format
error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any

import numpy as np

from . import augment, dsp, fsk, psi
from .errors import (
    CheckpointError,
    CheckpointMismatchError,
    ConfigError,
    DatasetError,
    NonFiniteError,
    ShapeError,
)
from .harness import (
    TrainConfig,
    compare_runs,
    evaluate,
    export_preservation_maps,
    load_checkpoint,
    psi_map_for,
    read_metrics,
    train,
    write_run,
)
from .harness.runs import CHECKPOINT_NAME
from .psi import PreservationMap, PsiMode
from .rng import RngFabric

log = logging.getLogger("simpsi")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
SEED_ENV = "SIMPSI_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _snr(value: str) -> float:
    try:
        snr = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number or 'inf': {value!r}") from None
    if math.isnan(snr) or snr == -math.inf:
        raise argparse.ArgumentTypeError(f"snr must be finite or inf, got {value!r}")
    return snr


def _nonneg_int(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {value!r}") from None
    if n < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {n}")
    return n


def _positive_int(value: str) -> int:
    n = _nonneg_int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def default_seed(flag: int | None, fallback: int | None = 0) -> int | None:
    """``--seed`` if given, else ``$SIMPSI_SEED``, else ``fallback``."""
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return fallback
    try:
        seed = int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be a non-negative integer, got {env!r}", key=SEED_ENV) from None
    if seed < 0:
        raise ConfigError(f"{SEED_ENV} must be a non-negative integer, got {env!r}", key=SEED_ENV)
    return seed


def _load_ckpt(path: str):
    p = Path(path)
    return load_checkpoint(p / CHECKPOINT_NAME if p.is_dir() else p)


def _split(dataset: fsk.FskDataset, name: str):
    if name not in dataset.splits:
        raise ConfigError(f"dataset has no split {name!r}; available: {sorted(dataset.splits)}", key="split")
    return dataset.split(name)


# commands

def cmd_fskgen(args) -> dict[str, Any]:
    seed = default_seed(args.seed)
    scheme = fsk.FskScheme.named(args.scheme, snr_db=args.snr_db, seed=seed)
    sizes = {"train": args.train, "val": args.val, "test": args.test}
    if args.jobs > 1:
        # splits draw from independent streams, so they can be built concurrently
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            parts = list(pool.map(lambda item: fsk.generate_dataset(scheme, {item[0]: item[1]}), sizes.items()))
        dataset = _join_splits(parts, scheme)
    else:
        dataset = fsk.generate_dataset(scheme, sizes)
    out = fsk.save_dataset(dataset, args.out)
    manifest = json.loads((out / "manifest.json").read_text())
    decoded = fsk.oracle_demodulate(dataset.signals, scheme)
    return {"out": str(out), "manifest": manifest, "sizes": dataset.sizes(),
            "oracle_accuracy": float(np.mean(decoded == dataset.labels))}


def _join_splits(parts: list[fsk.FskDataset], scheme: fsk.FskScheme) -> fsk.FskDataset:
    splits, start = {}, 0
    for part in parts:
        ((name, (lo, hi)),) = part.splits.items()
        splits[name] = (start, start + hi - lo)
        start += hi - lo
    return fsk.FskDataset(np.concatenate([p.signals for p in parts]), np.concatenate([p.labels for p in parts]),
                          scheme, splits)


def _read_config(path: str) -> dict[str, Any]:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", key="config") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object", key="config")
    return raw


def cmd_train(args) -> dict[str, Any]:
    raw = _read_config(args.config)
    seed = default_seed(args.seed, fallback=None)
    if seed is not None:
        raw["seed"] = seed
    data = args.data or raw.get("dataset")
    if not data:
        raise ConfigError("no dataset: pass --data or set 'dataset' in the config", key="dataset")
    raw["dataset"] = str(data)
    config = TrainConfig.from_dict(raw)
    dataset = fsk.load_dataset(data)
    log.info("training %s", json.dumps(config.to_dict(), sort_keys=True))
    ckpt, result = train(config, dataset)
    if args.baseline:
        baseline = read_metrics(args.baseline)
        if baseline.get("dataset") != dataset.scheme.to_dict():
            raise ConfigError("baseline run used a different dataset", key="baseline")
        result.delta_accuracy = result.test_accuracy - float(baseline["test_accuracy"])
    run_dir = write_run(args.out, config.to_dict(), ckpt, result, dataset_id=dataset.scheme.to_dict())
    return {"run_dir": str(run_dir), "config": config.to_dict(), "metrics": read_metrics(run_dir)}


def cmd_eval(args) -> dict[str, Any]:
    ckpt = _load_ckpt(args.ckpt)
    dataset = fsk.load_dataset(args.data)
    signals, labels = _split(dataset, args.split)
    result = evaluate(ckpt, signals, labels, jobs=args.jobs)
    return {"split": args.split, "accuracy": result.accuracy, "auprc": result.auprc,
            "per_class_auprc": result.per_class_auprc}


def cmd_augment(args) -> dict[str, Any]:
    dataset = fsk.load_dataset(args.data)
    signals, labels = _split(dataset, args.split)
    if not 0 <= args.index < len(signals):
        raise ConfigError(f"index {args.index} outside [0, {len(signals)})", key="index")
    spec = augment.AugmentSpec.parse(args.aug)
    mode = PsiMode.parse(args.psi)
    seed = default_seed(args.seed)
    x = np.asarray(signals[args.index], dtype=np.float32)
    x_f = dsp.rfft(x[None])
    fabric = RngFabric(seed)
    if args.map_value is not None:
        if not 0.0 <= args.map_value <= 1.0:
            raise ConfigError("--map-value must lie in [0, 1]", key="map_value")
        p_map = psi.constant_map(x_f.n_bins, args.map_value, batch=1)
    else:
        classifier = generator = None
        if mode in (PsiMode.SALIENCY, PsiMode.SPECTRUM_PRESERVATIVE):
            if not args.ckpt:
                raise ConfigError(f"psi mode {mode.value!r} needs --ckpt", key="ckpt")
            ckpt = _load_ckpt(args.ckpt)
            classifier = ckpt.build_classifier()
            generator = ckpt.build_generator()
            if mode is PsiMode.SPECTRUM_PRESERVATIVE and generator is None:
                raise ConfigError("checkpoint has no map generator", key="ckpt")
        p_map = psi_map_for(mode, x_f, classifier, generator, labels[args.index][None].astype(np.int64),
                            fabric.stream("random_map", "preview", args.index, lanes=1))
        if p_map.values.ndim == 1:
            p_map = PreservationMap(p_map.values[None], p_map.mode)
    donors = signals[[(args.index + 1) % len(signals)]] if spec.kind == "freq_mix" else None
    rng = fabric.stream("augment", "preview", args.index, lanes=1)
    augmented = augment.apply_batch(spec, x[None], rng, donors=donors)
    preserved = dsp.irfft(psi.mix(x_f, dsp.rfft(augmented), p_map))
    _write_series(args.out, x, augmented[0], preserved[0])
    return {"out": str(args.out), "index": args.index, "split": args.split, "augmentation": spec.to_dict(),
            "psi_mode": mode.value, "seed": seed, "map": [float(v) for v in p_map.values[0]]}


def _write_series(path: str, original: np.ndarray, augmented: np.ndarray, preserved: np.ndarray) -> None:
    channels = original.shape[0]
    names = ["original", "augmented", "preserved"]
    if channels == 1:
        header = ["t"] + names
    else:
        header = ["t"] + [f"{n}_c{c}" for c in range(channels) for n in names]
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for t in range(original.shape[1]):
            row: list[Any] = [t]
            for c in range(channels):
                row += [repr(float(original[c, t])), repr(float(augmented[c, t])), repr(float(preserved[c, t]))]
            writer.writerow(row)


def cmd_export_map(args) -> dict[str, Any]:
    ckpt = _load_ckpt(args.ckpt)
    dataset = fsk.load_dataset(args.data)
    signals, labels = _split(dataset, args.split)
    summary = export_preservation_maps(ckpt, signals, labels.astype(np.int64), args.out)
    summary.pop("mean_map")
    return {"split": args.split, **summary}


def cmd_compare(args) -> dict[str, Any]:
    delta = compare_runs(args.run, args.baseline)
    return {"run": str(args.run), "baseline": str(args.baseline), "delta_accuracy": delta}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="simpsi", description="Spectrum-preserving augmentation laboratory.")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fskgen", help="generate an FSK dataset directory")
    p.add_argument("--scheme", choices=["fsk8", "fsk32"], default="fsk8")
    p.add_argument("--train", type=_positive_int, default=fsk.DEFAULT_SIZES["train"])
    p.add_argument("--val", type=_positive_int, default=fsk.DEFAULT_SIZES["val"])
    p.add_argument("--test", type=_positive_int, default=fsk.DEFAULT_SIZES["test"])
    p.add_argument("--snr-db", type=_snr, default=10.0)
    p.add_argument("--seed", type=_nonneg_int)
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fskgen)

    p = sub.add_parser("train", help="train a classifier (and map generator) into a run directory")
    p.add_argument("--config", required=True)
    p.add_argument("--data")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=_nonneg_int)
    p.add_argument("--baseline", help="run directory of a no-augmentation run, for the accuracy increment")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--ckpt", required=True, help="checkpoint file or run directory")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("augment", help="write original, augmented and preserved views of one signal as CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="train")
    p.add_argument("--index", type=_nonneg_int, default=0)
    p.add_argument("--aug", required=True, help="augmentation spec, e.g. freq_mask:ratio=0.2")
    p.add_argument("--psi", default="none", help="psi mode")
    p.add_argument("--ckpt", help="checkpoint for saliency and spectrum_preservative modes")
    p.add_argument("--seed", type=_nonneg_int)
    p.add_argument("--map-value", type=float, help="test hook: replace the map with this constant")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("export-map", help="export per-sample preservation maps as CSV")
    p.add_argument("--ckpt", required=True, help="checkpoint file or run directory")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_map)

    p = sub.add_parser("compare", help="test-accuracy increment of one run over another")
    p.add_argument("--run", required=True)
    p.add_argument("--baseline", required=True)
    p.set_defaults(func=cmd_compare)
    return ap


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, NonFiniteError):
        return EXIT_NUMERIC
    if isinstance(exc, (UsageError, ConfigError, ShapeError, CheckpointMismatchError)):
        return EXIT_CONFIG
    if isinstance(exc, (OSError, DatasetError, CheckpointError)):
        return EXIT_IO
    return EXIT_CONFIG if isinstance(exc, ValueError) else 1


def _error_doc(exc: BaseException) -> dict[str, Any]:
    doc: dict[str, Any] = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("key", "field", "parameter", "diagnostics"):
        value = getattr(exc, attr, None)
        if value is not None:
            doc[attr] = value
    return doc


def _emit(doc: dict[str, Any]) -> None:
    json.dump(doc, sys.stdout, indent=2, sort_keys=True, default=_json_default)
    sys.stdout.write("\n")
    sys.stdout.flush()


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serialisable: {type(value).__name__}")


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        _emit(_error_doc(exc))
        return EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        doc = args.func(args)
    except Exception as exc:  # mapped onto the exit-code contract
        code = _exit_code(exc)
        if code == 1:
            raise
        log.error("%s: %s", type(exc).__name__, exc)
        _emit(_error_doc(exc))
        return code
    _emit({"command": args.command, **doc})
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
