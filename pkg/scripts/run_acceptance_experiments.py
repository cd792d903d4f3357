"""Train (or reuse from cache) every long run the acceptance suite reads.

Example:
    python scripts/run_acceptance_experiments.py --cache results/acceptance
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from simpsi.harness.experiments import carrier_map_run, run_metrics, trend_runs

DEFAULT_CACHE = Path(__file__).resolve().parents[1] / "results" / "acceptance"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cache", type=Path, default=DEFAULT_CACHE)
    ap.add_argument("--fresh", action="store_true", help="retrain even when a cached result exists")
    ap.add_argument("--only", choices=["trend", "carrier"], help="restrict to one experiment")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(asctime)s %(name)s %(message)s")

    summary: dict[str, dict] = {}
    specs = []
    if args.only in (None, "carrier"):
        specs.append(carrier_map_run())
    if args.only in (None, "trend"):
        specs += trend_runs()
    for spec in specs:
        metrics = run_metrics(spec, args.cache, args.fresh)
        group = summary.setdefault(f"{spec.scheme}|{spec.augmentation}|{spec.psi_mode}", {"accuracy": []})
        group["accuracy"].append(metrics["test_accuracy"])
    for group in summary.values():
        group["mean"] = float(np.mean(group["accuracy"]))
    json.dump(summary, sys.stdout, indent=2)
    print()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
