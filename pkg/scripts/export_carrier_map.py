"""Export test-set preservation maps of an FSK8 run and report how carrier bins rank.

Defaults to the cached FSK8 frequency-masking + spectrum-preservative run.

Example:
    python scripts/export_carrier_map.py --out results/fsk8_maps.csv
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from simpsi import fsk
from simpsi.harness import export_preservation_maps, load_run_checkpoint
from simpsi.harness.experiments import cached_run, carrier_map_run

DEFAULT_CACHE = Path(__file__).resolve().parents[1] / "results" / "acceptance"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--run", type=Path, help="run directory (default: cached FSK8 run, trained if missing)")
    ap.add_argument("--cache", type=Path, default=DEFAULT_CACHE)
    ap.add_argument("--out", type=Path, required=True, help="CSV path; a _top10.json sidecar is written next to it")
    args = ap.parse_args(argv)

    spec = carrier_map_run()
    run_dir = args.run or cached_run(spec, args.cache)
    ckpt = load_run_checkpoint(run_dir)
    scheme = fsk.FskScheme.from_dict(ckpt.metadata["scheme"])
    x, y = fsk.generate_dataset(scheme).split("test")
    summary = export_preservation_maps(ckpt, x, y.astype(np.int64), args.out)
    mean = summary.pop("mean_map")
    carriers = np.asarray(scheme.carrier_bins)
    others = np.setdiff1d(np.arange(mean.size), carriers)
    summary.update({
        "run": str(run_dir),
        "carrier_bins": carriers.tolist(),
        "carrier_mean": float(mean[carriers].mean()),
        "other_mean": float(mean[others].mean()),
        "carriers_in_top10": len(set(summary["top10_bins"]) & set(carriers.tolist())),
    })
    json.dump(summary, sys.stdout, indent=2)
    print()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
