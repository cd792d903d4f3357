"""Train the FSK simulation grid (augmentation x psi mode x seed) and summarise test accuracy.

Example:
    python scripts/run_simulation.py --scheme fsk32 --aug freq_mask --aug jitter \
        --psi none --psi spectrum_preservative --seeds 0 1 2 --out runs/fsk32
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from simpsi import fsk
from simpsi.harness import TrainConfig, train, write_run

log = logging.getLogger("run_simulation")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scheme", default="fsk32", choices=["fsk8", "fsk32"])
    ap.add_argument("--snr-db", type=float, default=10.0)
    ap.add_argument("--data-seed", type=int, default=0)
    ap.add_argument("--aug", action="append", default=None, help="augmentation spec, repeatable")
    ap.add_argument("--psi", action="append", default=None, help="psi mode, repeatable")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--set", action="append", default=[], help="extra config entry as key=JSON")
    ap.add_argument("--out", type=Path, required=True)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(asctime)s %(name)s %(message)s")

    scheme = fsk.FskScheme.named(args.scheme, snr_db=args.snr_db, seed=args.data_seed)
    dataset = fsk.generate_dataset(scheme)
    extra = {k: json.loads(v) for k, v in (item.split("=", 1) for item in args.set)}
    summary = {}
    for aug in args.aug or ["freq_mask"]:
        for mode in args.psi or ["none", "spectrum_preservative"]:
            accs = []
            for seed in args.seeds:
                cfg = TrainConfig(augmentation=aug, psi_mode=mode, epochs=args.epochs, seed=seed, **extra)
                t0 = time.perf_counter()
                ckpt, result = train(cfg, dataset)
                run_dir = args.out / f"{aug.replace(':', '_')}__{mode}__seed{seed}"
                write_run(run_dir, cfg.to_dict(), ckpt, result, dataset_id=scheme.to_dict())
                log.info("%s %s seed %d: acc %.4f (%.0fs)", aug, mode, seed, result.test_accuracy,
                         time.perf_counter() - t0)
                accs.append(result.test_accuracy)
            summary[f"{aug}|{mode}"] = {"seeds": args.seeds, "accuracy": accs, "mean": float(np.mean(accs)),
                                        "std": float(np.std(accs))}
            (args.out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    json.dump(summary, sys.stdout, indent=2)
    print()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
