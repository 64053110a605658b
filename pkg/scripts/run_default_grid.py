"""Run the default experiment grid (components 2/5/10/16, TN ranks 1-8, VQC
layers 1-6, seeds 0-2) and write results plus plot data.

    python scripts/run_default_grid.py --out results/default --workers 1
"""
import argparse
import logging

from tnvqc import bench


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/default")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--timing", action="store_true", help="put wall-clock seconds in results.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = bench.ExperimentConfig(out_dir=args.out, workers=args.workers, record_timing=args.timing)
    records = bench.run_grid(cfg)
    for t in bench.trend_check(records):
        print(f"{t['components']:2d} components: TN {t['best_tn']:.4f}  VQC {t['best_vqc']:.4f}  [{t['status']}]")


if __name__ == "__main__":
    main()
