"""Best-of-seeds and seed-mean validation accuracy per (model, components)
from a results.json.

    python scripts/best_of_seeds.py results/default/results.json
"""
import sys

from tnvqc import bench


def main(path):
    records = bench.load_results(path)
    agg = bench.aggregate(records)
    print(f"{'model':5} {'comps':>5} {'best sweep':>10} {'params':>6} {'mean':>7} {'best seed':>9}")
    for model in bench.MODELS:
        for k in sorted({a["components"] for a in agg}):
            rows = [a for a in agg if a["model"] == model and a["components"] == k]
            if not rows:
                continue
            top = max(rows, key=lambda a: a["val_acc_mean"])
            print(f"{model:5} {k:5d} {top['sweep']:10d} {top['param_count']:6d} "
                  f"{top['val_acc_mean']:7.4f} {bench.best_of_seeds(records, model, k):9.4f}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "results/default/results.json")
