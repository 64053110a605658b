"""Scree table and chart for the one-hot car data.

    python scripts/scree.py --out results/scree
"""
import argparse
from pathlib import Path

from tnvqc import bench
from tnvqc.plots import svg_line_chart


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/scree")
    ap.add_argument("--max-components", type=int, default=20)
    args = ap.parse_args()
    out = Path(args.out)
    rows = bench.emit_scree(None, args.max_components, out / "scree.csv")
    svg = svg_line_chart({"ratio": [(float(j), r) for j, r in rows]}, "Scree plot",
                         "principal component", "explained variance ratio")
    (out / "scree.svg").write_text(svg)
    cumulative = 0.0
    for j, r in rows:
        cumulative += r
        print(f"{j:2d}  {r:.4f}  cumulative {cumulative:.4f}")


if __name__ == "__main__":
    main()
