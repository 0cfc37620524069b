"""Plot columns of chaoslab CSV outputs.

    python demos/plot_csv.py out/liouville/records.csv --x t --y h_rel h_rel_q --logy -o entropy.png
    python demos/plot_csv.py out/meanfield/series.csv --y free_energy

Needs matplotlib (``pip install artifact[plot]``). Reads any CSV with a
header row; nothing here imports chaoslab.
"""
import argparse
import csv
import sys

import numpy as np


def read_columns(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        sys.exit(f"{path}: no data rows")
    cols = {}
    for key in rows[0]:
        try:
            cols[key] = np.array([float(r[key]) for r in rows])
        except ValueError:
            continue  # non-numeric column (file names and the like)
    return cols


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("csv")
    p.add_argument("--x", default="t")
    p.add_argument("--y", nargs="+", help="columns to plot (default: every numeric column but x)")
    p.add_argument("--logy", action="store_true")
    p.add_argument("-o", "--output", help="image file; shows a window when omitted")
    args = p.parse_args(argv)

    import matplotlib

    if args.output:
        matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cols = read_columns(args.csv)
    if args.x not in cols:
        sys.exit(f"no numeric column {args.x!r}; have {sorted(cols)}")
    ys = args.y or [c for c in cols if c != args.x]
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in ys:
        y = cols[name]
        if args.logy:
            y = np.abs(y)
        ax.plot(cols[args.x], y, label=name)
    if args.logy:
        ax.set_yscale("log")
    ax.set_xlabel(args.x)
    ax.legend()
    fig.tight_layout()
    if args.output:
        fig.savefig(args.output, dpi=120)
    else:
        plt.show()


if __name__ == "__main__":
    main()
