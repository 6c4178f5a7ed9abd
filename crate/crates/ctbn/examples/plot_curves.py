#!/usr/bin/env python3
"""Plot experiment CSVs produced by `ctbn experiment`.

Usage: plot_curves.py CURVE.CSV [OUT.PNG]

Comment lines starting with '#' are skipped. The first column is used as
the x axis and the last column as the y axis; for error curves both axes
are drawn on log scales.
"""
import csv
import sys

import matplotlib.pyplot as plt


def main() -> None:
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    path = sys.argv[1]
    out = sys.argv[2] if len(sys.argv) > 2 else path.rsplit(".", 1)[0] + ".png"

    with open(path) as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, data = rows[0], rows[1:]

    fig, ax = plt.subplots()
    if header[0] == "burnin" and len(header) >= 3:
        # one curve per burn-in value
        by_burnin = {}
        for r in data:
            by_burnin.setdefault(r[0], []).append((float(r[1]), float(r[-1])))
        for burnin, pts in sorted(by_burnin.items(), key=lambda kv: float(kv[0])):
            xs, ys = zip(*sorted(pts))
            ax.plot(xs, ys, marker="o", label=f"burn-in {burnin}")
        ax.set_xlabel(header[1])
        ax.legend()
        ax.set_xscale("log")
        ax.set_yscale("log")
    else:
        xs = [float(r[0]) for r in data]
        ys = [float(r[-1]) for r in data]
        ax.plot(xs, ys, marker="o")
        ax.set_xlabel(header[0])
    ax.set_ylabel(header[-1])
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
