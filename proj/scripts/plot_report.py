#!/usr/bin/env python3
"""Plot the histograms in a report directory written by `uqbench evaluate` or `uqbench run`.

usage: plot_report.py REPORT_DIR [--out FIG.png]
"""
import argparse
import csv
import pathlib

import matplotlib.pyplot as plt


def read_hist(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    centers = [(float(r["bin_left"]) + float(r["bin_right"])) / 2 for r in rows]
    widths = [float(r["bin_right"]) - float(r["bin_left"]) for r in rows]
    density = [float(r["density"]) for r in rows]
    ref = [float(r["reference"]) for r in rows] if rows and "reference" in rows[0] else None
    return centers, widths, density, ref


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("report_dir", type=pathlib.Path)
    ap.add_argument("--out", type=pathlib.Path, default=None)
    args = ap.parse_args()

    nr = sorted(args.report_dir.glob("*_nr.csv"))
    se = sorted(args.report_dir.glob("*_sigma_eps.csv"))
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for path in nr:
        c, w, d, ref = read_hist(path)
        axes[0].step(c, d, where="mid", label=path.stem.removesuffix("_nr"))
        if ref is not None and path == nr[0]:
            axes[0].plot(c, ref, "k--", label="N(0, 1)")
    axes[0].set_title("normalized residuals")
    axes[0].set_xlabel("z")
    axes[0].legend()
    for path in se:
        c, w, d, _ = read_hist(path)
        axes[1].step(c, d, where="mid", label=path.stem.removesuffix("_sigma_eps"))
    axes[1].set_title("epistemic uncertainty")
    axes[1].set_xlabel("sigma_eps")
    axes[1].legend()
    fig.tight_layout()
    if args.out:
        fig.savefig(args.out, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
