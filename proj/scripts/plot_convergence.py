#!/usr/bin/env python3
"""Plot the two convergence curves written by `uqbench convergence`.

usage: plot_convergence.py OUT_DIR [--out FIG.png]
"""
import argparse
import csv
import pathlib

import matplotlib.pyplot as plt


def read(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))[1:]
    return [int(r[0]) for r in rows], [float(r[1]) for r in rows]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("dir", type=pathlib.Path)
    ap.add_argument("--out", type=pathlib.Path, default=None)
    args = ap.parse_args()
    fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
    for path in sorted(args.dir.glob("*_log_pdf_difference.csv")):
        a.plot(*read(path), "o-", label=path.stem.removesuffix("_log_pdf_difference"))
    for path in sorted(args.dir.glob("*_msd.csv")):
        b.plot(*read(path), "o-", label=path.stem.removesuffix("_msd"))
    a.set_title("log-pdf difference of sigma_eps")
    b.set_title("mean squared difference of sigma_eps")
    for ax in (a, b):
        ax.set_xlabel("n_e")
        ax.set_xscale("log")
        ax.legend()
    fig.tight_layout()
    if args.out:
        fig.savefig(args.out, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
