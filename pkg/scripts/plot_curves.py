"""Plot test-error and training-loss curves from a sweep output directory.

Usage: python scripts/plot_curves.py SWEEP_DIR [--out curves.png]

Needs matplotlib, which is a development tool here and not a package
dependency.
"""

import argparse
import csv
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_cell(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    it = [int(r["iteration"]) for r in rows]
    loss = [float(r["train_loss"]) for r in rows]
    err = [int(r["test_error"]) if r["test_error"] else None for r in rows]
    return it, loss, err


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("sweep_dir", type=pathlib.Path)
    parser.add_argument("--out", default="curves.png")
    args = parser.parse_args()

    cells = sorted((args.sweep_dir / "cells").glob("*.csv"))
    if not cells:
        raise SystemExit(f"no cell files under {args.sweep_dir / 'cells'}")
    fig, (ax_err, ax_loss) = plt.subplots(1, 2, figsize=(12, 4.5))
    for path in cells:
        it, loss, err = read_cell(path)
        ax_loss.semilogy(it, loss, label=path.stem)
        if all(e is not None for e in err):
            ax_err.plot(it, err, label=path.stem)
    ax_err.set(xlabel="iteration", ylabel="test errors")
    ax_loss.set(xlabel="iteration", ylabel="training loss")
    ax_err.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
