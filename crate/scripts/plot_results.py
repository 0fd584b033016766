#!/usr/bin/env python3
"""Plot the CSV outputs of the qmbrl CLI.

    plot_results.py reupload  STUDY_DIR  [-o reupload.png]
    plot_results.py data      STUDY_DIR  [-o data.png]
    plot_results.py search    SEARCH_DIR [-o search.png]
"""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def reupload(d: Path, ax):
    runs = pd.read_csv(d / "runs.csv")
    groups = runs.groupby("reuploads")["val_loss"]
    mean, std = groups.mean(), groups.std()
    ax.errorbar(mean.index, mean.values, yerr=std.values, marker="o", capsize=3)
    ax.set_yscale("log")
    ax.set_xlabel("re-uploads")
    ax.set_ylabel("validation MSE")
    ax.set_xticks(list(mean.index))


def data(d: Path, ax):
    runs = pd.read_csv(d / "runs.csv")
    for family, g in runs.groupby("family"):
        stats = g.groupby("fraction")["val_loss"].agg(["mean", "std"])
        ax.errorbar(stats.index, stats["mean"], yerr=stats["std"], marker="o", capsize=3, label=family.upper())
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("fraction of training data")
    ax.set_ylabel("validation MSE")
    ax.legend()


def search(d: Path, axes):
    h = pd.read_csv(d / "history.csv")
    axes[0].step(h["evaluation"], h["fitness"], where="post")
    axes[0].set_ylabel("model return")
    if h["env_mean_return"].notna().any():
        axes[1].step(h["evaluation"], h["env_mean_return"], where="post")
        axes[2].step(h["evaluation"], h["env_mean_steps"], where="post")
    axes[1].set_ylabel("env return")
    axes[2].set_ylabel("env steps")
    axes[2].set_xlabel("fitness evaluations")


def main():
    p = argparse.ArgumentParser()
    p.add_argument("kind", choices=["reupload", "data", "search"])
    p.add_argument("dir", type=Path)
    p.add_argument("-o", "--output", type=Path)
    args = p.parse_args()
    if args.kind == "search":
        fig, axes = plt.subplots(3, 1, sharex=True, figsize=(6, 8))
        search(args.dir, axes)
    else:
        fig, ax = plt.subplots(figsize=(6, 4))
        (reupload if args.kind == "reupload" else data)(args.dir, ax)
    fig.tight_layout()
    fig.savefig(args.output or args.dir / f"{args.kind}.png", dpi=150)


if __name__ == "__main__":
    main()
