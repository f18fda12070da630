"""Static PNG charts from the CSV logs of runs and studies."""

import csv
import logging
from collections.abc import Mapping, Sequence
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .exceptions import ParseError  # noqa: E402
from .models import LossReport  # noqa: E402

logger = logging.getLogger(__name__)


def read_log(path: str | Path) -> dict[str, list[float]]:
    """Read a numeric CSV log into columns; empty cells become NaN.

    Raises:
        ParseError: If the file is missing or holds a non-numeric cell
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            columns: dict[str, list[float]] = {name: [] for name in reader.fieldnames or ()}
            for number, row in enumerate(reader, start=2):
                for name, value in row.items():
                    try:
                        columns[name].append(float(value) if value else float("nan"))
                    except ValueError as e:
                        raise ParseError(f"line {number}, column {name}: {e}", source=str(path))
    except OSError as e:
        raise ParseError(str(e), source=str(path)) from e
    return columns


def plot_loss_curves(
    loss_csv: str | Path,
    out_path: str | Path,
    components: Sequence[str] = (*LossReport.COMPONENTS, "total"),
) -> Path:
    """Plot every loss component against the step, one panel per component."""
    log = read_log(loss_csv)
    shown = [c for c in components if c in log and any(v != 0 for v in log[c])]
    if not shown:
        raise ParseError("no nonzero loss column to plot", source=str(loss_csv))
    fig, axes = plt.subplots(len(shown), 1, sharex=True, figsize=(7, 1.8 * len(shown) + 1))
    axes = [axes] if len(shown) == 1 else list(axes)
    for ax, name in zip(axes, shown):
        ax.plot(log["step"], log[name], linewidth=0.8)
        ax.set_ylabel(name)
        ax.grid(alpha=0.3)
    axes[-1].set_xlabel("step")
    fig.tight_layout()
    return _save(fig, out_path)


def plot_eval_curve(eval_csv: str | Path, out_path: str | Path) -> Path:
    """Plot validation mAP and the learning rate against the step."""
    log = read_log(eval_csv)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(log["step"], log["mAP"], marker="o", label="val mAP")
    ax.set_xlabel("step")
    ax.set_ylabel("mAP")
    ax.grid(alpha=0.3)
    lr_ax = ax.twinx()
    lr_ax.step(log["step"], log["lr"], where="post", color="gray", linestyle="--")
    lr_ax.set_yscale("log")
    lr_ax.set_ylabel("lr")
    fig.tight_layout()
    return _save(fig, out_path)


def plot_granularity_comparison(
    maps: Mapping[str, Sequence[float]], out_path: str | Path
) -> Path:
    """Bar chart of test mAP per setting: mean over repeats, std as error bar."""
    if not maps:
        raise ParseError("no study results to plot")
    names = list(maps)
    means = [100 * float(np.mean(v)) for v in maps.values()]
    stds = [100 * float(np.std(v)) for v in maps.values()]
    fig, ax = plt.subplots(figsize=(1.6 * len(names) + 2, 3.5))
    ax.bar(names, means, yerr=stds, capsize=4, color="#4c72b0")
    for i, m in enumerate(means):
        ax.annotate(f"{m:.1f}", (i, m), ha="center", va="bottom", fontsize=8)
    ax.set_ylabel("test mAP (%)")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    return _save(fig, out_path)


def _save(fig: plt.Figure, out_path: str | Path) -> Path:
    path = Path(out_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    logger.info("Wrote %s", path)
    return path
