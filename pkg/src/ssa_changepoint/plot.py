"""Deterministic SVG plots of experiment, order-selection and BNISE tables."""

from __future__ import annotations

import io
import logging
from enum import StrEnum
from typing import TYPE_CHECKING

import matplotlib as mpl

mpl.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ssa_changepoint.errors import ValidationError  # noqa: E402
from ssa_changepoint.experiment import Condition  # noqa: E402
from ssa_changepoint.io import atomic_write_bytes  # noqa: E402
from ssa_changepoint.theme import (  # noqa: E402
    CONDITION_COLORS,
    CONDITION_LABELS,
    COPPER,
    PLOT_RC,
    ZINC,
)

if TYPE_CHECKING:
    from pathlib import Path

    import pandas as pd
    from matplotlib.figure import Figure

logger = logging.getLogger(__name__)


class PlotKind(StrEnum):
    """Tables the plot command understands."""

    EXPERIMENT = "experiment"
    ORDER = "order"
    ORDER_STUDY = "order_study"
    BNISE = "bnise"


_REQUIRED_COLUMNS = {
    PlotKind.EXPERIMENT: {"grid_value", "condition", "q25", "median", "q75"},
    PlotKind.ORDER: {"d_s", "p_value"},
    PlotKind.ORDER_STUDY: {"true_d_s", "candidate", "mean_p_value"},
    PlotKind.BNISE: {"d", "bnise"},
}


def detect_kind(frame: pd.DataFrame) -> PlotKind:
    """Infer the table kind from its columns.

    Raises:
        ValidationError: If the columns match no known table.
    """
    columns = set(frame.columns)
    for kind, required in _REQUIRED_COLUMNS.items():
        if required <= columns:
            return kind
    msg = f"cannot plot a table with columns {sorted(columns)}"
    raise ValidationError(msg)


def _save(figure: Figure, path: Path) -> Path:
    buffer = io.BytesIO()
    figure.savefig(buffer, format="svg", metadata={"Date": None})
    plt.close(figure)
    logger.info("Wrote plot %s", path)
    return atomic_write_bytes(path, buffer.getvalue())


def plot_experiment(
    frame: pd.DataFrame, path: Path, *, title: str = "", x_label: str = "grid value"
) -> Path:
    """Median AUC per condition with 25th to 75th percentile error bars."""
    with plt.rc_context(PLOT_RC):
        figure, axes = plt.subplots(figsize=(6.0, 4.0))
        conditions = list(dict.fromkeys(frame["condition"]))
        offsets = np.linspace(-0.15, 0.15, len(conditions))
        if len(conditions) == 1:
            offsets = np.zeros(1)
        grid = sorted(frame["grid_value"].unique())
        positions = {value: index for index, value in enumerate(grid)}
        for offset, name in zip(offsets, conditions, strict=True):
            rows = frame[frame["condition"] == name].sort_values("grid_value")
            x = np.array([positions[v] for v in rows["grid_value"]]) + offset
            median = rows["median"].to_numpy()
            errors = np.vstack(
                [median - rows["q25"].to_numpy(), rows["q75"].to_numpy() - median]
            )
            condition = Condition(name)
            axes.errorbar(
                x,
                median,
                yerr=errors,
                fmt="o-",
                capsize=3,
                color=CONDITION_COLORS[condition],
                label=CONDITION_LABELS[condition],
            )
        axes.axhline(0.5, color=ZINC["c300"], linestyle="--", linewidth=0.8)
        axes.set_xticks(range(len(grid)), [f"{v:g}" for v in grid])
        axes.set_ylim(0.0, 1.0)
        axes.set_xlabel(x_label)
        axes.set_ylabel("AUC")
        if title:
            axes.set_title(title)
        axes.legend(frameon=False)
        return _save(figure, path)


def plot_order(frame: pd.DataFrame, path: Path, *, alpha: float = 0.01) -> Path:
    """p-value of each candidate d_s against the significance level."""
    with plt.rc_context(PLOT_RC):
        figure, axes = plt.subplots(figsize=(6.0, 4.0))
        p_values = frame["p_value"].clip(lower=1e-300)
        axes.semilogy(frame["d_s"], p_values, "o-", color=COPPER["c700"])
        axes.axhline(alpha, color=ZINC["c500"], linestyle="--", linewidth=0.8)
        axes.set_xlabel("candidate d_s")
        axes.set_ylabel("p-value")
        return _save(figure, path)


def plot_order_study(frame: pd.DataFrame, path: Path, *, alpha: float = 0.01) -> Path:
    """Average p-value curves, one per true d_s."""
    with plt.rc_context(PLOT_RC):
        figure, axes = plt.subplots(figsize=(6.0, 4.0))
        groups = list(frame.groupby("true_d_s", sort=True))
        shades = plt.get_cmap("copper")(np.linspace(0.2, 0.9, len(groups)))
        for shade, (true_d_s, rows) in zip(shades, groups, strict=True):
            axes.semilogy(
                rows["candidate"],
                rows["mean_p_value"].clip(lower=1e-300),
                "o-",
                color=shade,
                label=f"d_s = {true_d_s}",
            )
        axes.axhline(alpha, color=ZINC["c500"], linestyle="--", linewidth=0.8)
        axes.set_xlabel("candidate d_s")
        axes.set_ylabel("mean p-value")
        axes.legend(frameon=False, fontsize=8)
        return _save(figure, path)


def plot_bnise(frame: pd.DataFrame, path: Path) -> Path:
    """BNISE against the candidate dimension."""
    with plt.rc_context(PLOT_RC):
        figure, axes = plt.subplots(figsize=(6.0, 4.0))
        axes.plot(frame["d"], frame["bnise"], "o-", color=COPPER["c500"])
        axes.set_xlabel("d")
        axes.set_ylabel("BNISE")
        return _save(figure, path)


def plot_table(frame: pd.DataFrame, path: Path, kind: PlotKind | None = None) -> Path:
    """Plot a result table, inferring its kind from the columns if needed."""
    kind = kind or detect_kind(frame)
    missing = _REQUIRED_COLUMNS[kind] - set(frame.columns)
    if missing:
        msg = f"{kind.value} table lacks columns {sorted(missing)}"
        raise ValidationError(msg)
    match kind:
        case PlotKind.EXPERIMENT:
            return plot_experiment(frame, path)
        case PlotKind.ORDER:
            return plot_order(frame, path)
        case PlotKind.ORDER_STUDY:
            return plot_order_study(frame, path)
        case PlotKind.BNISE:
            return plot_bnise(frame, path)
