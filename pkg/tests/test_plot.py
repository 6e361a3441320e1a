"""Tests for SVG result plots."""

from __future__ import annotations

from typing import TYPE_CHECKING

import pandas as pd
import pytest

from ssa_changepoint.errors import ValidationError
from ssa_changepoint.plot import PlotKind, detect_kind, plot_table

if TYPE_CHECKING:
    from pathlib import Path


def _experiment_table() -> pd.DataFrame:
    return pd.DataFrame(
        {
            "grid_value": [1.0, 1.0, 2.0, 2.0],
            "condition": ["baseline", "ssa", "baseline", "ssa"],
            "q25": [0.4, 0.6, 0.45, 0.7],
            "median": [0.5, 0.7, 0.5, 0.8],
            "q75": [0.6, 0.8, 0.55, 0.9],
        }
    )


class TestDetectKind:
    """Tests for detect_kind."""

    @pytest.mark.parametrize(
        ("columns", "kind"),
        [
            (
                ["grid_value", "condition", "q25", "median", "q75", "n"],
                PlotKind.EXPERIMENT,
            ),
            (["d_s", "statistic", "p_value"], PlotKind.ORDER),
            (["true_d_s", "candidate", "mean_p_value"], PlotKind.ORDER_STUDY),
            (["d", "bnise"], PlotKind.BNISE),
        ],
    )
    def test_known_tables(self, columns: list[str], kind: PlotKind) -> None:
        """Each result table is recognized by its columns."""
        assert detect_kind(pd.DataFrame(columns=columns)) is kind

    def test_unknown_table(self) -> None:
        """Unrecognized columns are refused."""
        with pytest.raises(ValidationError, match="cannot plot"):
            detect_kind(pd.DataFrame(columns=["x", "y"]))


class TestPlotTable:
    """Tests for plot_table."""

    def test_writes_svg(self, tmp_path: Path) -> None:
        """The experiment plot is an SVG document."""
        path = plot_table(_experiment_table(), tmp_path / "experiment.svg")
        text = path.read_text()
        assert text.lstrip().startswith("<?xml")
        assert "<svg" in text

    def test_output_is_deterministic(self, tmp_path: Path) -> None:
        """Plotting the same table twice writes identical bytes."""
        first = plot_table(_experiment_table(), tmp_path / "a.svg")
        second = plot_table(_experiment_table(), tmp_path / "b.svg")
        assert first.read_bytes() == second.read_bytes()

    def test_order_and_bnise(self, tmp_path: Path) -> None:
        """Order and BNISE tables plot without an explicit kind."""
        order = pd.DataFrame({"d_s": [1, 2, 3], "p_value": [0.5, 0.02, 0.0]})
        bnise = pd.DataFrame({"d": [1, 2, 3], "bnise": [0.1, 0.2, 1.5]})
        assert plot_table(order, tmp_path / "order.svg").exists()
        assert plot_table(bnise, tmp_path / "bnise.svg").exists()

    def test_missing_columns_for_forced_kind(self, tmp_path: Path) -> None:
        """A forced kind still needs its columns."""
        with pytest.raises(ValidationError, match="lacks columns"):
            plot_table(
                pd.DataFrame({"d": [1], "bnise": [0.1]}),
                tmp_path / "x.svg",
                PlotKind.ORDER,
            )
