"""Tests for theme module stage lines and palettes."""

from ssa_changepoint.experiment import Condition
from ssa_changepoint.theme import (
    CONDITION_COLORS,
    CONDITION_LABELS,
    PIPELINE_STAGES,
    stage_line,
)


class TestStageLine:
    """Tests for stage_line function."""

    def test_pending_stage_shows_position(self) -> None:
        """A started stage shows its position and label only."""
        line = stage_line("dataset")

        assert line == f"[1/{len(PIPELINE_STAGES)} dataset] Loading dataset..."

    def test_done_stage(self) -> None:
        """A finished stage ends with 'done'."""
        line = stage_line("fit", done=True)

        assert line.startswith("[4/7 fit]")
        assert line.endswith("... done")

    def test_cached_stage(self) -> None:
        """Reused outputs are reported as cached."""
        assert stage_line("detect", cached=True).endswith("... cached")

    def test_error_wins_over_done(self) -> None:
        """An error message replaces any other status."""
        line = stage_line("order", done=True, error="singular covariance")

        assert line.endswith("failed: singular covariance")
        assert "done" not in line


class TestPalette:
    """Tests for the condition palette."""

    def test_every_condition_has_color_and_label(self) -> None:
        """Plots can style every condition."""
        for condition in Condition:
            assert CONDITION_COLORS[condition].startswith("#")
            assert CONDITION_LABELS[condition]
