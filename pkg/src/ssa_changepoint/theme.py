"""Plot palette and pipeline stage display constants."""

from ssa_changepoint.experiment import Condition

# Copper accent palette
COPPER = {
    "c300": "#E0B48E",
    "c500": "#C48B64",
    "c700": "#8F5C3D",
    "c900": "#4D3121",
}

# Zinc neutrals
ZINC = {
    "c300": "#D4D4D8",
    "c500": "#71717A",
    "c700": "#3F3F46",
    "c900": "#18181B",
}

CONDITION_COLORS = {
    Condition.BASELINE: ZINC["c500"],
    Condition.RANDOM_PROJECTION: COPPER["c300"],
    Condition.SSA: COPPER["c700"],
}

CONDITION_LABELS = {
    Condition.BASELINE: "raw data",
    Condition.RANDOM_PROJECTION: "random projection",
    Condition.SSA: "SSA n-sources",
}

PLOT_RC = {
    "svg.hashsalt": "ssa-changepoint",
    "svg.fonttype": "none",
    "font.size": 10.0,
    "axes.edgecolor": ZINC["c700"],
    "axes.labelcolor": ZINC["c900"],
    "axes.spines.top": False,
    "axes.spines.right": False,
    "xtick.color": ZINC["c700"],
    "ytick.color": ZINC["c700"],
    "grid.color": ZINC["c300"],
    "grid.linewidth": 0.6,
}

PIPELINE_STAGES = (
    ("dataset", "Loading dataset"),
    ("order", "Testing candidate stationary dimensions"),
    ("bnise", "Computing hold-out stationarity error"),
    ("fit", "Fitting SSA projections"),
    ("detect", "Running detectors"),
    ("evaluate", "Scoring reports"),
    ("experiment", "Running experiments"),
)

_STAGE_LABELS = dict(PIPELINE_STAGES)


def stage_line(
    stage: str,
    *,
    cached: bool = False,
    done: bool = False,
    error: str | None = None,
) -> str:
    """One-line status of a pipeline stage for the log.

    Args:
        stage: Stage ID from ``PIPELINE_STAGES``.
        cached: The stage's outputs were reused.
        done: The stage finished.
        error: Failure message, if the stage failed.

    Returns:
        e.g. "[4/7 fit] Fitting SSA projections... done".
    """
    ids = [stage_id for stage_id, _ in PIPELINE_STAGES]
    position = ids.index(stage) + 1
    line = f"[{position}/{len(ids)} {stage}] {_STAGE_LABELS[stage]}..."
    if error:
        return f"{line} failed: {error}"
    if cached:
        return f"{line} cached"
    if done:
        return f"{line} done"
    return line
