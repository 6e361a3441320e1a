#!/usr/bin/env python
"""Segment a CSV series on its SSA n-sources and print the change points.

Usage: uv run scripts/segment_csv.py <series.csv> <d_n> [n_epochs]
"""

import sys
from pathlib import Path

from dotenv import load_dotenv

from ssa_changepoint.io import read_series_csv, write_json
from ssa_changepoint.slcd import SlcdConfig, slcd_detect
from ssa_changepoint.ssa import SsaConfig, extract_sources, fit_demixing
from ssa_changepoint.timeseries import make_epochs

load_dotenv()

input_path = Path(sys.argv[1])
d_n = int(sys.argv[2])
n_epochs = int(sys.argv[3]) if len(sys.argv) > 3 else 30  # noqa: PLR2004
output_path = Path("results") / f"{input_path.stem}_changepoints.json"

print("Reading...")
series = read_series_csv(input_path)
epochs = make_epochs(series, n_epochs)

print("Fitting SSA...")
model = fit_demixing(series, SsaConfig(d_n=d_n), epochs=epochs)

print("Segmenting...")
report = slcd_detect(extract_sources(series, model, "n"), SlcdConfig(), epochs)
write_json(output_path, report.to_dict())

print(f"Change points after epochs: {report.changepoints}")
print(f"Done: {output_path}")
