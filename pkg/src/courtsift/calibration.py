"""Sweep the slow-run parameters and recommend a cell near the target game length."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .filtering import (
    FilterParams,
    active_minutes,
    flagged_runs,
    prepare_slow_pass,
    span_mask,
)
from .geometry import CourtSpec
from .ingest import GameTimeline


def grid_values(start: float, stop: float, step: float) -> tuple[float, ...]:
    """Inclusive arithmetic range, rounded to kill float drift (8.0, 8.2, ... 11.0)."""
    if step <= 0 or stop < start:
        raise ValueError(f"bad grid {start}:{stop}:{step}")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + i * step, 10) for i in range(n))


DEFAULT_H2 = grid_values(8.0, 11.0, 0.2)
DEFAULT_H3 = grid_values(1.0, 4.0, 0.25)


@dataclass(frozen=True)
class CalibrationGrid:
    h2_values: tuple[float, ...]
    h3_values: tuple[float, ...]
    cells: np.ndarray  # (len(h2_values), len(h3_values)) active minutes

    def to_frame(self) -> pd.DataFrame:
        """Long format: one row per (h2, h3) cell."""
        h2, h3 = np.meshgrid(self.h2_values, self.h3_values, indexing="ij")
        return pd.DataFrame({
            "h2_kmh": h2.ravel(),
            "h3_s": h3.ravel(),
            "active_minutes": self.cells.ravel(),
        })

    def write_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n")


@dataclass(frozen=True)
class Recommendation:
    h2_kmh: float
    h3_s: float
    active_minutes: float
    target_minutes: float
    rule: str = "closest to target; ties toward grid center"

    def to_dict(self) -> dict:
        return {
            "h2_kmh": self.h2_kmh,
            "h3_s": self.h3_s,
            "active_minutes": self.active_minutes,
            "target_minutes": self.target_minutes,
            "rule": self.rule,
        }


def sweep(timeline: GameTimeline, court: CourtSpec, base: FilterParams,
          h2_values: Sequence[float] = DEFAULT_H2,
          h3_values: Sequence[float] = DEFAULT_H3) -> CalibrationGrid:
    """Active minutes for every (h2, h3) cell.

    The lineup and free-throw passes run once; each cell only redoes the
    slow-run pass. Cell values are identical to :func:`run_filter` calls.
    """
    h2_values, h3_values = tuple(h2_values), tuple(h3_values)
    if not h2_values or not h3_values:
        raise ValueError("grid must have at least one cell")
    cells = np.zeros((len(h2_values), len(h3_values)))
    if len(timeline) == 0:
        return CalibrationGrid(h2_values, h3_values, cells)
    pre = prepare_slow_pass(timeline, court, base)
    n = len(pre.ms)
    for i, h2 in enumerate(h2_values):
        starts, ends = flagged_runs(pre.ms, pre.max_speed_kmh < h2, base.run_gap_break_ms)
        durations = pre.ms[ends] - pre.ms[starts]
        for j, h3 in enumerate(h3_values):
            sel = durations >= h3 * 1000.0
            drop = span_mask(n, starts[sel], ends[sel])
            cells[i, j] = active_minutes(pre.steps_ms, pre.index[~drop])
    return CalibrationGrid(h2_values, h3_values, cells)


def recommend(grid: CalibrationGrid, target_minutes: float = 40.0,
              center: tuple[float, float] | None = None) -> Recommendation:
    """Cell minimising |minutes - target|.

    Ties go to the cell nearest the grid center (distance in units of each
    axis' range), then to the lower h2, then the lower h3.
    """
    if grid.cells.size == 0:
        raise ValueError("empty calibration grid")
    h2 = np.asarray(grid.h2_values)
    h3 = np.asarray(grid.h3_values)
    if center is None:
        center = ((h2.min() + h2.max()) / 2, (h3.min() + h3.max()) / 2)
    span2 = (h2.max() - h2.min()) or 1.0
    span3 = (h3.max() - h3.min()) or 1.0
    err = np.abs(grid.cells - target_minutes)
    best = err.min()
    candidates = []
    for i, j in zip(*np.nonzero(err <= best + 1e-9)):
        dist = ((h2[i] - center[0]) / span2) ** 2 + ((h3[j] - center[1]) / span3) ** 2
        candidates.append((round(dist, 12), h2[i], h3[j], i, j))
    _, _, _, i, j = min(candidates)
    return Recommendation(float(h2[i]), float(h3[j]), float(grid.cells[i, j]), float(target_minutes))
