"""Reduce a game timeline to active play.

Three passes run in order on the progressively reduced matrix: keep frames
with exactly five players on court, drop long free-throw-circle dwells, drop
long stretches where all five on-court players are slow.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import KMH_PER_MS, CourtSpec, ft_circle_mask, on_court_mask
from .ingest import GameTimeline

log = logging.getLogger(__name__)

ON_COURT = 5


@dataclass(frozen=True)
class FilterParams:
    h1_s: float = 10.0  # free-throw circle dwell
    h2_kmh: float = 9.0  # all-players speed threshold
    h3_s: float = 2.5  # slow-run duration
    run_gap_break_ms: int = 1000
    active_gap_cap_ms: int = 1000

    def __post_init__(self):
        if self.h1_s <= 0 or self.h2_kmh <= 0 or self.h3_s <= 0:
            raise ValueError("h1_s, h2_kmh and h3_s must be positive")
        if self.run_gap_break_ms < 0 or self.active_gap_cap_ms < 0:
            raise ValueError("gap settings must be non-negative")

    def feasibility_warnings(self) -> list[str]:
        """Settings outside the range where the filter is meaningful (walking pace, sub-second lulls)."""
        out = []
        if self.h2_kmh <= 8:
            out.append(f"h2_kmh={self.h2_kmh} is at or below walking pace (8 km/h)")
        if self.h3_s <= 1:
            out.append(f"h3_s={self.h3_s} may drop sub-second active lulls")
        return out


@dataclass(frozen=True)
class FilterReport:
    rows_in: int = 0
    rows_removed_lineup: int = 0
    rows_removed_free_throw: int = 0
    rows_removed_slow: int = 0
    rows_out: int = 0
    active_minutes: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def lineup_mask(timeline: GameTimeline, court: CourtSpec) -> np.ndarray:
    """(T, k) boolean: observed and inside the court."""
    return timeline.observed & on_court_mask(timeline.pos, court)


def flagged_runs(ms: np.ndarray, flag: np.ndarray, gap_break_ms: float):
    """Maximal runs of consecutive flagged frames.

    A run also breaks where consecutive frames are more than ``gap_break_ms``
    apart. Returns ``(starts, ends)`` as inclusive frame indices.
    """
    n = len(ms)
    if n == 0:
        empty = np.zeros(0, dtype=np.intp)
        return empty, empty
    brk = np.ones(n, dtype=bool)
    brk[1:] = np.diff(ms) > gap_break_ms
    prev_flag = np.concatenate(([False], flag[:-1]))
    next_flag = np.concatenate((flag[1:], [False]))
    next_brk = np.concatenate((brk[1:], [True]))
    starts = np.flatnonzero(flag & (brk | ~prev_flag))
    ends = np.flatnonzero(flag & (next_brk | ~next_flag))
    return starts, ends


def span_mask(n: int, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    marks = np.zeros(n + 1, dtype=np.int64)
    np.add.at(marks, starts, 1)
    np.add.at(marks, ends + 1, -1)
    return np.cumsum(marks[:-1]) > 0


def long_run_mask(ms: np.ndarray, flag: np.ndarray, gap_break_ms: float, min_ms: float) -> np.ndarray:
    """Frames belonging to flagged runs lasting at least ``min_ms`` (last.ms - first.ms)."""
    starts, ends = flagged_runs(ms, flag, gap_break_ms)
    keep = (ms[ends] - ms[starts]) >= min_ms
    return span_mask(len(ms), starts[keep], ends[keep])


def filter_lineup(timeline: GameTimeline, court: CourtSpec) -> tuple[GameTimeline, np.ndarray]:
    """Keep frames with exactly five players on court.

    Returns the reduced timeline and its ``(T', k)`` on-court mask; each row
    of the mask selects the five on-court player slots.
    """
    mask = lineup_mask(timeline, court)
    keep = mask.sum(axis=1) == ON_COURT
    return timeline.take(keep), mask[keep]


def on_court_ids(timeline: GameTimeline, mask: np.ndarray) -> list[frozenset]:
    roster = np.array(timeline.roster, dtype=object)
    return [frozenset(roster[row]) for row in mask]


def free_throw_flags(timeline: GameTimeline, mask: np.ndarray, court: CourtSpec) -> np.ndarray:
    return (ft_circle_mask(timeline.pos, court) & mask).any(axis=1)


def filter_free_throws(timeline: GameTimeline, court: CourtSpec, params: FilterParams,
                       mask: np.ndarray | None = None) -> tuple[GameTimeline, np.ndarray]:
    """Drop runs where some on-court player stays in a free-throw circle for at least ``h1_s``."""
    if mask is None:
        mask = lineup_mask(timeline, court)
    ft = free_throw_flags(timeline, mask, court)
    drop = long_run_mask(timeline.ms, ft, params.run_gap_break_ms, params.h1_s * 1000.0)
    return timeline.take(~drop), mask[~drop]


def max_on_court_speed_kmh(timeline: GameTimeline, mask: np.ndarray) -> np.ndarray:
    """Fastest on-court speed per frame; NaN speeds never count as slow."""
    spd = np.hypot(timeline.vel[..., 0], timeline.vel[..., 1]) * KMH_PER_MS
    spd = np.where(mask, spd, -np.inf)
    spd = np.where(np.isnan(spd), np.inf, spd)
    if spd.shape[1] == 0:
        return np.full(len(timeline), -np.inf)
    return spd.max(axis=1)


def slow_drop_mask(ms: np.ndarray, max_speed_kmh: np.ndarray, params: FilterParams) -> np.ndarray:
    slow = max_speed_kmh < params.h2_kmh
    return long_run_mask(ms, slow, params.run_gap_break_ms, params.h3_s * 1000.0)


def filter_slow_runs(timeline: GameTimeline, params: FilterParams,
                     mask: np.ndarray) -> tuple[GameTimeline, np.ndarray]:
    """Drop runs where all on-court players move slower than ``h2_kmh`` for at least ``h3_s``."""
    drop = slow_drop_mask(timeline.ms, max_on_court_speed_kmh(timeline, mask), params)
    return timeline.take(~drop), mask[~drop]


def capped_steps_ms(ms: np.ndarray, cap_ms: int) -> np.ndarray:
    """Per-frame elapsed time since the previous input frame, capped (first frame: 0)."""
    steps = np.zeros(len(ms), dtype=np.int64)
    if len(ms) > 1:
        steps[1:] = np.minimum(np.diff(ms), cap_ms)
    return steps


def active_minutes(steps_ms: np.ndarray, keep: np.ndarray | None = None) -> float:
    total = int(steps_ms.sum() if keep is None else steps_ms[keep].sum())
    return total / 60000.0


@dataclass(frozen=True)
class SlowPassInput:
    """State after the lineup and free-throw passes; independent of ``h2_kmh``/``h3_s``."""

    rows_in: int
    index: np.ndarray  # surviving frame indices into the input timeline
    ms: np.ndarray
    max_speed_kmh: np.ndarray
    steps_ms: np.ndarray  # capped steps for the whole input timeline
    rows_removed_lineup: int
    rows_removed_free_throw: int


def prepare_slow_pass(timeline: GameTimeline, court: CourtSpec, params: FilterParams) -> SlowPassInput:
    n = len(timeline)
    idx = np.arange(n)
    mask_all = lineup_mask(timeline, court)
    keep_a = mask_all.sum(axis=1) == ON_COURT
    idx_a, mask_a = idx[keep_a], mask_all[keep_a]
    ft = (ft_circle_mask(timeline.pos[idx_a], court) & mask_a).any(axis=1)
    drop_b = long_run_mask(timeline.ms[idx_a], ft, params.run_gap_break_ms, params.h1_s * 1000.0)
    idx_b, mask_b = idx_a[~drop_b], mask_a[~drop_b]
    sub = timeline.take(idx_b)
    return SlowPassInput(
        rows_in=n,
        index=idx_b,
        ms=sub.ms,
        max_speed_kmh=max_on_court_speed_kmh(sub, mask_b),
        steps_ms=capped_steps_ms(timeline.ms, params.active_gap_cap_ms),
        rows_removed_lineup=int(n - len(idx_a)),
        rows_removed_free_throw=int(drop_b.sum()),
    )


def finish_slow_pass(pre: SlowPassInput, params: FilterParams) -> tuple[np.ndarray, FilterReport]:
    """Apply the slow-run pass; returns retained input indices and the report."""
    drop = slow_drop_mask(pre.ms, pre.max_speed_kmh, params)
    kept = pre.index[~drop]
    report = FilterReport(
        rows_in=pre.rows_in,
        rows_removed_lineup=pre.rows_removed_lineup,
        rows_removed_free_throw=pre.rows_removed_free_throw,
        rows_removed_slow=int(drop.sum()),
        rows_out=int(len(kept)),
        active_minutes=active_minutes(pre.steps_ms, kept),
    )
    return kept, report


def run_filter(timeline: GameTimeline, court: CourtSpec,
               params: FilterParams) -> tuple[GameTimeline, FilterReport]:
    """Full reduction; ``active_minutes`` credits each retained frame with its
    gap to the preceding frame of the unreduced input, capped at
    ``active_gap_cap_ms``."""
    if len(timeline) == 0:
        return timeline, FilterReport()
    for w in params.feasibility_warnings():
        log.warning(w)
    kept, report = finish_slow_pass(prepare_slow_pass(timeline, court, params), params)
    return timeline.take(kept), report
