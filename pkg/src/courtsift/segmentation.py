"""Offense/defense/transition labels and action numbering on a reduced timeline."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .filtering import ON_COURT, lineup_mask
from .geometry import CourtSpec
from .ingest import GameTimeline

OFFENSE, DEFENSE, TRANSITION = "O", "D", "Tr"


@dataclass(frozen=True)
class SideConfig:
    halftime_ms: int | None = None
    attack_positive_x_first_half: bool = True


@dataclass(frozen=True)
class ActionSegment:
    act_id: int
    start_ms: int
    end_ms: int
    start_index: int
    stop_index: int  # exclusive
    # None when the team never left the transition band during the action
    dominant_phase: str | None

    @property
    def frame_span(self) -> range:
        return range(self.start_index, self.stop_index)

    @property
    def duration_s(self) -> float:
        return (self.end_ms - self.start_ms) / 1000.0


@dataclass(frozen=True)
class ActionSummary:
    count: int
    durations_s: tuple[float, ...]
    window_s: tuple[float, float]
    in_window: int
    share_in_window: float

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "window_s": list(self.window_s),
            "in_window": self.in_window,
            "share_in_window": self.share_in_window,
        }


def team_mean_positions(timeline: GameTimeline, mask: np.ndarray | None = None,
                        court: CourtSpec | None = None) -> np.ndarray:
    """(T, 2) mean position of the five on-court players per frame."""
    if mask is None:
        mask = lineup_mask(timeline, court or CourtSpec())
    counts = mask.sum(axis=1)
    if np.any(counts != ON_COURT):
        bad = int(np.flatnonzero(counts != ON_COURT)[0])
        raise ValueError(
            f"frame {bad} (ms={int(timeline.ms[bad])}) has {int(counts[bad])} players on court, expected 5"
        )
    if len(timeline) == 0:
        return np.zeros((0, 2))
    five = timeline.pos[mask].reshape(len(timeline), ON_COURT, 2)
    return five.sum(axis=1) / ON_COURT


def infer_halftime(ms: np.ndarray) -> int | None:
    """Midpoint of the longest gap between consecutive retained frames."""
    if len(ms) < 2:
        return None
    gaps = np.diff(ms)
    i = int(np.argmax(gaps))
    return int((int(ms[i]) + int(ms[i + 1])) // 2)


def attack_sign(ms: np.ndarray, sides: SideConfig) -> np.ndarray:
    """+1 where the team attacks toward +x, -1 otherwise."""
    first = 1 if sides.attack_positive_x_first_half else -1
    out = np.full(len(ms), first, dtype=np.int8)
    if sides.halftime_ms is not None:
        out[ms >= sides.halftime_ms] = -first
    return out


def resolve_sides(timeline: GameTimeline, sides: SideConfig | None, court: CourtSpec) -> SideConfig:
    if sides is None:
        sides = SideConfig(None, court.attack_positive_x_first_half)
    if sides.halftime_ms is None:
        sides = SideConfig(infer_halftime(timeline.ms), sides.attack_positive_x_first_half)
    return sides


def label_phases(timeline: GameTimeline, court: CourtSpec, sides: SideConfig | None = None,
                 mask: np.ndarray | None = None) -> np.ndarray:
    """Per-frame label: ``Tr`` inside the band (boundary inclusive), else
    ``O`` on the half the team attacks in the current half, ``D`` otherwise."""
    sides = resolve_sides(timeline, sides, court)
    x = team_mean_positions(timeline, mask, court)[:, 0]
    attack = attack_sign(timeline.ms, sides)
    labels = np.where(np.sign(x) == attack, OFFENSE, DEFENSE).astype("<U2")
    labels[np.abs(x) <= court.transition_half_width] = TRANSITION
    return labels


def committed_sides(avg_x: np.ndarray, band: float) -> np.ndarray:
    """Last side (+1/-1) seen outside the band; 0 before the first commitment."""
    side = np.where(avg_x > band, 1, np.where(avg_x < -band, -1, 0)).astype(np.int8)
    idx = np.where(side != 0, np.arange(len(side)), -1)
    idx = np.maximum.accumulate(idx) if len(idx) else idx
    return np.where(idx >= 0, side[np.maximum(idx, 0)], 0).astype(np.int8)


def action_ids(timeline: GameTimeline, court: CourtSpec, mask: np.ndarray | None = None,
               max_intra_action_gap_ms: int | None = None) -> np.ndarray:
    """Per-frame action number starting at 1.

    The number advances when the committed side flips, i.e. the team mean
    crosses the whole transition band. Band frames stay with the outgoing action.
    """
    n = len(timeline)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    x = team_mean_positions(timeline, mask, court)[:, 0]
    committed = committed_sides(x, court.transition_half_width)
    new = np.zeros(n, dtype=bool)
    new[1:] = (committed[1:] != committed[:-1]) & (committed[:-1] != 0)
    if max_intra_action_gap_ms is not None:
        new[1:] |= np.diff(timeline.ms) > max_intra_action_gap_ms
    return 1 + np.cumsum(new)


def assign_actions(timeline: GameTimeline, labels: Sequence[str] | np.ndarray, court: CourtSpec,
                   mask: np.ndarray | None = None, sides: SideConfig | None = None,
                   max_intra_action_gap_ms: int | None = None) -> list[ActionSegment]:
    """Partition the reduced timeline into numbered actions."""
    n = len(timeline)
    if n == 0:
        return []
    labels = np.asarray(labels)
    if len(labels) != n:
        raise ValueError("labels must align with frames")
    ids = action_ids(timeline, court, mask, max_intra_action_gap_ms)
    x = team_mean_positions(timeline, mask, court)[:, 0]
    committed = committed_sides(x, court.transition_half_width)
    sides = resolve_sides(timeline, sides, court)
    attack = attack_sign(timeline.ms, sides)

    bounds = np.flatnonzero(np.diff(ids)) + 1
    starts = np.concatenate(([0], bounds))
    stops = np.concatenate((bounds, [n]))
    out = []
    for a, (i0, i1) in enumerate(zip(starts, stops), start=1):
        seg = committed[i0:i1]
        hit = np.flatnonzero(seg != 0)
        phase = None
        if len(hit):
            j = i0 + int(hit[0])
            phase = OFFENSE if committed[j] == attack[j] else DEFENSE
        out.append(ActionSegment(a, int(timeline.ms[i0]), int(timeline.ms[i1 - 1]), int(i0), int(i1), phase))
    return out


def summarize_actions(segments: Sequence[ActionSegment],
                      window_s: tuple[float, float] = (4.0, 38.0)) -> ActionSummary:
    durations = tuple(s.duration_s for s in segments)
    lo, hi = window_s
    inside = sum(lo <= d <= hi for d in durations)
    share = inside / len(durations) if durations else 0.0
    return ActionSummary(len(durations), durations, (lo, hi), inside, share)


def segments_from_ids(ms: np.ndarray, ids: np.ndarray, phases: Sequence[str | None] | None = None
                      ) -> list[ActionSegment]:
    """Rebuild segments from a per-frame act_id column (e.g. a segment table)."""
    n = len(ms)
    if n == 0:
        return []
    bounds = np.flatnonzero(np.diff(ids)) + 1
    starts = np.concatenate(([0], bounds))
    stops = np.concatenate((bounds, [n]))
    return [
        ActionSegment(int(ids[i0]), int(ms[i0]), int(ms[i1 - 1]), int(i0), int(i1),
                      None if phases is None else phases[k])
        for k, (i0, i1) in enumerate(zip(starts, stops))
    ]


SEGMENT_COLUMNS = ["ms", "avg_pos_x", "avg_pos_y", "label", "act_id"]


def segment_table(timeline: GameTimeline, labels: np.ndarray, ids: np.ndarray,
                  mask: np.ndarray | None = None, court: CourtSpec | None = None) -> pd.DataFrame:
    avg = team_mean_positions(timeline, mask, court)
    return pd.DataFrame({
        "ms": timeline.ms,
        "avg_pos_x": avg[:, 0],
        "avg_pos_y": avg[:, 1],
        "label": labels,
        "act_id": ids,
    }, columns=SEGMENT_COLUMNS)


def write_segment_table(df: pd.DataFrame, path: str | Path) -> None:
    df.to_csv(path, index=False, lineterminator="\n")


def read_segment_table(path: str | Path) -> pd.DataFrame:
    df = pd.read_csv(path, keep_default_na=False, dtype={"label": str})
    if list(df.columns) != SEGMENT_COLUMNS:
        raise ValueError(f"{path}: expected columns {SEGMENT_COLUMNS}")
    return df
