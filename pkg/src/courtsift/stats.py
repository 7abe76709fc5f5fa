"""Per-frame team metrics and the descriptive summaries used to sanity-check a run."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .filtering import ON_COURT, lineup_mask
from .geometry import KMH_PER_MS, CourtSpec, hull_areas
from .ingest import GameTimeline
from .segmentation import DEFENSE, OFFENSE, ActionSummary

METRICS = ("d_avg", "con_hull", "vel_avg")
DEFAULT_BIN_WIDTHS = {"d_avg": 1.0, "con_hull": 5.0, "vel_avg": 0.5, "duration_s": 2.0}
BANDS = ("lt_10s", "10_to_20s", "gt_20s")


class BinMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class FrameMetrics:
    """Column-wise metrics, one entry per retained frame."""

    ms: np.ndarray
    d_avg: np.ndarray  # m, mean over ordered on-court pairs
    con_hull: np.ndarray  # m^2
    vel_avg: np.ndarray  # km/h, mean on-court speed
    phase: np.ndarray

    def __len__(self) -> int:
        return len(self.ms)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"ms": self.ms, "d_avg": self.d_avg, "con_hull": self.con_hull,
                             "vel_avg": self.vel_avg, "phase": self.phase})


@dataclass(frozen=True)
class DistributionSummary:
    n: int
    mean: float
    median: float
    q25: float
    q75: float
    bin_width: float
    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]
    band_shares: dict | None = field(default=None)

    def to_dict(self) -> dict:
        d = {
            "n": self.n, "mean": self.mean, "median": self.median,
            "q25": self.q25, "q75": self.q75, "bin_width": self.bin_width,
        }
        if self.band_shares is not None:
            d["band_shares"] = dict(self.band_shares)
        return d

    def histogram_frame(self) -> pd.DataFrame:
        edges = self.bin_edges
        return pd.DataFrame({"bin_lo": edges[:-1], "bin_hi": edges[1:], "count": self.counts})


def compute_frame_metrics(timeline: GameTimeline, labels: Sequence[str] | np.ndarray,
                          mask: np.ndarray | None = None,
                          court: CourtSpec | None = None) -> FrameMetrics:
    """Spacing, hull area and mean speed of the five on-court players per frame.

    Bench players never enter the pair distances.
    """
    if mask is None:
        mask = lineup_mask(timeline, court or CourtSpec())
    t = len(timeline)
    if np.any(mask.sum(axis=1) != ON_COURT):
        raise ValueError("every frame must have exactly five players on court")
    labels = np.asarray(labels)
    if len(labels) != t:
        raise ValueError("labels must align with frames")
    pos = timeline.pos[mask].reshape(t, ON_COURT, 2)
    vel = timeline.vel[mask].reshape(t, ON_COURT, 2)
    n = ON_COURT
    i, j = np.triu_indices(n, 1)
    diff = pos[:, i] - pos[:, j]
    # each unordered pair stands for both ordered pairs (i, j) and (j, i)
    d_avg = 2.0 * np.hypot(diff[..., 0], diff[..., 1]).sum(axis=1) / (n * n - n)
    speeds = np.hypot(vel[..., 0], vel[..., 1]) * KMH_PER_MS
    return FrameMetrics(
        np.asarray(timeline.ms),
        d_avg,
        hull_areas(pos),
        speeds.sum(axis=1) / n,
        labels,
    )


def _quantile(x: np.ndarray, q: float) -> float:
    # midpoint convention: average the two neighbouring order statistics
    return float(np.quantile(x, q, method="midpoint"))


def summarize(values: Iterable[float], bin_width: float) -> DistributionSummary | None:
    """Mean, median, quartiles and a fixed-width histogram anchored at 0."""
    x = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
    if x.size == 0:
        return None
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    lo = math.floor(x.min() / bin_width)
    hi = max(math.ceil(x.max() / bin_width), lo + 1)
    edges = np.arange(lo, hi + 1) * bin_width
    counts, _ = np.histogram(x, bins=edges)
    return DistributionSummary(
        n=int(x.size),
        mean=float(x.mean()),
        median=_quantile(x, 0.5),
        q25=_quantile(x, 0.25),
        q75=_quantile(x, 0.75),
        bin_width=float(bin_width),
        bin_edges=tuple(float(e) for e in edges),
        counts=tuple(int(c) for c in counts),
    )


def summarize_by_phase(metrics: FrameMetrics,
                       bin_widths: Mapping[str, float] | None = None) -> dict:
    """``{phase: {metric: DistributionSummary | None}}`` for offense and defense frames.

    Transition frames are left out; an empty phase gives ``None`` entries.
    """
    widths = {**DEFAULT_BIN_WIDTHS, **(bin_widths or {})}
    out = {}
    for phase in (OFFENSE, DEFENSE):
        sel = metrics.phase == phase
        out[phase] = {m: summarize(getattr(metrics, m)[sel], widths[m]) for m in METRICS}
    return out


def band_shares(durations: Sequence[float]) -> dict:
    """Shares of durations below 10 s, within [10, 20] s and above 20 s."""
    d = np.asarray(durations, dtype=float)
    if d.size == 0:
        return {b: 0.0 for b in BANDS}
    lt = int((d < 10).sum())
    gt = int((d > 20).sum())
    return {"lt_10s": lt / d.size, "10_to_20s": (d.size - lt - gt) / d.size, "gt_20s": gt / d.size}


def duration_histogram(durations: ActionSummary | Sequence[float],
                       bin_width: float = DEFAULT_BIN_WIDTHS["duration_s"]) -> DistributionSummary | None:
    if isinstance(durations, ActionSummary):
        durations = durations.durations_s
    summary = summarize(durations, bin_width)
    if summary is None:
        return None
    return DistributionSummary(**{**summary.__dict__, "band_shares": band_shares(durations)})


def compare_with_reference(computed: DistributionSummary, reference: DistributionSummary) -> dict:
    """Signed differences computed - reference; no verdict attached."""
    if not math.isclose(computed.bin_width, reference.bin_width, rel_tol=1e-12):
        raise BinMismatchError(
            f"bin widths differ: {computed.bin_width} vs {reference.bin_width}"
        )
    out = {
        "n": {"computed": computed.n, "reference": reference.n},
        "delta": {k: getattr(computed, k) - getattr(reference, k)
                  for k in ("mean", "median", "q25", "q75")},
    }
    if computed.band_shares is not None and reference.band_shares is not None:
        out["delta"]["band_shares"] = {
            b: computed.band_shares[b] - reference.band_shares[b] for b in BANDS
        }
    return out


def read_reference_list(path: str | Path) -> list[float]:
    """One number per line; blank lines and ``#`` comments are skipped."""
    values = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise ValueError(f"{path}: unparsable value {line!r} at line {lineno}") from None
    return values
