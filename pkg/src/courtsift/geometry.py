"""Court model and the geometric primitives used by the filter and the statistics.

Coordinates are meters measured from the half-court line along the court
length (x) and, by default, from the court center along the width (y).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

KMH_PER_MS = 3.6


@dataclass(frozen=True)
class CourtSpec:
    half_length: float = 14.0
    half_width: float = 7.5
    ft_circle_center_abs_x: float = 8.2
    ft_circle_radius: float = 1.8
    transition_half_width: float = 4.0
    attack_positive_x_first_half: bool = True
    # "center": y in [-half_width, half_width]; "corner": y in [0, 2 * half_width]
    y_origin: str = "center"

    def __post_init__(self):
        for name in ("half_length", "half_width", "ft_circle_center_abs_x",
                     "ft_circle_radius", "transition_half_width"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.ft_circle_center_abs_x + self.ft_circle_radius >= self.half_length:
            raise ValueError("free-throw circle must lie inside the court length")
        if self.transition_half_width >= self.half_length:
            raise ValueError("transition band must be narrower than the half court")
        if self.y_origin not in ("center", "corner"):
            raise ValueError(f"unknown y_origin {self.y_origin!r}")

    @property
    def y_center(self) -> float:
        return self.half_width if self.y_origin == "corner" else 0.0

    @property
    def area(self) -> float:
        return 4.0 * self.half_length * self.half_width

    def with_overrides(self, **kw) -> "CourtSpec":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        return asdict(self)


def load_court_config(path: str | Path | None, **overrides) -> CourtSpec:
    """Build a :class:`CourtSpec` from a JSON document; missing keys keep defaults.

    Keyword overrides that are not ``None`` take precedence over the file.
    """
    data: dict = {}
    if path is not None:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(CourtSpec)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown court config keys: {sorted(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return CourtSpec(**data)


def on_court(p: Sequence[float], court: CourtSpec) -> bool:
    x, y = p
    return abs(x) <= court.half_length and abs(y - court.y_center) <= court.half_width


def in_ft_circle(p: Sequence[float], court: CourtSpec) -> bool:
    x, y = p
    r = court.ft_circle_radius
    cx, cy = court.ft_circle_center_abs_x, court.y_center
    return math.hypot(x - cx, y - cy) <= r or math.hypot(x + cx, y - cy) <= r


def on_court_mask(pos: np.ndarray, court: CourtSpec) -> np.ndarray:
    """Vectorised :func:`on_court` over an array of shape ``(..., 2)``.

    NaN coordinates (players not yet observed) are treated as off court.
    """
    x = pos[..., 0]
    y = pos[..., 1] - court.y_center
    with np.errstate(invalid="ignore"):
        return (np.abs(x) <= court.half_length) & (np.abs(y) <= court.half_width)


def ft_circle_mask(pos: np.ndarray, court: CourtSpec) -> np.ndarray:
    x = pos[..., 0]
    y = pos[..., 1] - court.y_center
    cx, r = court.ft_circle_center_abs_x, court.ft_circle_radius
    with np.errstate(invalid="ignore"):
        near = np.hypot(x - cx, y) <= r
        far = np.hypot(x + cx, y) <= r
    return near | far


def speed(v: Sequence[float]) -> float:
    return math.hypot(v[0], v[1])


def kmh(v: float) -> float:
    return v * KMH_PER_MS


def pair_distance(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def mean_position(points: Iterable[Sequence[float]]) -> tuple[float, float]:
    """Component-wise mean of exactly five on-court positions."""
    pts = list(points)
    if len(pts) != 5:
        raise ValueError(f"expected 5 on-court players, got {len(pts)}")
    return (sum(p[0] for p in pts) / 5, sum(p[1] for p in pts) / 5)


def frame_mean_position(frame, on_court_ids) -> tuple[float, float]:
    """Mean position of the players of ``frame`` whose ids are in ``on_court_ids``."""
    ids = set(on_court_ids)
    return mean_position(p.pos for p in frame.players if p.player_id in ids)


def mean_pair_distance(points: Sequence[Sequence[float]], ordered: bool = True) -> float:
    """Mean distance over all player pairs; 0 for fewer than two points.

    With ``ordered`` every pair is counted in both directions (n*n - n terms).
    Sums are exact (``math.fsum``) so both conventions agree bit for bit.
    """
    n = len(points)
    if n < 2:
        return 0.0
    if ordered:
        d = [pair_distance(points[i], points[j]) for i in range(n) for j in range(n) if i != j]
    else:
        d = [pair_distance(points[i], points[j]) for i in range(n) for j in range(i + 1, n)]
    return math.fsum(d) / len(d)


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Iterable[Sequence[float]]) -> list[tuple[float, float]]:
    """Hull vertices in counter-clockwise order (Andrew's monotone chain)."""
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(pts) <= 2:
        return pts
    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def polygon_area(vertices: Sequence[Sequence[float]]) -> float:
    """Absolute shoelace area of a simple polygon."""
    n = len(vertices)
    if n < 3:
        return 0.0
    s = math.fsum(
        vertices[i][0] * vertices[(i + 1) % n][1] - vertices[(i + 1) % n][0] * vertices[i][1]
        for i in range(n)
    )
    return abs(s) / 2.0


def convex_hull_area(points: Iterable[Sequence[float]]) -> float:
    """Area of the convex hull; 0 for collinear, coincident or < 3 points."""
    return polygon_area(convex_hull(points))


def hull_areas(points: np.ndarray) -> np.ndarray:
    """Convex hull area for each point set in a batch of shape ``(B, n, 2)``.

    Same monotone-chain construction as :func:`convex_hull`, run on all
    point sets at once with fixed-size stacks.
    """
    points = np.asarray(points, dtype=float)
    b, n, _ = points.shape
    if b == 0:
        return np.zeros(0)
    order = np.lexsort((points[..., 1], points[..., 0]), axis=-1)
    srt = np.take_along_axis(points, order[..., None], axis=1)
    rows = np.arange(b)

    def chain(seq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        stack = np.zeros((b, n, 2))
        size = np.zeros(b, dtype=np.intp)
        for i in range(n):
            p = seq[:, i]
            for _ in range(n):
                can = size >= 2
                o = stack[rows, np.maximum(size - 2, 0)]
                a = stack[rows, np.maximum(size - 1, 0)]
                cr = (a[:, 0] - o[:, 0]) * (p[:, 1] - o[:, 1]) - (a[:, 1] - o[:, 1]) * (p[:, 0] - o[:, 0])
                pop = can & (cr <= 0)
                if not pop.any():
                    break
                size = size - pop
            stack[rows, size] = p
            size = size + 1
        return stack, size

    lower, nl = chain(srt)
    upper, nu = chain(srt[:, ::-1])
    twice = np.zeros(b)
    for stack, size in ((lower, nl), (upper, nu)):
        x0, y0 = stack[:, :-1, 0], stack[:, :-1, 1]
        x1, y1 = stack[:, 1:, 0], stack[:, 1:, 1]
        valid = np.arange(n - 1)[None, :] < (size - 1)[:, None]
        twice += np.where(valid, x0 * y1 - x1 * y0, 0.0).sum(axis=1)
    return np.abs(twice) / 2.0
