"""Shared builders for small hand-made timelines and cached synthetic games."""
from __future__ import annotations

import numpy as np
import pytest

from courtsift.geometry import CourtSpec
from courtsift.ingest import GameTimeline
from courtsift.synth import Stoppage, SynthPlan, cs1_plan, generate, timeline_from_game

COURT = CourtSpec()
# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
# five on-court spots in the +x half, away from the free-throw circle
FIVE_SPOTS = np.array([[11.0, -5.0], [11.0, 5.0], [6.0, -5.0], [6.0, 5.0], [5.0, 0.0]])
BENCH = np.array([-3.0, -9.0])


def make_timeline(ms, pos, vel, observed=None, roster=None) -> GameTimeline:
    ms = np.asarray(ms, dtype=np.int64)
    pos = np.asarray(pos, dtype=float)
    vel = np.asarray(vel, dtype=float)
    k = pos.shape[1]
    if observed is None:
        observed = ~np.isnan(pos[..., 0])
    roster = roster or tuple(f"p{j:02d}" for j in range(k))
    return GameTimeline(ms, pos, vel, np.asarray(observed, dtype=bool), tuple(roster))


def lineup_frames(n, k=7, step_ms=20, speed_ms=None, spots=FIVE_SPOTS, start_ms=0):
    """``n`` frames, players 0-4 on court at ``spots`` and the rest on the bench.

    ``speed_ms`` is an (n,) or (n, 5) array of on-court speeds in m/s along x.
    """
    ms = start_ms + np.arange(n) * step_ms
    pos = np.empty((n, k, 2))
    pos[:, :5] = spots
    pos[:, 5:] = BENCH
    vel = np.zeros((n, k, 2))
    if speed_ms is not None:
        sp = np.asarray(speed_ms, dtype=float)
        vel[:, :5, 0] = sp[:, None] if sp.ndim == 1 else sp
    return ms, pos, vel


@pytest.fixture(scope="session")
def small_game():
    plan = SynthPlan(n_actions=8, detect_prob=1.0, seed=3,
                     stoppages=[Stoppage("halftime", 60.0, after_action=4),
                                Stoppage("free_throw", 12.0), Stoppage("slow_run", 6.0, peak_kmh=5.0)])
    game = generate(plan)
    return game, timeline_from_game(game)


@pytest.fixture(scope="session")
def cs1_game():
    game = generate(cs1_plan())
    return game, timeline_from_game(game)


def random_small_timeline(rng: np.random.Generator, n: int | None = None, k: int = 7) -> GameTimeline:
    """A short messy timeline: gaps, lineup changes, free-throw dwells, slow stretches.

    Speeds come in blocks so runs of all-slow frames of varied length appear.
    """
    n = n or int(rng.integers(20, 120))
    steps = rng.choice([5, 10, 20, 40, 80, 150, 400, 1001, 1500], size=n, p=[.1, .2, .2, .15, .1, .1, .07, .04, .04])
    ms = np.cumsum(steps).astype(np.int64)
    pos = np.empty((n, k, 2))
    pos[:, :5] = FIVE_SPOTS + rng.normal(0, 0.3, size=(n, 5, 2))
    pos[:, 5:] = BENCH
    # some frames with a sixth player on court or a starter off court
    odd = rng.random(n) < 0.1
    pos[odd, 5] = [0.0, 0.0]
    gone = rng.random(n) < 0.05
    pos[gone, 0] = [20.0, 0.0]
    # free-throw dwells by player 4
    for _ in range(rng.integers(0, 3)):
        a = int(rng.integers(0, n))
        b = min(n, a + int(rng.integers(1, 30)))
        pos[a:b, 4] = [8.2, 0.5]
    # block-wise speeds, km/h spread around the thresholds
    vel = np.zeros((n, k, 2))
    i = 0
    while i < n:
        b = min(n, i + int(rng.integers(1, 25)))
        level = rng.choice([2.0, 7.0, 8.5, 9.0, 9.5, 12.0])
        vel[i:b, :5, 0] = level / 3.6 * rng.uniform(0.3, 1.0, size=(b - i, 5))
        if rng.random() < 0.5:
            vel[i:b, int(rng.integers(5)), 0] = level / 3.6
        i = b
    observed = np.ones((n, k), dtype=bool)
    unseen = rng.random(n) < 0.03
    observed[unseen, 1] = False
    pos[unseen, 1] = np.nan
    vel[unseen, 1] = np.nan
    return make_timeline(ms, pos, vel, observed)


OFFSETS = np.array([[2.0, -3.0], [2.0, 3.0], [-1.0, -4.0], [-1.0, 4.0], [-2.0, 0.0]])


def team_path_timeline(mean_x, ms=None, k=7, mirror=False) -> GameTimeline:
    """Five on-court players whose exact mean x follows ``mean_x``; bench players off court."""
    mean_x = np.asarray(mean_x, dtype=float)
    n = len(mean_x)
    ms = np.arange(n, dtype=np.int64) * 20 if ms is None else np.asarray(ms, dtype=np.int64)
    pos = np.empty((n, k, 2))
    pos[:, :5] = OFFSETS
    # offsets sum to zero, so the team mean follows mean_x (exactly for integer means)
    pos[:, :5, 0] += mean_x[:, None]
    pos[:, 5:] = BENCH
    if mirror:
        pos[..., 0] = -pos[..., 0]
    vel = np.full((n, k, 2), 1.0)
    return make_timeline(ms, pos, vel)


def random_mean_path(rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Random walk of the team mean x across the court, with occasional exact band hits."""
    n = n or int(rng.integers(5, 200))
    x = np.cumsum(rng.normal(0, 1.2, size=n)) + rng.uniform(-8, 8)
    x = np.clip(x, -9.0, 9.0)
    hit = rng.random(n) < 0.05
    x[hit] = rng.choice([-4.0, 4.0], size=int(hit.sum()))
    return x
