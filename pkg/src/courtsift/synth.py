"""Synthetic games with known ground truth.

A game is built as a continuous-time schedule of kinematic segments (holds,
walks, circling around formation slots, fast transitions between halves),
sampled on an irregular ~80 Hz clock. Each player is detected on a random
subset of ticks, so the record files are asynchronous across players the way
real tracking feeds are. Velocities are exact derivatives of the positions
plus bounded noise.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from .geometry import KMH_PER_MS, CourtSpec, on_court_mask
from .ingest import LABELS, Manifest, ManifestEntry, RecordTable, write_manifest

STOPPAGE_KINDS = ("bench", "free_throw", "slow_run", "halftime")

RADIUS = 1.0  # players circle their formation slot at this radius
RUN_SPEED = 3.5  # m/s, the one running player during normal play
JOG_SPEED = 1.0  # m/s, everybody else during normal play
WALK_SPEED = 1.8  # m/s, any movement during a stoppage
HOLD_S = 4.6  # still time bracketing roster changes; longer than any slow-run threshold
MIN_SET_S = 1.0
TRANSITION_S = (2.6, 3.4)

OFFENSE_SLOTS = np.array([[11.8, -5.2], [11.8, 5.2], [6.6, -5.4], [6.6, 5.4], [4.9, 1.2]])
DEFENSE_SLOTS = np.array([[11.6, -2.9], [11.6, 2.9], [7.8, -4.6], [7.8, 4.6], [4.8, -1.0]])


class InfeasiblePlan(ValueError):
    pass


@dataclass
class Stoppage:
    kind: str
    duration_s: float
    # slow_run only: speed of the fastest on-court player
    peak_kmh: float = 0.0
    # slow_run only: happens inside an action, the team keeps its half
    within_action: bool = False
    # 1-based action the stoppage follows (or sits in); random when None
    after_action: int | None = None


@dataclass
class Lull:
    """Active play where nobody exceeds ``peak_kmh``."""

    duration_s: float
    peak_kmh: float


@dataclass
class SynthPlan:
    n_actions: int = 12
    action_median_s: float = 15.66
    action_sigma: float = 0.35
    action_min_s: float = 5.0
    action_max_s: float = 45.0
    # rescale drawn durations to this total when set
    active_minutes: float | None = None
    # durations given to randomly chosen actions as-is, never rescaled
    planted_durations_s: list[float] = field(default_factory=list)
    sampling_hz: float = 80.0
    jitter: float = 0.3
    detect_prob: float = 0.7
    roster_size: int = 12
    offense_spacing_m: float = 7.96
    defense_spacing_m: float = 6.17
    stoppages: list[Stoppage] = field(default_factory=list)
    lulls: list[Lull] = field(default_factory=list)
    pregame_s: float = 30.0  # 0: the recording starts in play
    postgame_s: float = 30.0  # 0: the recording ends in play
    vel_noise_ms: float = 0.01
    attack_positive_x_first_half: bool = True
    emit_extra_labels: bool = False
    team: str = "Synthetic"
    date: str = "2017-01-01"
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthPlan":
        doc = dict(doc)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise InfeasiblePlan(f"unknown plan keys: {sorted(unknown)}")
        try:
            doc["stoppages"] = [Stoppage(**s) for s in doc.get("stoppages", [])]
            doc["lulls"] = [Lull(**x) for x in doc.get("lulls", [])]
        except TypeError as exc:
            raise InfeasiblePlan(f"bad stoppage or lull entry: {exc}") from None
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path) -> "SynthPlan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def cs1_plan(seed: int = 1) -> SynthPlan:
    """A 151-action game with about 40 active minutes in a ~90 minute session.

    Besides the ordinary stoppages it plants four episode families that pin
    the active-minutes surface around (9.0 km/h, 2.5 s): active lulls with a
    9.1 km/h peak and 2.38 s all-slow lulls (kept at that cell, dropped by a
    larger speed or shorter duration threshold), and inactive 8.9 km/h jogs
    and 2.62 s whistles (dropped there, kept by a smaller speed or longer
    duration threshold).
    """
    stoppages = [
        Stoppage("bench", 120.0, after_action=38),
        Stoppage("halftime", 900.0, after_action=76),
        Stoppage("bench", 120.0, after_action=114),
    ]
    stoppages += [Stoppage("bench", 60.0) for _ in range(8)]
    stoppages += [Stoppage("free_throw", 14.0) for _ in range(14)]
    stoppages += [Stoppage("slow_run", 8.0, peak_kmh=6.5) for _ in range(22)]
    stoppages += [Stoppage("slow_run", 2.62, within_action=True) for _ in range(32)]
    stoppages += [Stoppage("slow_run", 6.0, peak_kmh=8.9, within_action=True) for _ in range(20)]
    lulls = [Lull(6.0, 9.1) for _ in range(5)] + [Lull(2.38, 5.0) for _ in range(20)]
    return SynthPlan(
        n_actions=151,
        active_minutes=40.0,
        # four long possessions fall outside the 4-38 s window: 147 of 151 inside
        planted_durations_s=[39.5, 41.0, 42.5, 44.0],
        stoppages=stoppages,
        lulls=lulls,
        pregame_s=240.0,
        postgame_s=180.0,
        team="Synthetic CS1",
        seed=seed,
    )


PRESETS: dict[str, Callable[..., SynthPlan]] = {
    "cs1": cs1_plan,
    "small": lambda seed=0: SynthPlan(
        n_actions=10,
        stoppages=[Stoppage("halftime", 60.0, after_action=5), Stoppage("free_throw", 12.0),
                   Stoppage("slow_run", 6.0, peak_kmh=5.0)],
        seed=seed,
    ),
}


# --- ground truth -----------------------------------------------------------

@dataclass
class GroundTruth:
    active_intervals: list  # [start_ms, end_ms] of contiguous active ticks
    planted_active_s: float
    active_minutes_frames: float  # capped-step minutes over the planted active ticks
    actions: list  # dicts: act_id, start_ms, end_ms, side, phase, duration_s
    stoppages: list  # dicts: kind, start_ms, end_ms, within_action
    expected_removals: dict  # step -> list of [start_ms, end_ms]
    halftime_ms: int | None
    attack_positive_x_first_half: bool
    n_frames: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SynthGame:
    plan: SynthPlan
    court: CourtSpec
    roster: tuple[str, ...]
    tables: dict  # player id -> RecordTable
    truth: GroundTruth
    tick_ms: np.ndarray
    active: np.ndarray  # per tick
    action_index: np.ndarray  # per tick, 0 outside actions

    @property
    def metadata(self) -> dict:
        return {"team": self.plan.team, "date": self.plan.date}


# --- schedule ---------------------------------------------------------------

@dataclass
class _Segment:
    t0: float
    t1: float
    fill: Callable  # (tt seconds since t0) -> (pos (n,k,2), vel (n,k,2))
    active: bool
    action: int  # 1-based, 0 when between actions
    stoppage: int = -1  # index into the stoppage log


def _hold_fill(P):
    P = P.copy()

    def fill(tt):
        n = len(tt)
        return np.broadcast_to(P, (n, *P.shape)).copy(), np.zeros((n, *P.shape))
    return fill


def _walk_fill(P, targets, travel):
    """Linear moves P -> targets, player i arriving after travel[i] seconds."""
    P, targets = P.copy(), targets.copy()
    travel = np.maximum(np.asarray(travel, dtype=float), 1e-9)
    delta = targets - P
    rate = delta / travel[:, None]

    def fill(tt):
        frac = np.clip(tt[:, None] / travel[None, :], 0.0, 1.0)
        pos = P[None] + frac[..., None] * delta[None]
        moving = (tt[:, None] < travel[None, :])[..., None]
        vel = np.where(moving, rate[None], 0.0)
        return pos, vel
    return fill


def _circle_fill(P, lineup, centers, theta0, omega):
    """Lineup players circle their centers; everybody else holds."""
    P = P.copy()
    lineup = np.asarray(lineup)

    def fill(tt):
        n = len(tt)
        pos = np.broadcast_to(P, (n, *P.shape)).copy()
        vel = np.zeros((n, *P.shape))
        th = theta0[None, :] + omega[None, :] * tt[:, None]
        c, s = np.cos(th), np.sin(th)
        pos[:, lineup, 0] = centers[None, :, 0] + RADIUS * c
        pos[:, lineup, 1] = centers[None, :, 1] + RADIUS * s
        vel[:, lineup, 0] = -RADIUS * omega[None, :] * s
        vel[:, lineup, 1] = RADIUS * omega[None, :] * c
        return pos, vel
    return fill


class _Builder:
    def __init__(self, plan: SynthPlan, court: CourtSpec, rng: np.random.Generator):
        self.plan, self.court, self.rng = plan, court, rng
        k = plan.roster_size
        seats_x = np.linspace(-(k - 1) / 2, (k - 1) / 2, k)
        seat_y = court.y_center - (court.half_width + 1.0)
        self.seats = np.column_stack([seats_x, np.full(k, seat_y)])
        self.P = self.seats.copy()
        self.t = 0.0
        self.segments: list[_Segment] = []
        self.stoppage_log: list[dict] = []

    def add(self, duration, fill, end_pos, active, action, stoppage=-1):
        if duration <= 0:
            return
        self.segments.append(_Segment(self.t, self.t + duration, fill, active, action, stoppage))
        self.t += duration
        self.P = end_pos.copy()

    def hold(self, duration, active=False, action=0, stoppage=-1):
        self.add(duration, _hold_fill(self.P), self.P, active, action, stoppage)

    def walk(self, targets, movers=None, active=False, action=0, stoppage=-1, speed=WALK_SPEED):
        """Walk ``movers`` to their targets; returns the time taken."""
        targets = targets.copy()
        if movers is not None:
            keep = np.ones(len(self.P), bool)
            keep[movers] = False
            targets[keep] = self.P[keep]
        dist = np.hypot(*(targets - self.P).T)
        travel = dist / speed
        duration = float(travel.max()) if len(travel) else 0.0
        if duration > 0:
            self.add(duration, _walk_fill(self.P, targets, travel), targets, active, action, stoppage)
        return duration

    def move_all(self, targets, duration, active, action):
        travel = np.full(len(self.P), duration)
        self.add(duration, _walk_fill(self.P, targets, travel), targets, active, action)


def _draw_durations(plan: SynthPlan, rng) -> np.ndarray:
    d = plan.action_median_s * np.exp(plan.action_sigma * rng.standard_normal(plan.n_actions))
    d = np.clip(d, plan.action_min_s, plan.action_max_s)
    planted = np.zeros(plan.n_actions, dtype=bool)
    if plan.planted_durations_s:
        idx = rng.choice(plan.n_actions, len(plan.planted_durations_s), replace=False)
        d[idx] = plan.planted_durations_s
        planted[idx] = True
    if plan.active_minutes is not None:
        fixed = d[planted].sum()
        for _ in range(8):
            free = d[~planted]
            scale = (plan.active_minutes * 60.0 - fixed) / free.sum()
            d[~planted] = np.clip(free * scale, plan.action_min_s, plan.action_max_s)
    return d


def _formation(template: np.ndarray, target_spacing: float, side: int, court: CourtSpec, rng) -> np.ndarray:
    base = template.copy()
    pairs = [np.hypot(*(base[i] - base[j])) for i in range(5) for j in range(i + 1, 5)]
    centroid = base.mean(axis=0)
    base = centroid + (base - centroid) * (target_spacing / np.mean(pairs))
    if not _slots_ok(base, court):
        raise InfeasiblePlan(f"spacing {target_spacing} m does not fit the court geometry")
    for _ in range(20):
        cand = base + rng.uniform(-0.3, 0.3, size=base.shape)
        if _slots_ok(cand, court):
            base = cand
            break
    out = base.copy()
    out[:, 0] *= side
    out[:, 1] += court.y_center
    return out


def _slots_ok(slots: np.ndarray, court: CourtSpec) -> bool:
    margin = 0.3
    if np.any(np.abs(slots[:, 0]) + RADIUS > court.half_length - margin):
        return False
    if np.any(np.abs(slots[:, 1]) + RADIUS > court.half_width - margin):
        return False
    ft = np.hypot(slots[:, 0] - court.ft_circle_center_abs_x, slots[:, 1])
    if np.any(ft < court.ft_circle_radius + RADIUS + 0.1):
        return False
    return slots[:, 0].mean() > court.transition_half_width + 2.0


def _validate(plan: SynthPlan):
    if plan.n_actions < 1:
        raise InfeasiblePlan("need at least one action")
    if plan.sampling_hz <= 0:
        raise InfeasiblePlan("sampling_hz must be positive")
    if not 0 < plan.detect_prob <= 1:
        raise InfeasiblePlan("detect_prob must be in (0, 1]")
    if not 0 <= plan.jitter < 1:
        raise InfeasiblePlan("jitter must be in [0, 1)")
    if plan.pregame_s < 0 or plan.postgame_s < 0:
        raise InfeasiblePlan("pregame_s and postgame_s must be non-negative")
    if plan.roster_size < 7:
        raise InfeasiblePlan("roster needs at least 7 players")
    if plan.action_min_s < 2.0 / plan.sampling_hz:
        raise InfeasiblePlan("actions shorter than two samples")
    if plan.action_min_s > plan.action_max_s:
        raise InfeasiblePlan("action_min_s exceeds action_max_s")
    if len(plan.planted_durations_s) > plan.n_actions:
        raise InfeasiblePlan("more planted durations than actions")
    if any(d < plan.action_min_s for d in plan.planted_durations_s):
        raise InfeasiblePlan("planted durations must be at least action_min_s")
    for s in plan.stoppages:
        if s.kind not in STOPPAGE_KINDS:
            raise InfeasiblePlan(f"unknown stoppage kind {s.kind!r}")
        if s.duration_s <= 0:
            raise InfeasiblePlan("stoppage durations must be positive")
        if s.within_action and s.kind != "slow_run":
            raise InfeasiblePlan("only slow_run stoppages can sit inside an action")
        if s.peak_kmh < 0 or (s.peak_kmh >= 8.0 and not s.within_action):
            raise InfeasiblePlan("between-action slow runs must stay under walking pace")
        limit = plan.n_actions if s.within_action else plan.n_actions - 1
        if s.after_action is not None and not 1 <= s.after_action <= limit:
            raise InfeasiblePlan(f"after_action {s.after_action} out of range")
    if sum(s.kind == "halftime" for s in plan.stoppages) > 1:
        raise InfeasiblePlan("at most one halftime")
    between = [s for s in plan.stoppages if not s.within_action]
    if len(between) > plan.n_actions - 1:
        raise InfeasiblePlan("more between-action stoppages than action boundaries")
    for lull in plan.lulls:
        if lull.duration_s <= 0 or lull.peak_kmh <= 0:
            raise InfeasiblePlan("lulls need positive duration and peak speed")


def _place(plan: SynthPlan, durations: np.ndarray, rng) -> tuple[dict, dict]:
    """Assign between-action stoppages to boundaries and episodes to actions long enough to hold them."""
    n = plan.n_actions
    between: dict[int, Stoppage] = {}
    episodes: dict[int, object] = {}
    fixed = [s for s in plan.stoppages if s.after_action is not None]
    loose = [s for s in plan.stoppages if s.after_action is None]
    for s in fixed:
        table = episodes if s.within_action else between
        if s.after_action in table:
            raise InfeasiblePlan(f"two stoppages placed at action {s.after_action}")
        if s.within_action and durations[s.after_action - 1] < _episode_need(s):
            raise InfeasiblePlan(f"action {s.after_action} too short for its planted episode")
        table[s.after_action] = s
    free_b = [i for i in range(1, n) if i not in between]
    loose_b = [s for s in loose if not s.within_action]
    for s, slot in zip(loose_b, rng.permutation(free_b)[:len(loose_b)]):
        between[int(slot)] = s
    inner = [s for s in loose if s.within_action] + list(plan.lulls)
    for e in inner:
        free = [i for i in range(1, n + 1) if i not in episodes and durations[i - 1] >= _episode_need(e)]
        if not free:
            raise InfeasiblePlan("no action left that is long enough for a planted episode")
        episodes[int(rng.choice(free))] = e
    return between, episodes


def _episode_need(e) -> float:
    return (e.duration_s if isinstance(e, Lull) else 0.0) + 2 * MIN_SET_S + 3.0


def _speeds(n_lineup: int, runner: int, rng):
    sign = rng.choice([-1.0, 1.0], size=n_lineup)
    speeds = np.full(n_lineup, JOG_SPEED)
    speeds[runner] = RUN_SPEED
    return sign, speeds


def _set_pieces(duration_active: float, episode, normal_speed: np.ndarray, runner: int, split: float):
    """Sub-intervals of a set phase: (duration, speeds, active, stoppage or None).

    ``split`` in [0, 1] places the episode within the set phase.
    """
    if episode is None:
        return [(duration_active, normal_speed, True, None)]
    ep_speed = np.zeros_like(normal_speed)
    if isinstance(episode, Lull):
        peak = episode.peak_kmh / KMH_PER_MS
        ep_speed[:] = min(JOG_SPEED, 0.7 * peak)
        ep_speed[runner] = peak
        ep_active = True
        in_active = episode.duration_s
    else:
        ep_speed[runner] = episode.peak_kmh / KMH_PER_MS
        ep_active = False
        in_active = 0.0
    room = max(duration_active - in_active, 2 * MIN_SET_S)
    before = MIN_SET_S + split * (room - 2 * MIN_SET_S)
    return [
        (before, normal_speed, True, None),
        (episode.duration_s, ep_speed, ep_active, None if ep_active else episode),
        (room - before, normal_speed, True, None),
    ]


def _circle_end(centers, theta0, omega_pieces):
    theta = theta0 + sum(om * d for d, om in omega_pieces)
    return centers + RADIUS * np.column_stack([np.cos(theta), np.sin(theta)])


def generate(plan: SynthPlan, court: CourtSpec | None = None) -> SynthGame:
    """Build a synthetic game; identical output for identical plans."""
    court = court or CourtSpec(attack_positive_x_first_half=plan.attack_positive_x_first_half)
    _validate(plan)
    rng = np.random.default_rng(plan.seed)
    n, k = plan.n_actions, plan.roster_size
    durations = _draw_durations(plan, rng)
    between, episodes = _place(plan, durations, rng)

    halftime_after = next((i for i, s in between.items() if s.kind == "halftime"), None)
    first_attack = 1 if court.attack_positive_x_first_half else -1
    sides = np.empty(n, dtype=int)
    sides[0] = first_attack
    for i in range(1, n):
        sides[i] = -sides[i - 1]

    def attack_for(i):  # i is 1-based
        return first_attack if halftime_after is None or i <= halftime_after else -first_attack

    phases = ["O" if sides[i - 1] == attack_for(i) else "D" for i in range(1, n + 1)]
    slots = []
    for i in range(1, n + 1):
        tmpl, spacing = ((OFFENSE_SLOTS, plan.offense_spacing_m) if phases[i - 1] == "O"
                         else (DEFENSE_SLOTS, plan.defense_spacing_m))
        slots.append(_formation(tmpl, spacing, sides[i - 1], court, rng))
    theta0 = [rng.uniform(0, 2 * np.pi, 5) for _ in range(n)]
    starts = [s + RADIUS * np.column_stack([np.cos(th), np.sin(th)]) for s, th in zip(slots, theta0)]

    b = _Builder(plan, court, rng)
    lineup = np.sort(rng.choice(k, 5, replace=False))

    def log_stoppage(kind, within):
        b.stoppage_log.append({"kind": kind, "within_action": within, "t0": b.t})
        return len(b.stoppage_log) - 1

    def close_stoppage(idx):
        b.stoppage_log[idx]["t1"] = b.t

    # pregame: everybody seated, the first lineup walks on
    if plan.pregame_s > 0:
        sid = log_stoppage("pregame", False)
        b.hold(plan.pregame_s, stoppage=sid)
        target = b.P.copy()
        target[lineup] = starts[0]
        b.walk(target, movers=lineup, stoppage=sid)
        b.hold(HOLD_S, stoppage=sid)
        close_stoppage(sid)
    else:  # the recording starts in play
        b.P[lineup] = starts[0]

    incoming = 0.0  # part of the previous transition already credited to this action
    ft_ticks = []  # (t0, t1, shooter) intervals for the free-throw truth
    for i in range(1, n + 1):
        runner = int(rng.integers(5))
        sign, speed = _speeds(5, runner, rng)
        follow = between.get(i) if i < n else None
        has_transition = i < n and follow is None
        episode = episodes.get(i)
        centers = slots[i - 1]
        th0 = theta0[i - 1]

        split = rng.uniform()
        t_draw = rng.uniform(*TRANSITION_S)

        def transition_time(end_lineup):
            dist = np.hypot(*(starts[i] - end_lineup).T)
            # the fastest mover never drops below the running speed
            return min(t_draw, float(dist.max()) / RUN_SPEED)

        # size the set phase so the action's active time matches its draw;
        # the outgoing transition part depends on where the circling ends
        out_part = 0.0
        set_active = max(durations[i - 1] - incoming, MIN_SET_S)
        for _ in range(6):
            pieces = _set_pieces(set_active, episode, speed, runner, split)
            if has_transition:
                end = _circle_end(centers, th0, [(d, sign * sp / RADIUS) for d, sp, _, _ in pieces])
                out_part = _band_exit_time(end, starts[i], sides[i], court, transition_time(end))
            new_active = max(durations[i - 1] - incoming - out_part, MIN_SET_S)
            if abs(new_active - set_active) < 1e-9:
                break
            set_active = new_active
        pieces = _set_pieces(set_active, episode, speed, runner, split)

        theta = th0.copy()
        for d, sp, active, stop in pieces:
            omega = sign * sp / RADIUS
            fill = _circle_fill(b.P, lineup, centers, theta, omega)
            theta = theta + omega * d
            end = b.P.copy()
            end[lineup] = centers + RADIUS * np.column_stack([np.cos(theta), np.sin(theta)])
            sid = log_stoppage("slow_run", True) if stop is not None else -1
            b.add(d, fill, end, active, i, sid)
            if stop is not None:
                close_stoppage(sid)

        if i == n:
            break
        if has_transition:
            # one straight-line move; frames up to the band exit belong to action i
            target = b.P.copy()
            target[lineup] = starts[i]
            t_tr = transition_time(b.P[lineup])
            before = _band_exit_time(b.P[lineup], starts[i], sides[i], court, t_tr)
            t_start = b.t
            fill_all = _walk_fill(b.P, target, np.full(k, t_tr))
            if before > 0:
                b.segments.append(_Segment(t_start, t_start + before, fill_all, True, i))
            b.segments.append(_Segment(t_start + before, t_start + t_tr, _shifted(fill_all, before), True, i + 1))
            b.t = t_start + t_tr
            b.P = target
            incoming = t_tr - before
            continue

        # a stoppage between action i and i + 1; the team changes half during it
        stop = follow
        sid = log_stoppage(stop.kind, False)
        t0 = b.t
        target = b.P.copy()
        if stop.kind == "slow_run":
            speed_walk = min(WALK_SPEED, stop.peak_kmh / KMH_PER_MS) if stop.peak_kmh > 0 else WALK_SPEED
            target[lineup] = starts[i]
            b.hold(HOLD_S / 2, stoppage=sid)
            b.walk(target, movers=lineup, stoppage=sid, speed=speed_walk)
            b.hold(max(stop.duration_s - (b.t - t0), HOLD_S / 2), stoppage=sid)
        elif stop.kind == "free_throw":
            shooter = int(lineup[rng.integers(5)])
            spot = np.array([sides[i - 1] * court.ft_circle_center_abs_x, court.y_center])
            b.hold(HOLD_S, stoppage=sid)
            target[shooter] = spot
            b.walk(target, movers=[shooter], stoppage=sid)
            dwell0 = b.t
            b.hold(stop.duration_s, stoppage=sid)
            ft_ticks.append((dwell0, b.t, shooter))
            target = b.P.copy()
            target[lineup] = starts[i]
            b.walk(target, movers=lineup, stoppage=sid)
            b.hold(HOLD_S, stoppage=sid)
        else:  # bench or halftime: everybody sits, a new lineup walks on
            b.hold(HOLD_S, stoppage=sid)
            target[lineup] = b.seats[lineup]
            b.walk(target, movers=lineup, stoppage=sid)
            new_lineup = np.sort(rng.choice(k, 5, replace=False))
            target = b.P.copy()
            target[new_lineup] = starts[i]
            # the walk back is at most as long as the walk off, roughly
            used = b.t - t0
            back = float(np.max(np.hypot(*(starts[i] - b.seats[new_lineup]).T)) / WALK_SPEED)
            b.hold(max(stop.duration_s - used - back - HOLD_S, 1.0), stoppage=sid)
            b.walk(target, movers=new_lineup, stoppage=sid)
            b.hold(HOLD_S, stoppage=sid)
            lineup = new_lineup
        close_stoppage(sid)
        incoming = 0.0

    # postgame
    if plan.postgame_s > 0:
        sid = log_stoppage("postgame", False)
        b.hold(HOLD_S, stoppage=sid)
        target = b.P.copy()
        target[lineup] = b.seats[lineup]
        b.walk(target, movers=lineup, stoppage=sid)
        b.hold(plan.postgame_s, stoppage=sid)
        close_stoppage(sid)

    return _sample(plan, court, b, sides, phases, ft_ticks)


def _shifted(fill, offset):
    def f(tt):
        return fill(tt + offset)
    return f


def _band_exit_time(start_lineup, end_lineup, new_side, court, duration) -> float:
    """Time into a straight-line transition at which the team mean leaves the band on the new side."""
    c0 = start_lineup[:, 0].mean()
    c1 = end_lineup[:, 0].mean()
    frac = (new_side * court.transition_half_width - c0) / (c1 - c0)
    return float(np.clip(frac, 0.0, 1.0)) * duration


def _sample(plan: SynthPlan, court: CourtSpec, b: _Builder, sides, phases, ft_ticks) -> SynthGame:
    rng = np.random.default_rng([plan.seed, 1])
    total_ms = b.t * 1000.0
    mean_dt = 1000.0 / plan.sampling_hz
    est = int(total_ms / (mean_dt * (1 - plan.jitter))) + 16
    steps = np.maximum(np.rint(mean_dt * rng.uniform(1 - plan.jitter, 1 + plan.jitter, est)), 1)
    tick_ms = np.concatenate(([0], np.cumsum(steps))).astype(np.int64)
    tick_ms = tick_ms[tick_ms < total_ms]
    tt = tick_ms / 1000.0
    n_t, k = len(tick_ms), plan.roster_size

    pos = np.empty((n_t, k, 2))
    vel = np.empty((n_t, k, 2))
    active = np.zeros(n_t, dtype=bool)
    action_index = np.zeros(n_t, dtype=np.int64)
    stoppage_index = np.full(n_t, -1, dtype=np.int64)
    bounds = np.searchsorted(tt, [s.t0 for s in b.segments] + [b.segments[-1].t1], side="left")
    for seg, i0, i1 in zip(b.segments, bounds[:-1], bounds[1:]):
        if i1 <= i0:
            continue
        p, v = seg.fill(tt[i0:i1] - seg.t0)
        pos[i0:i1], vel[i0:i1] = p, v
        active[i0:i1] = seg.active
        action_index[i0:i1] = seg.action
        stoppage_index[i0:i1] = seg.stoppage

    noise = rng.uniform(-plan.vel_noise_ms, plan.vel_noise_ms, size=vel.shape)
    pos_q = np.round(pos, 2) + 0.0
    vel_q = np.round(vel + noise, 2) + 0.0

    detect = rng.random((n_t, k)) < plan.detect_prob
    detect[0] = True  # the feed opens with a full snapshot
    empty = ~detect.any(axis=1)
    detect[np.flatnonzero(empty), rng.integers(k, size=int(empty.sum()))] = True

    roster = tuple(f"p{j + 1:02d}" for j in range(k))
    n_labels = len(LABELS) if plan.emit_extra_labels else 4
    tables = {}
    for j, pid in enumerate(roster):
        rows = np.flatnonzero(detect[:, j])
        vals = np.column_stack([pos_q[rows, j], vel_q[rows, j]])
        if n_labels > 4:
            vals = np.column_stack([vals, np.zeros((len(rows), n_labels - 4))])
        tables[pid] = RecordTable(
            pid,
            np.tile(np.arange(n_labels, dtype=np.int8), len(rows)),
            np.repeat(tick_ms[rows], n_labels),
            vals.ravel(),
        )

    truth = _truth(plan, court, b, tick_ms, pos, active, action_index, stoppage_index, sides, phases, ft_ticks)
    return SynthGame(plan, court, roster, tables, truth, tick_ms, active, action_index)


def _intervals(ms: np.ndarray, flag: np.ndarray) -> list:
    if not flag.any():
        return []
    edges = np.diff(np.concatenate(([0], flag.astype(np.int8), [0])))
    s = np.flatnonzero(edges == 1)
    e = np.flatnonzero(edges == -1) - 1
    return [[int(ms[a]), int(ms[z])] for a, z in zip(s, e)]


def _truth(plan, court, b, tick_ms, pos, active, action_index, stoppage_index, sides, phases, ft_ticks):
    from .filtering import capped_steps_ms

    steps = capped_steps_ms(tick_ms, 1000)
    actions = []
    for i in range(1, plan.n_actions + 1):
        ticks = np.flatnonzero((action_index == i) & active)
        if len(ticks) == 0:
            continue
        s_ms, e_ms = int(tick_ms[ticks[0]]), int(tick_ms[ticks[-1]])
        actions.append({
            "act_id": i, "start_ms": s_ms, "end_ms": e_ms, "side": int(sides[i - 1]),
            "phase": phases[i - 1], "duration_s": (e_ms - s_ms) / 1000.0,
        })

    count = on_court_mask(pos, court).sum(axis=1)
    inactive = ~active
    lineup_drop = inactive & (count != 5)
    ft = np.zeros(len(tick_ms), dtype=bool)
    tt = tick_ms / 1000.0
    for t0, t1, shooter in ft_ticks:
        sel = (tt >= t0 - 3.0) & (tt < t1 + 3.0)
        d = np.hypot(pos[sel, shooter, 0] - np.sign(pos[sel, shooter, 0]) * court.ft_circle_center_abs_x,
                     pos[sel, shooter, 1] - court.y_center)
        ft[np.flatnonzero(sel)[d <= court.ft_circle_radius]] = True
    ft &= inactive & ~lineup_drop
    slow_drop = inactive & ~lineup_drop & ~ft

    stoppages = []
    for entry in b.stoppage_log:
        stoppages.append({
            "kind": entry["kind"],
            "within_action": entry["within_action"],
            "start_ms": int(round(entry["t0"] * 1000)),
            "end_ms": int(round(entry["t1"] * 1000)),
        })
    half = next((s for s in stoppages if s["kind"] == "halftime"), None)
    planted = sum(s.t1 - s.t0 for s in b.segments if s.active)
    return GroundTruth(
        active_intervals=_intervals(tick_ms, active),
        planted_active_s=float(planted),
        active_minutes_frames=int(steps[active].sum()) / 60000.0,
        actions=actions,
        stoppages=stoppages,
        expected_removals={
            "lineup": _intervals(tick_ms, lineup_drop),
            "free_throw": _intervals(tick_ms, ft),
            "slow": _intervals(tick_ms, slow_drop),
        },
        halftime_ms=None if half is None else (half["start_ms"] + half["end_ms"]) // 2,
        attack_positive_x_first_half=court.attack_positive_x_first_half,
        n_frames=int(len(tick_ms)),
    )


# --- output -----------------------------------------------------------------

def write_record_table(table: RecordTable, path: str | Path) -> None:
    df = pd.DataFrame({
        "label": np.asarray(LABELS, dtype=object)[table.label],
        "ms": table.ms,
        "value": table.value,
    })
    df.to_csv(path, index=False, float_format="%.2f", lineterminator="\n")


def write_game(game: SynthGame, out_dir: str | Path) -> Path:
    """Write record files, a manifest and the ground-truth document; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for pid in game.roster:
        f = out / f"{pid}.csv"
        write_record_table(game.tables[pid], f)
        entries.append(ManifestEntry(Path(f.name), pid, f"Player {pid[1:]}"))
    manifest_path = out / "manifest.json"
    write_manifest(manifest_path, Manifest(tuple(entries), game.plan.team, game.plan.date))
    doc = {"plan": game.plan.to_dict(), "court": game.court.to_dict(), "truth": game.truth.to_dict()}
    (out / "ground_truth.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return manifest_path


def timeline_from_game(game: SynthGame):
    from .ingest import merge_timeline

    return merge_timeline(game.tables, game.metadata)
