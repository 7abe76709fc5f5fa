"""Command-line entry point: ingest, filter, calibrate, stats, synth.

Exit codes: 0 success, 1 internal contract violation, 2 user-input error.
Every numeric flag carries its unit in the name. Settings resolve as
flag > ``--config`` JSON document > built-in default.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from .calibration import DEFAULT_H2, DEFAULT_H3, grid_values, recommend, sweep
from .filtering import FilterParams, filter_lineup, run_filter
from .geometry import load_court_config
from .ingest import (
    GameTimeline,
    ManifestError,
    RecordParseError,
    merge_timeline,
    read_manifest,
    read_record_table,
    read_wide,
    wide_columns,
    write_wide,
)
from .segmentation import (
    SideConfig,
    assign_actions,
    infer_halftime,
    label_phases,
    read_segment_table,
    segment_table,
    segments_from_ids,
    summarize_actions,
    write_segment_table,
)
from .stats import (
    DEFAULT_BIN_WIDTHS,
    METRICS,
    BinMismatchError,
    DistributionSummary,
    compare_with_reference,
    compute_frame_metrics,
    duration_histogram,
    read_reference_list,
    summarize_by_phase,
)
from .synth import PRESETS, InfeasiblePlan, SynthPlan, generate, write_game

log = logging.getLogger("courtsift")

CONFIG_KEYS = {
    "h1_s", "h2_kmh", "h3_s", "band_m", "halftime_ms", "grid_h2", "grid_h3",
    "target_minutes", "duration_window_s", "seed", "run_gap_break_ms",
    "active_gap_cap_ms", "max_intra_action_gap_ms", "duration_bin_s",
}
DEFAULTS: dict[str, Any] = {
    "h1_s": 10.0, "h2_kmh": 9.0, "h3_s": 2.5, "band_m": 4.0, "halftime_ms": None,
    "grid_h2": None, "grid_h3": None, "target_minutes": 40.0, "duration_window_s": "4:38",
    "seed": None, "run_gap_break_ms": 1000, "active_gap_cap_ms": 1000,
    "max_intra_action_gap_ms": None, "duration_bin_s": DEFAULT_BIN_WIDTHS["duration_s"],
}
DOMINANT_PHASE_NOTE = ("per-action extension: phase at the action's first frame outside the "
                       "transition band; empty when the action never leaves the band")

USER_ERRORS = (FileNotFoundError, IsADirectoryError, RecordParseError, ManifestError,
               InfeasiblePlan, BinMismatchError, json.JSONDecodeError)


class UserError(Exception):
    pass


class ContractViolation(Exception):
    pass


@contextmanager
def stage(name: str, input_stage: bool = False):
    """Map failures inside a pipeline stage to exit-code classes.

    In input stages any ``ValueError`` is the user's (bad file contents);
    elsewhere only the known input errors are.
    """
    try:
        yield
    except (UserError, ContractViolation):
        raise
    except USER_ERRORS as exc:
        raise UserError(f"{name}: {exc}") from exc
    except ValueError as exc:
        if input_stage:
            raise UserError(f"{name}: {exc}") from exc
        raise ContractViolation(f"{name}: {exc}") from exc
    except Exception as exc:  # noqa: BLE001 - anything else is our bug
        raise ContractViolation(f"{name}: {type(exc).__name__}: {exc}") from exc


# --- helpers ----------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def parse_grid(text: str, name: str) -> tuple[float, ...]:
    """``start:stop:step`` (inclusive) or a comma-separated list."""
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            return grid_values(*parts)
        values = tuple(float(p) for p in text.split(",") if p.strip())
        if not values:
            raise ValueError
        return values
    except ValueError:
        raise UserError(f"malformed {name} grid {text!r}; use start:stop:step or a comma list") from None


def parse_window(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(p) for p in str(text).split(":"))
    except ValueError:
        raise UserError(f"malformed duration window {text!r}; use lo:hi in seconds") from None
    if lo > hi:
        raise UserError(f"duration window {text!r} has lo > hi")
    return lo, hi


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with stage("config", input_stage=True):
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        unknown = set(doc) - CONFIG_KEYS
        if unknown:
            raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
        return doc


def resolve(args: argparse.Namespace, config: dict, key: str):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return DEFAULTS[key]


def filter_params(args, config) -> FilterParams:
    try:
        return FilterParams(
            h1_s=float(resolve(args, config, "h1_s")),
            h2_kmh=float(resolve(args, config, "h2_kmh")),
            h3_s=float(resolve(args, config, "h3_s")),
            run_gap_break_ms=int(resolve(args, config, "run_gap_break_ms")),
            active_gap_cap_ms=int(resolve(args, config, "active_gap_cap_ms")),
        )
    except ValueError as exc:
        raise UserError(f"parameters: {exc}") from exc


def court_spec(args, config):
    with stage("court config", input_stage=True):
        return load_court_config(getattr(args, "court_config", None),
                                 transition_half_width=resolve(args, config, "band_m"))


def load_input(args) -> tuple[GameTimeline, dict]:
    """Timeline from ``--manifest`` or ``--wide``, plus per-player record counts."""
    if bool(args.manifest) == bool(args.wide):
        raise UserError("give exactly one of --manifest or --wide")
    with stage("ingest", input_stage=True):
        if args.wide:
            return read_wide(args.wide), {}
        manifest = read_manifest(args.manifest)
        if not manifest.entries:
            raise ValueError(f"{args.manifest}: manifest lists no players")
        for e in manifest.entries:
            if not e.file.is_file():
                raise FileNotFoundError(f"record file not found: {e.file}")
        tables = {e.player_id: read_record_table(e.file, e.player_id, manifest.delimiter)
                  for e in manifest.entries}
        counts = {pid: len(t) for pid, t in tables.items()}
        return merge_timeline(tables, manifest.metadata), counts


def out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UserError(f"cannot create output directory {out}: {exc}") from exc
    return out




# --- commands ---------------------------------------------------------------

def cmd_ingest(args) -> int:
    timeline, counts = load_input(args)
    out = out_dir(args.out)
    with stage("ingest"):
        write_wide(timeline, out / "wide.csv")
        write_json(out / "ingest_report.json", {
            "rows": len(timeline),
            "players": timeline.n_players,
            "roster": list(timeline.roster),
            "columns": len(wide_columns(timeline.roster)),
            "records_per_player": counts,
            "first_ms": int(timeline.ms[0]) if len(timeline) else None,
            "last_ms": int(timeline.ms[-1]) if len(timeline) else None,
            "metadata": timeline.metadata,
        })
    return 0


def _empty_segment_frame() -> pd.DataFrame:
    return pd.DataFrame({"ms": pd.Series(dtype="int64"), "avg_pos_x": pd.Series(dtype=float),
                         "avg_pos_y": pd.Series(dtype=float), "label": pd.Series(dtype=str),
                         "act_id": pd.Series(dtype="int64")})


def cmd_filter(args) -> int:
    config = load_config(args.config)
    params = filter_params(args, config)
    court = court_spec(args, config)
    window = parse_window(resolve(args, config, "duration_window_s"))
    halftime = resolve(args, config, "halftime_ms")
    halftime = None if halftime is None else int(halftime)
    max_gap = resolve(args, config, "max_intra_action_gap_ms")
    timeline, _ = load_input(args)
    out = out_dir(args.out)
    warnings = params.feasibility_warnings()  # run_filter logs them

    with stage("filter"):
        reduced, report = run_filter(timeline, court, params)
    with stage("segment"):
        segments = []
        inferred = halftime is None
        if len(reduced):
            _, mask = filter_lineup(reduced, court)
            if halftime is None:
                halftime = infer_halftime(reduced.ms)
            sides = SideConfig(halftime, court.attack_positive_x_first_half)
            labels = label_phases(reduced, court, sides, mask)
            segments = assign_actions(reduced, labels, court, mask, sides, max_gap)
            ids = np.empty(len(reduced), dtype=np.int64)
            for s in segments:
                ids[s.start_index:s.stop_index] = s.act_id
            table = segment_table(reduced, labels, ids, mask, court)
        else:
            table = _empty_segment_frame()
        summary = summarize_actions(segments, window)
    with stage("write"):
        write_wide(reduced, out / "reduced.csv")
        write_segment_table(table, out / "segments.csv")
        pd.DataFrame({
            "act_id": [s.act_id for s in segments],
            "start_ms": [s.start_ms for s in segments],
            "end_ms": [s.end_ms for s in segments],
            "duration_s": [s.duration_s for s in segments],
            "dominant_phase": [s.dominant_phase or "" for s in segments],
        }).to_csv(out / "actions.csv", index=False, lineterminator="\n")
        write_json(out / "filter_report.json", {
            "report": report.to_dict(),
            "params": params.__dict__,
            "court": court.to_dict(),
            "sides": {
                "halftime_ms": halftime,
                "halftime_inferred": inferred,
                "attack_positive_x_first_half": court.attack_positive_x_first_half,
            },
            "actions": summary.to_dict(),
            "notes": {"dominant_phase": DOMINANT_PHASE_NOTE},
            "warnings": warnings,
        })
    return 0


def cmd_calibrate(args) -> int:
    config = load_config(args.config)
    params = filter_params(args, config)
    court = court_spec(args, config)
    h2_spec = resolve(args, config, "grid_h2")
    h3_spec = resolve(args, config, "grid_h3")
    h2 = DEFAULT_H2 if h2_spec is None else parse_grid(str(h2_spec), "h2")
    h3 = DEFAULT_H3 if h3_spec is None else parse_grid(str(h3_spec), "h3")
    if min(h2) <= 0 or min(h3) <= 0:
        raise UserError("grid values must be positive")
    target = float(resolve(args, config, "target_minutes"))
    timeline, _ = load_input(args)
    out = out_dir(args.out)
    for value in h2:
        if value <= 8:
            log.warning(f"grid includes h2_kmh={value}, at or below walking pace (8 km/h)")
            break
    with stage("calibrate"):
        grid = sweep(timeline, court, params, h2, h3)
        rec = recommend(grid, target)
    with stage("write"):
        grid.write_csv(out / "contour.csv")
        write_json(out / "calibration.json", {
            "h2_values_kmh": list(grid.h2_values),
            "h3_values_s": list(grid.h3_values),
            "h1_s": params.h1_s,
            "court": court.to_dict(),
            "recommendation": rec.to_dict(),
        })
    return 0


def _summary_doc(summary: DistributionSummary | None):
    return None if summary is None else summary.to_dict()


def _write_histogram(summary: DistributionSummary | None, path: Path) -> None:
    frame = (pd.DataFrame({"bin_lo": [], "bin_hi": [], "count": []}) if summary is None
             else summary.histogram_frame())
    frame.to_csv(path, index=False, lineterminator="\n")


def load_reference(path: str, bin_width: float) -> DistributionSummary | None:
    """A duration list (one value per line) or a JSON summary with its own bin width."""
    with stage("reference", input_stage=True):
        p = Path(path)
        if p.suffix.lower() == ".json":
            doc = json.loads(p.read_text(encoding="utf-8"))
            doc = doc.get("actions", {}).get("duration", doc) if "actions" in doc else doc
            band = doc.get("band_shares")
            return DistributionSummary(
                n=int(doc["n"]), mean=float(doc["mean"]), median=float(doc["median"]),
                q25=float(doc["q25"]), q75=float(doc["q75"]), bin_width=float(doc["bin_width"]),
                bin_edges=(), counts=(), band_shares=band,
            )
        return duration_histogram(read_reference_list(p), bin_width)


def cmd_stats(args) -> int:
    config = load_config(args.config)
    court = court_spec(args, config)
    window = parse_window(resolve(args, config, "duration_window_s"))
    bin_s = float(resolve(args, config, "duration_bin_s"))
    if bin_s <= 0:
        raise UserError("--duration-bin-s must be positive")
    with stage("stats input", input_stage=True):
        reduced = read_wide(args.reduced)
        table = read_segment_table(args.segments)
        if len(table) != len(reduced) or not np.array_equal(table["ms"].to_numpy(), reduced.ms):
            raise ValueError(f"{args.segments} does not align with {args.reduced}")
    reference = None if args.reference is None else load_reference(args.reference, bin_s)
    out = out_dir(args.out)

    with stage("stats"):
        labels = table["label"].to_numpy(dtype=str)
        ids = table["act_id"].to_numpy(dtype=np.int64)
        segments = segments_from_ids(reduced.ms, ids)
        actions = summarize_actions(segments, window)
        durations = duration_histogram(actions, bin_s)
        if len(reduced):
            _, mask = filter_lineup(reduced, court)
            if len(mask) != len(reduced):
                raise ValueError("reduced matrix has frames without five players on court")
            metrics = compute_frame_metrics(reduced, labels, mask)
        else:
            metrics = None
        by_phase = summarize_by_phase(metrics) if metrics is not None else {
            p: {m: None for m in METRICS} for p in ("O", "D")}
        comparison = None
        if reference is not None:
            if durations is None:
                raise BinMismatchError("no computed durations to compare with the reference")
            comparison = compare_with_reference(durations, reference)

    with stage("write"):
        doc = {
            "frames": len(reduced),
            "phases": {p: {m: _summary_doc(s) for m, s in ms.items()} for p, ms in by_phase.items()},
            "actions": {**actions.to_dict(), "duration": _summary_doc(durations)},
            "weighting": "frames weighted equally",
        }
        if comparison is not None:
            doc["comparison"] = {"reference": str(args.reference), "duration": comparison}
        write_json(out / "stats.json", doc)
        for phase, ms in by_phase.items():
            for metric, summary in ms.items():
                _write_histogram(summary, out / f"hist_{metric}_{phase}.csv")
        _write_histogram(durations, out / "hist_duration_s.csv")
    return 0


def cmd_synth(args) -> int:
    with stage("synth plan", input_stage=True):
        if args.plan:
            plan = SynthPlan.load(args.plan)
        else:
            plan = PRESETS[args.preset]()
        if args.seed is not None:
            plan.seed = int(args.seed)
    court = court_spec(args, {}) if args.court_config else None
    if court is not None:
        from dataclasses import replace
        court = replace(court, attack_positive_x_first_half=plan.attack_positive_x_first_half)
    with stage("synth", input_stage=True):
        game = generate(plan, court)
    with stage("write"):
        write_game(game, out_dir(args.out))
    return 0


# --- parser -----------------------------------------------------------------

def _add_input(p):
    p.add_argument("--manifest", help="JSON manifest listing per-player record files")
    p.add_argument("--wide", help="wide matrix CSV (as written by `ingest`)")


def _add_common(p):
    p.add_argument("--config", help="JSON document with default settings")
    p.add_argument("--court-config", help="JSON court geometry")
    p.add_argument("--band-m", type=float, help="transition band half-width, m (default 4)")


def _add_filter_params(p):
    p.add_argument("--h1-s", type=float, help="free-throw dwell threshold, s (default 10)")
    p.add_argument("--h2-kmh", type=float, help="slow-run speed threshold, km/h (default 9)")
    p.add_argument("--h3-s", type=float, help="slow-run duration threshold, s (default 2.5)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="courtsift", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="merge record files into a wide matrix")
    p.add_argument("--manifest", required=True)
    p.set_defaults(wide=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("filter", help="reduce to active play, label phases, number actions")
    _add_input(p)
    _add_common(p)
    _add_filter_params(p)
    p.add_argument("--halftime-ms", type=int, help="side swap instant (default: inferred)")
    p.add_argument("--duration-window-s", help="lo:hi action-duration window, s (default 4:38)")
    p.add_argument("--max-intra-action-gap-ms", type=int, help="also split actions on gaps (default off)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("calibrate", help="active minutes over an (h2, h3) grid")
    _add_input(p)
    _add_common(p)
    p.add_argument("--h1-s", type=float, help="free-throw dwell threshold, s (default 10)")
    p.add_argument("--grid-h2", help="km/h values, start:stop:step or list (default 8:11:0.2)")
    p.add_argument("--grid-h3", help="s values, start:stop:step or list (default 1:4:0.25)")
    p.add_argument("--target-minutes", type=float, help="target active minutes (default 40)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("stats", help="phase-split spacing/speed summaries and histograms")
    p.add_argument("--reduced", required=True, help="reduced wide matrix from `filter`")
    p.add_argument("--segments", required=True, help="segment table from `filter`")
    p.add_argument("--reference", help="reference durations (one per line) or JSON summary")
    _add_common(p)
    p.add_argument("--duration-window-s", help="lo:hi action-duration window, s (default 4:38)")
    p.add_argument("--duration-bin-s", type=float, help="duration histogram bin width, s (default 2)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="generate a synthetic game with ground truth")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--plan", help="JSON plan file")
    src.add_argument("--preset", choices=sorted(PRESETS), default="small")
    p.add_argument("--seed", type=int, help="overrides the plan seed")
    p.add_argument("--court-config", help="JSON court geometry")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="warning: %(message)s", stream=sys.stderr,
                        force=True)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ContractViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
