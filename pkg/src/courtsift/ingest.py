"""Per-player record files, last-observation-carried-forward merge, wide matrix."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence, Union

import numpy as np
import pandas as pd

LABELS = ("pos_x", "pos_y", "vel_x", "vel_y", "pos_z", "acc_x", "acc_y", "acc_z")
LABEL_CODE = {name: i for i, name in enumerate(LABELS)}
# labels 0..3 feed the timeline; the others are accepted and dropped
N_KEPT = 4
WIDE_FIELDS = LABELS[:N_KEPT]


class RecordParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = f"{source}: " if source else ""
        super().__init__(where + message)


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class RawRecord:
    player_id: str
    label: str
    ms: int
    value: float

    def __post_init__(self):
        if self.label not in LABEL_CODE:
            raise ValueError(f"unknown label {self.label}")
        if self.ms < 0:
            raise ValueError("ms must be non-negative")


@dataclass(frozen=True)
class RecordTable:
    """Columnar form of one player's records, in file order."""

    player_id: str
    label: np.ndarray  # int8 codes into LABELS
    ms: np.ndarray  # int64
    value: np.ndarray  # float64

    def __len__(self) -> int:
        return len(self.ms)

    @classmethod
    def from_records(cls, player_id: str, records: Iterable[RawRecord]) -> "RecordTable":
        recs = list(records)
        return cls(
            player_id,
            np.array([LABEL_CODE[r.label] for r in recs], dtype=np.int8),
            np.array([r.ms for r in recs], dtype=np.int64),
            np.array([r.value for r in recs], dtype=np.float64),
        )

    def records(self) -> list[RawRecord]:
        return [
            RawRecord(self.player_id, LABELS[c], int(m), float(v))
            for c, m, v in zip(self.label, self.ms, self.value)
        ]


@dataclass(frozen=True)
class PlayerState:
    player_id: str
    pos: tuple[float, float]
    vel: tuple[float, float]
    last_update_ms: int | None
    observed: bool


@dataclass(frozen=True)
class GameFrame:
    ms: int
    players: tuple[PlayerState, ...]


@dataclass(frozen=True)
class GameTimeline:
    """The wide per-instant matrix, stored column-wise.

    ``pos`` and ``vel`` have shape ``(T, k, 2)``; ``observed`` is ``(T, k)``.
    Entries of players not yet observed are NaN.
    """

    ms: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    observed: np.ndarray
    roster: tuple[str, ...]
    last_update_ms: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        t, k = len(self.ms), len(self.roster)
        if self.pos.shape != (t, k, 2) or self.vel.shape != (t, k, 2):
            raise ValueError("pos/vel must have shape (frames, players, 2)")
        if self.observed.shape != (t, k):
            raise ValueError("observed must have shape (frames, players)")
        if t > 1 and not np.all(np.diff(self.ms) > 0):
            raise ValueError("frame ms must be strictly increasing")
        arrays = [self.ms, self.pos, self.vel, self.observed]
        if self.last_update_ms is not None:
            arrays.append(self.last_update_ms)
        for a in arrays:
            a.flags.writeable = False

    def __len__(self) -> int:
        return len(self.ms)

    @property
    def n_players(self) -> int:
        return len(self.roster)

    def take(self, index) -> "GameTimeline":
        """Sub-timeline at the given frame indices or boolean mask (order kept)."""
        return GameTimeline(
            self.ms[index],
            self.pos[index],
            self.vel[index],
            self.observed[index],
            self.roster,
            None if self.last_update_ms is None else self.last_update_ms[index],
            dict(self.metadata),
        )

    def frame(self, i: int) -> GameFrame:
        ms = int(self.ms[i])
        players = []
        for j, pid in enumerate(self.roster):
            seen = bool(self.observed[i, j])
            if self.last_update_ms is None:
                last = ms if seen else None
            else:
                last = int(self.last_update_ms[i, j]) if seen else None
            players.append(PlayerState(
                pid,
                (float(self.pos[i, j, 0]), float(self.pos[i, j, 1])),
                (float(self.vel[i, j, 0]), float(self.vel[i, j, 1])),
                last,
                seen,
            ))
        return GameFrame(ms, tuple(players))

    def frames(self):
        for i in range(len(self)):
            yield self.frame(i)

    def to_records(self) -> dict[str, list[RawRecord]]:
        """Re-express the matrix as records: four per observed player per frame."""
        out: dict[str, list[RawRecord]] = {pid: [] for pid in self.roster}
        for i in range(len(self)):
            ms = int(self.ms[i])
            for j, pid in enumerate(self.roster):
                if not self.observed[i, j]:
                    continue
                vals = (*self.pos[i, j], *self.vel[i, j])
                for label, v in zip(WIDE_FIELDS, vals):
                    if not np.isnan(v):
                        out[pid].append(RawRecord(pid, label, ms, float(v)))
        return out


def empty_timeline(roster: Sequence[str], metadata: dict | None = None) -> GameTimeline:
    k = len(roster)
    return GameTimeline(
        np.zeros(0, dtype=np.int64),
        np.zeros((0, k, 2)),
        np.zeros((0, k, 2)),
        np.zeros((0, k), dtype=bool),
        tuple(roster),
        np.zeros((0, k), dtype=np.int64),
        dict(metadata or {}),
    )


def _source_name(source) -> str | None:
    return getattr(source, "name", None) if not isinstance(source, (str, Path)) else str(source)


def parse_record_file(source: Union[str, Path, IO], player_id: str,
                      delimiter: str = ",") -> list[RawRecord]:
    """Parse a ``label,ms,value`` file into records, in file order.

    ``source`` is a path, a text stream or a byte stream. Errors carry the
    1-based line number of the offending row (the header is line 1).
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return parse_record_file(fh, player_id, delimiter)
    name = _source_name(source)
    if isinstance(source, (io.BufferedIOBase, io.RawIOBase)) or "b" in getattr(source, "mode", ""):
        source = io.TextIOWrapper(source, encoding="utf-8", newline="")
    reader = csv.reader(source, delimiter=delimiter, skipinitialspace=True)
    try:
        header = next(reader)
    except StopIteration:
        raise RecordParseError("missing header row", 1, name) from None
    cols = [h.strip().lower() for h in header]
    try:
        il, im, iv = cols.index("label"), cols.index("ms"), cols.index("value")
    except ValueError:
        raise RecordParseError(f"header must name label, ms and value columns, got {header}", 1, name) from None
    out: list[RawRecord] = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(cols):
            raise RecordParseError(f"expected {len(cols)} columns, got {len(row)} at line {line}", line, name)
        label = row[il].strip()
        if label not in LABEL_CODE:
            raise RecordParseError(f"unknown label {label} at line {line}", line, name)
        try:
            ms = int(row[im].strip())
        except ValueError:
            raise RecordParseError(f"unparsable ms {row[im]!r} at line {line}", line, name) from None
        if ms < 0:
            raise RecordParseError(f"negative ms {ms} at line {line}", line, name)
        try:
            value = float(row[iv].strip())
        except ValueError:
            raise RecordParseError(f"unparsable value {row[iv]!r} at line {line}", line, name) from None
        out.append(RawRecord(player_id, label, ms, value))
    return out


def read_record_table(path: Union[str, Path], player_id: str, delimiter: str = ",") -> RecordTable:
    """Fast columnar read of a record file.

    Malformed files are re-read with :func:`parse_record_file` so the error
    names the offending line.
    """
    try:
        df = pd.read_csv(path, sep=delimiter, skipinitialspace=True, dtype=str,
                         keep_default_na=False, engine="c")
        df.columns = [c.strip().lower() for c in df.columns]
        labels = df["label"].str.strip().map(LABEL_CODE)
        ms = pd.to_numeric(df["ms"].str.strip(), errors="raise", downcast=None)
        values = pd.to_numeric(df["value"].str.strip(), errors="raise")
        ok = (len(df.columns) == 3 and not labels.isna().any()
              and ms.dtype.kind == "i" and (ms >= 0).all())
    except Exception:
        ok = False
    if not ok:
        # raises with a line number, or returns the records if pandas was just picky
        return RecordTable.from_records(player_id, parse_record_file(path, player_id, delimiter))
    return RecordTable(
        player_id,
        labels.to_numpy(dtype=np.int8),
        ms.to_numpy(dtype=np.int64),
        values.to_numpy(dtype=np.float64),
    )


def merge_timeline(per_player: Mapping[str, Union[RecordTable, Sequence[RawRecord]]],
                   metadata: dict | None = None) -> GameTimeline:
    """Merge per-player records onto one timeline with LOCF filling.

    One frame per distinct ms among the retained (position/velocity)
    records. Each player slot holds that player's latest value of each field
    at or before the frame; duplicate (label, ms) records resolve to the last
    one in file order. Roster order is lexicographic by player id.
    """
    if not per_player:
        raise ValueError("no players")
    roster = tuple(sorted(per_player))
    tables = []
    for pid in roster:
        recs = per_player[pid]
        tables.append(recs if isinstance(recs, RecordTable) else RecordTable.from_records(pid, recs))

    series = []  # per player, per kept label: (sorted ms, values)
    all_ms = []
    for tab in tables:
        per_label = []
        for code in range(N_KEPT):
            sel = tab.label == code
            ms, val = tab.ms[sel], tab.value[sel]
            order = np.argsort(ms, kind="stable")
            per_label.append((ms[order], val[order]))
            all_ms.append(ms)
        series.append(per_label)

    frames_ms = np.unique(np.concatenate(all_ms)) if all_ms else np.zeros(0, dtype=np.int64)
    t, k = len(frames_ms), len(roster)
    if t == 0:
        return empty_timeline(roster, metadata)
    wide = np.full((t, k, N_KEPT), np.nan)
    last = np.full((t, k), -1, dtype=np.int64)
    for j, per_label in enumerate(series):
        for code, (ms, val) in enumerate(per_label):
            if len(ms) == 0:
                continue
            # side="right" picks the last of equal-ms duplicates after the stable sort
            idx = np.searchsorted(ms, frames_ms, side="right") - 1
            hit = idx >= 0
            wide[hit, j, code] = val[idx[hit]]
            last[hit, j] = np.maximum(last[hit, j], ms[idx[hit]])
    observed = last >= 0
    return GameTimeline(
        frames_ms.astype(np.int64),
        np.ascontiguousarray(wide[..., 0:2]),
        np.ascontiguousarray(wide[..., 2:4]),
        observed,
        roster,
        last,
        dict(metadata or {}),
    )


# --- manifest ---------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    file: Path
    player_id: str
    name: str | None = None


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]
    team: str | None = None
    date: str | None = None
    delimiter: str = ","

    @property
    def metadata(self) -> dict:
        return {"team": self.team, "date": self.date}


def read_manifest(path: Union[str, Path]) -> Manifest:
    """Read a JSON manifest mapping record files to players.

    Relative file paths resolve against the manifest's directory.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from None
    players = doc.get("players")
    if not isinstance(players, list):
        raise ManifestError(f"{path}: 'players' list missing")
    entries = []
    for item in players:
        try:
            f = Path(item["file"])
            pid = str(item.get("player_id") or f.stem)
        except (KeyError, TypeError):
            raise ManifestError(f"{path}: each player needs a 'file'") from None
        if not f.is_absolute():
            f = path.parent / f
        entries.append(ManifestEntry(f, pid, item.get("name")))
    ids = [e.player_id for e in entries]
    if len(set(ids)) != len(ids):
        raise ManifestError(f"{path}: duplicate player ids")
    return Manifest(tuple(entries), doc.get("team"), doc.get("date"), doc.get("delimiter", ","))


def write_manifest(path: Union[str, Path], manifest: Manifest) -> None:
    path = Path(path)
    doc = {
        "team": manifest.team,
        "date": manifest.date,
        "delimiter": manifest.delimiter,
        "players": [
            {"file": str(e.file.relative_to(path.parent) if e.file.is_absolute() else e.file),
             "player_id": e.player_id, "name": e.name}
            for e in manifest.entries
        ],
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_manifest_timeline(path: Union[str, Path]) -> GameTimeline:
    manifest = read_manifest(path)
    for e in manifest.entries:
        if not e.file.exists():
            raise FileNotFoundError(f"record file not found: {e.file}")
    tables = {e.player_id: read_record_table(e.file, e.player_id, manifest.delimiter)
              for e in manifest.entries}
    return merge_timeline(tables, manifest.metadata)


# --- wide matrix ------------------------------------------------------------

def wide_columns(roster: Sequence[str]) -> list[str]:
    return ["ms"] + [f"{pid}_{f}" for pid in roster for f in WIDE_FIELDS]


def write_wide(timeline: GameTimeline, path: Union[str, Path]) -> None:
    """One row per frame: ms, then pos_x, pos_y, vel_x, vel_y per player.

    Unobserved slots are empty cells. Floats use the shortest round-trip repr.
    """
    t, k = len(timeline), timeline.n_players
    block = np.concatenate([timeline.pos, timeline.vel], axis=2)  # (t, k, 4)
    block = block.reshape(t, k * N_KEPT)
    df = pd.DataFrame(block, columns=wide_columns(timeline.roster)[1:])
    df.insert(0, "ms", timeline.ms)
    df.to_csv(path, index=False, lineterminator="\n")


def read_wide(path: Union[str, Path], metadata: dict | None = None) -> GameTimeline:
    df = pd.read_csv(path)
    cols = list(df.columns)
    if not cols or cols[0] != "ms" or (len(cols) - 1) % N_KEPT:
        raise ValueError(f"{path}: not a wide matrix (expected ms + 4 columns per player)")
    roster = []
    for i in range(1, len(cols), N_KEPT):
        stem = cols[i][: -len("_pos_x")]
        expect = [f"{stem}_{f}" for f in WIDE_FIELDS]
        if cols[i:i + N_KEPT] != expect:
            raise ValueError(f"{path}: unexpected columns {cols[i:i + N_KEPT]}")
        roster.append(stem)
    t, k = len(df), len(roster)
    block = df.iloc[:, 1:].to_numpy(dtype=float).reshape(t, k, N_KEPT)
    observed = ~np.all(np.isnan(block), axis=2)
    return GameTimeline(
        df["ms"].to_numpy(dtype=np.int64),
        np.ascontiguousarray(block[..., 0:2]),
        np.ascontiguousarray(block[..., 2:4]),
        observed,
        tuple(roster),
        None,
        dict(metadata or {}),
    )
