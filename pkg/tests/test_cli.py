import json
import shutil
from pathlib import Path

import pandas as pd
import pytest

from courtsift.cli import main

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="module")
def game_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("game")
    assert main(["synth", "--preset", "small", "--seed", "2", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def filtered(game_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("filtered")
    assert main(["filter", "--manifest", str(game_dir / "manifest.json"), "--out", str(out)]) == 0
    return out


def test_ingest_synthetic(game_dir, tmp_path):
    assert main(["ingest", "--manifest", str(game_dir / "manifest.json"), "--out", str(tmp_path)]) == 0
    header = (tmp_path / "wide.csv").read_text().splitlines()[0].split(",")
    assert len(header) == 1 + 12 * 4
    report = json.loads((tmp_path / "ingest_report.json").read_text())
    assert report["players"] == 12 and report["columns"] == 49


def test_ingest_golden(tmp_path):
    assert main(["ingest", "--manifest", str(GOLDEN / "two_player_manifest.json"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "wide.csv").read_bytes() == (GOLDEN / "two_player_wide.csv").read_bytes()


def test_missing_record_file(tmp_path, capsys):
    for name in ("two_player_manifest.json", "two_player_p1.csv"):
        shutil.copy(GOLDEN / name, tmp_path / name)
    assert main(["ingest", "--manifest", str(tmp_path / "two_player_manifest.json"),
                 "--out", str(tmp_path / "out")]) == 2
    assert "two_player_p2.csv" in capsys.readouterr().err


def test_malformed_record_names_line(tmp_path, capsys):
    for name in ("two_player_manifest.json", "two_player_p1.csv", "two_player_p2.csv"):
        shutil.copy(GOLDEN / name, tmp_path / name)
    with open(tmp_path / "two_player_p2.csv", "a") as fh:
        fh.write("pos_x,notanumber,1.0\n")
    assert main(["ingest", "--manifest", str(tmp_path / "two_player_manifest.json"),
                 "--out", str(tmp_path / "out")]) == 2
    err = capsys.readouterr().err
    assert "two_player_p2.csv" in err and "line" in err


def test_filter_outputs(filtered, game_dir):
    for name in ("reduced.csv", "segments.csv", "actions.csv", "filter_report.json"):
        assert (filtered / name).is_file()
    report = json.loads((filtered / "filter_report.json").read_text())
    truth = json.loads((game_dir / "ground_truth.json").read_text())["truth"]
    assert report["actions"]["count"] == len(truth["actions"])
    assert report["report"]["active_minutes"] == pytest.approx(truth["active_minutes_frames"], rel=1e-3)
    seg = pd.read_csv(filtered / "segments.csv")
    assert list(seg.columns) == ["ms", "avg_pos_x", "avg_pos_y", "label", "act_id"]
    assert set(seg["label"]) <= {"O", "D", "Tr"}
    assert len(seg) == report["report"]["rows_out"]


def test_filter_warns_at_walking_pace(game_dir, tmp_path, capsys):
    code = main(["filter", "--manifest", str(game_dir / "manifest.json"), "--h2-kmh", "7.5",
                 "--out", str(tmp_path)])
    assert code == 0
    assert "warning" in capsys.readouterr().err
    assert json.loads((tmp_path / "filter_report.json").read_text())["warnings"]


def test_filter_empty_input(tmp_path):
    wide = tmp_path / "empty.csv"
    wide.write_text((GOLDEN / "two_player_wide.csv").read_text().splitlines()[0] + "\n")
    assert main(["filter", "--wide", str(wide), "--out", str(tmp_path / "out")]) == 0
    report = json.loads((tmp_path / "out" / "filter_report.json").read_text())
    assert report["report"]["rows_out"] == 0 and report["actions"]["count"] == 0


def test_filter_needs_one_input(tmp_path):
    assert main(["filter", "--out", str(tmp_path)]) == 2


def test_config_precedence(game_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"h2_kmh": 10.0, "h3_s": 3.0}))
    m = str(game_dir / "manifest.json")
    assert main(["filter", "--manifest", m, "--config", str(cfg), "--h2-kmh", "9.5",
                 "--out", str(tmp_path / "a")]) == 0
    params = json.loads((tmp_path / "a" / "filter_report.json").read_text())["params"]
    assert params["h2_kmh"] == 9.5 and params["h3_s"] == 3.0 and params["h1_s"] == 10.0
    cfg.write_text(json.dumps({"h2": 10.0}))
    assert main(["filter", "--manifest", m, "--config", str(cfg), "--out", str(tmp_path / "b")]) == 2


def test_calibrate_single_cell_matches_filter(game_dir, filtered, tmp_path):
    assert main(["calibrate", "--manifest", str(game_dir / "manifest.json"), "--grid-h2", "9",
                 "--grid-h3", "2.5", "--out", str(tmp_path)]) == 0
    contour = pd.read_csv(tmp_path / "contour.csv")
    assert len(contour) == 1
    report = json.loads((filtered / "filter_report.json").read_text())["report"]
    assert contour["active_minutes"][0] == pytest.approx(report["active_minutes"], abs=1e-12)
    rec = json.loads((tmp_path / "calibration.json").read_text())["recommendation"]
    assert rec["h2_kmh"] == 9.0 and rec["h3_s"] == 2.5


def test_calibrate_grid_forms(game_dir, tmp_path, capsys):
    m = str(game_dir / "manifest.json")
    assert main(["calibrate", "--manifest", m, "--grid-h2", "8:9:0.5", "--grid-h3", "2,3",
                 "--out", str(tmp_path / "a")]) == 0
    assert len(pd.read_csv(tmp_path / "a" / "contour.csv")) == 6
    assert "walking pace" in capsys.readouterr().err
    assert main(["calibrate", "--manifest", m, "--grid-h2", "9:x", "--out", str(tmp_path / "b")]) == 2


def test_stats_outputs(filtered, tmp_path):
    args = ["stats", "--reduced", str(filtered / "reduced.csv"),
            "--segments", str(filtered / "segments.csv"), "--out", str(tmp_path)]
    assert main(args) == 0
    doc = json.loads((tmp_path / "stats.json").read_text())
    assert "comparison" not in doc
    o, d = doc["phases"]["O"], doc["phases"]["D"]
    assert o["d_avg"]["mean"] > d["d_avg"]["mean"]
    assert o["con_hull"]["mean"] > d["con_hull"]["mean"]
    for metric in ("d_avg", "con_hull", "vel_avg"):
        for phase in ("O", "D"):
            assert (tmp_path / f"hist_{metric}_{phase}.csv").is_file()
    assert (tmp_path / "hist_duration_s.csv").is_file()


def test_stats_reference(filtered, tmp_path):
    base = ["stats", "--reduced", str(filtered / "reduced.csv"), "--segments", str(filtered / "segments.csv")]
    assert main(base + ["--out", str(tmp_path / "a")]) == 0
    ref = tmp_path / "ref.json"
    shutil.copy(tmp_path / "a" / "stats.json", ref)
    assert main(base + ["--reference", str(ref), "--out", str(tmp_path / "b")]) == 0
    delta = json.loads((tmp_path / "b" / "stats.json").read_text())["comparison"]["duration"]["delta"]
    assert delta["mean"] == 0.0 and delta["median"] == 0.0
    assert all(v == 0.0 for v in delta["band_shares"].values())
    # a reference histogrammed with a different bin width cannot be compared
    assert main(base + ["--reference", str(ref), "--duration-bin-s", "1", "--out", str(tmp_path / "c")]) != 0


def test_stats_reference_list(filtered, tmp_path):
    durations = pd.read_csv(filtered / "actions.csv")["duration_s"] + 2.0
    ref = tmp_path / "ref.txt"
    ref.write_text("\n".join(f"{d}" for d in durations) + "\n")
    assert main(["stats", "--reduced", str(filtered / "reduced.csv"), "--segments",
                 str(filtered / "segments.csv"), "--reference", str(ref), "--out", str(tmp_path / "o")]) == 0
    delta = json.loads((tmp_path / "o" / "stats.json").read_text())["comparison"]["duration"]["delta"]
    assert delta["mean"] == pytest.approx(-2.0)


def test_synth_determinism_and_infeasible(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--preset", "small", "--seed", "9", "--out", str(tmp_path / name)]) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"roster_size": 5}))
    assert main(["synth", "--plan", str(plan), "--out", str(tmp_path / "c")]) == 2
