import csv
import json
import shutil
import subprocess

import pytest

from roomforge import fixtures
from roomforge.arrange import Arranger
from roomforge.cli import main
from roomforge.gridnav import read_pgm
from roomforge.layout import SceneLayout


@pytest.fixture(scope="module")
def arranged(tmp_path_factory):
    out = tmp_path_factory.mktemp("arr")
    assert main(["arrange", "fixture:bedroom", "--seed", "0", "--out", str(out)]) == 0
    return out


def test_arrange_outputs(arranged):
    assert {p.name for p in arranged.iterdir()} >= {"layout.json", "floorplan.svg", "grid.pgm", "config.json"}
    layout = SceneLayout.from_json((arranged / "layout.json").read_text())
    assert Arranger(layout.scene, ()).is_valid(layout)
    grid = read_pgm((arranged / "grid.pgm").read_bytes())
    assert grid.shape == (40, 45)
    assert (arranged / "floorplan.svg").read_text().startswith("<svg")
    cfg = json.loads((arranged / "config.json").read_text())
    assert cfg["command"] == "arrange" and cfg["seed"] == 0


def test_arrange_scene_file(tmp_path):
    scene = tmp_path / "kitchen.json"
    scene.write_text(json.dumps(fixtures.scene_doc("kitchen")))
    assert main(["arrange", str(scene), "--out", str(tmp_path / "o")]) == 0
    cfg = json.loads((tmp_path / "o" / "config.json").read_text())
    assert len(cfg["inputs"]["scene"]["sha256"]) == 64


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("ROOMFORGE_SEED", "5")
    assert main(["arrange", "fixture:kitchen", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "config.json").read_text())["seed"] == 5


def test_rerun_is_byte_identical(arranged, tmp_path):
    assert main(["rerun", str(arranged / "config.json"), "--out", str(tmp_path)]) == 0
    for name in ("layout.json", "floorplan.svg", "grid.pgm", "config.json"):
        assert (tmp_path / name).read_bytes() == (arranged / name).read_bytes(), name


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"rooms": [\n  {"name": 1,}\n]}')
    assert main(["arrange", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "line 2" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path):
    assert main(["arrange", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1


def test_invalid_scene_exit_code(tmp_path):
    doc = fixtures.scene_doc("kitchen")
    doc["rooms"][0]["corners"] = [[0, 0], [1, 1], [2, 0]]
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    assert main(["arrange", str(path), "--out", str(tmp_path / "o")]) == 2


@pytest.mark.parametrize("mode", ["zoom_in", "zoom_out", "hybrid"])
def test_cameras(arranged, tmp_path, mode):
    out = tmp_path / mode
    assert main(["cameras", str(arranged / "layout.json"), "--mode", mode, "--seed", "3", "--out", str(out)]) == 0
    recs = json.loads((out / "trajectory.json").read_text())
    rows = list(csv.DictReader((out / "trajectory.csv").open()))
    assert len(recs) == len(rows) > 0
    assert all(76 <= r["fovy"] <= 96 for r in recs)
    assert (out / "overlay.svg").exists()
    again = tmp_path / (mode + "_again")
    assert main(["rerun", str(out / "config.json"), "--out", str(again)]) == 0
    assert (again / "trajectory.json").read_bytes() == (out / "trajectory.json").read_bytes()


def test_cameras_unknown_room(arranged, tmp_path):
    assert main(["cameras", str(arranged / "layout.json"), "--room", "attic", "--out", str(tmp_path)]) == 2


def test_cameras_reject_invalid_layout(arranged, tmp_path):
    doc = json.loads((arranged / "layout.json").read_text())
    bed = next(p for p in doc["placed"] if p["id"] == "bed_0")
    desk = next(p for p in doc["placed"] if p["id"] == "desk_0")
    desk["pose"] = dict(bed["pose"])
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(doc))
    assert main(["cameras", str(path), "--out", str(tmp_path / "o")]) == 2


def test_edit_delete_and_insert(arranged, tmp_path):
    spec = tmp_path / "del.json"
    spec.write_text(json.dumps({"op": "delete", "id": "dresser_0"}))
    assert main(["edit", str(arranged / "layout.json"), str(spec), "--out", str(tmp_path / "d")]) == 0
    ids = {p["id"] for p in json.loads((tmp_path / "d" / "layout.json").read_text())["placed"]}
    assert "dresser_0" not in ids and "bed_0" in ids

    spec.write_text(json.dumps({"op": "insert", "fixture": "table_with_cups"}))
    assert main(["edit", str(arranged / "layout.json"), str(spec), "--out", str(tmp_path / "i")]) == 0
    layout = SceneLayout.from_json((tmp_path / "i" / "layout.json").read_text())
    assert sum(p.id.startswith("side_table_0/") for p in layout.placed) == 3
    assert Arranger(layout.scene, ()).is_valid(layout)


def test_edit_rejected_without_repair(arranged, tmp_path):
    spec = tmp_path / "mv.json"
    spec.write_text(json.dumps({"op": "reposition", "id": "dresser_0", "pose": {"x": 0.0, "y": 2.0}}))
    assert main(["edit", str(arranged / "layout.json"), str(spec), "--no-repair", "--out", str(tmp_path)]) == 4


def test_edit_bad_spec(arranged, tmp_path):
    spec = tmp_path / "x.json"
    spec.write_text(json.dumps({"op": "insert"}))
    assert main(["edit", str(arranged / "layout.json"), str(spec), "--out", str(tmp_path)]) == 1


def test_itfs_check_outputs(tmp_path):
    assert main(["itfs-check", "--m", "3", "--seed", "0", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["passed"] and report["checks"]["reduction_m1"]["passed"]
    rows = list(csv.reader((tmp_path / "curves.csv").open()))
    assert rows[0][:2] == ["step", "distance"] and len(rows) == 202


def test_itfs_check_negative_weights(tmp_path):
    w = [1.0] * 1000
    w[3] = -0.5
    path = tmp_path / "w.json"
    path.write_text(json.dumps(w))
    assert main(["itfs-check", "--weights", str(path), "--out", str(tmp_path / "o")]) == 5
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert not report["checks"]["weights_nonnegative"]["passed"]


def test_itfs_check_bad_schedule(tmp_path):
    assert main(["itfs-check", "--intervals", "400:200", "--out", str(tmp_path)]) == 2
    assert main(["itfs-check", "--m", "2", "--intervals", "0:500", "--out", str(tmp_path)]) == 2


@pytest.mark.skipif(shutil.which("roomforge") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["roomforge", "itfs-check", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
