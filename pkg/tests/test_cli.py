import csv
import json
import math

import pytest

from varifold_lab.cli import main

LINE = {"n": 2, "m": 1, "primitives": [{"kind": "plane-patch", "angle": 0.0, "extent": 2.0, "resolution": 2000}]}
TWO_LINES = {"n": 2, "m": 1, "primitives": [
    {"kind": "plane-patch", "angle": 0.0, "extent": 1.0, "resolution": 64, "grading": {"ratio": 1.1, "core": 1e-5}},
    {"kind": "plane-patch", "angle": math.pi / 2, "extent": 1.0, "resolution": 64,
     "grading": {"ratio": 1.1, "core": 1e-5}}]}
TANGENT = {"n": 2, "m": 1, "primitives": [
    {"kind": "plane-patch", "angle": 0.0, "extent": 2e-4, "resolution": 64, "grading": {"core": 1e-13, "ratio": 1.05}},
    {"kind": "graph-curve", "interval": [-2e-4, 2e-4], "function": {"id": "power", "coef": 0.3, "exponent": 1.5},
     "resolution": 64, "grading": {"at": 0.0, "core": 1e-13, "ratio": 1.05}}]}
SINE = {"n": 2, "m": 1, "primitives": [{"kind": "sine-zeros", "zeros": [0, 0.03125, 0.125, 0.5, 1.0],
                                        "amplitude": 0.5, "odd_reflection": True, "resolution": 32}]}
POWER = {"n": 2, "m": 1, "primitives": [
    {"kind": "graph-curve", "interval": [-1, 1], "function": {"id": "power", "coef": 0.3, "exponent": 1.5},
     "resolution": 2000, "grading": {"at": 0.0, "core": 1e-9, "ratio": 1.05}}]}
PARALLEL = {"n": 2, "m": 1, "primitives": [
    {"kind": "segment", "start": [-2, 0], "end": [2, 0], "resolution": 4000},
    {"kind": "segment", "start": [-2, 0.05], "end": [2, 0.05], "resolution": 4000}]}


@pytest.fixture
def write(tmp_path):
    def _w(obj, name="scene.json"):
        p = tmp_path / name
        p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
        return str(p)
    return _w


def _report(out):
    return json.loads((out / "report.json").read_text())


def test_scene_build(tmp_path, write):
    out = tmp_path / "o"
    assert main(["scene-build", "--scene", write(LINE), "--out", str(out)]) == 0
    assert {"varifold.json", "scene.svg", "report.json"} <= {p.name for p in out.iterdir()}
    assert _report(out)["data"]["mass"] == pytest.approx(4.0)


def test_scene_svg_deterministic(tmp_path, write):
    s = write(TWO_LINES)
    main(["scene-build", "--scene", s, "--out", str(tmp_path / "a")])
    main(["scene-build", "--scene", s, "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "scene.svg").read_bytes() == (tmp_path / "b" / "scene.svg").read_bytes()


def test_no_svg_flag(tmp_path, write):
    out = tmp_path / "o"
    assert main(["scene-build", "--scene", write(LINE), "--out", str(out), "--no-svg"]) == 0
    assert not (out / "scene.svg").exists()


def test_check_monotonicity_line(tmp_path, write):
    out = tmp_path / "o"
    assert main(["check-monotonicity", "--scene", write(LINE), "--out", str(out), "--radius", "0.5",
                 "--center", "0.1,0"]) == 0
    rows = list(csv.DictReader((out / "series.csv").open()))
    assert len(rows) >= 20


def test_partition_run_two_lines(tmp_path, write):
    out = tmp_path / "o"
    code = main(["partition-run", "--scene", write(TWO_LINES), "--out", str(out), "--Q", "2",
                 "--lambda", "0.3", "--depth", "6"])
    assert code == 0
    ladder = json.loads((out / "ladder.json").read_text())
    assert ladder["prime_counts"][1:] == [2] * 6 and ladder["k0"] == 1
    rows = list(csv.DictReader((out / "levels.csv").open()))
    assert [int(r["components"]) for r in rows] == [1] + [2] * 6
    svg = (out / "ladder.svg").read_text()
    assert svg.count("<rect x=") == 7


def test_holder_certify_pass_and_negative_control(tmp_path, write):
    args = ["--lambda", "0.0196", "--depth", "3"]
    ok = main(["holder-certify", "--scene", write(TANGENT, "t.json"), "--out", str(tmp_path / "a"),
               "--Q", "2", "--radius", "1e-4", *args])
    assert ok == 0
    bad = main(["holder-certify", "--scene", write(SINE, "s.json"), "--out", str(tmp_path / "b"),
                "--Q", "1", "--radius", "1", *args])
    assert bad == 2
    assert _report(tmp_path / "b")["status"] == "premise violated"


def test_holder_certify_lambda_too_large(tmp_path, write):
    code = main(["holder-certify", "--scene", write(TWO_LINES), "--out", str(tmp_path / "o"), "--Q", "2",
                 "--lambda", "0.3", "--depth", "3"])
    assert code == 2


def test_graph_extract(tmp_path, write):
    out = tmp_path / "o"
    assert main(["graph-extract", "--scene", write(PARALLEL), "--out", str(out), "--Q", "2", "--s", "0.5",
                 "--cells", "20", "--plane", "1,0"]) in (0, 2)
    g = json.loads((out / "graph.json").read_text())
    assert g["Q"] == 2 and g["lip_estimate"] <= 1e-9 and len(g["cells"]) == 20


def test_graph_extract_failure_is_conclusion(tmp_path, write):
    steep = {"n": 2, "m": 1, "primitives": [{"kind": "segment", "start": [-1, -0.8], "end": [1, 0.8],
                                              "resolution": 4000}]}
    code = main(["graph-extract", "--scene", write(steep), "--out", str(tmp_path / "o"), "--lip", "0.5"])
    assert code in (2, 3)
    rep = _report(tmp_path / "o")
    assert any("Lipschitz" in c["detail"] for c in rep["conclusions"] if not c["ok"])


def test_detect_planes(tmp_path, write):
    c = math.sqrt(24)
    three = {"n": 2, "m": 1, "primitives": [
        {"kind": "segment", "start": [-5, 0], "end": [5, 0], "resolution": 1000},
        {"kind": "segment", "start": [-c, 1], "end": [c, 1], "resolution": 1000, "multiplicity": 2},
        {"kind": "segment", "start": [0, -5], "end": [0, 5], "resolution": 1000, "multiplicity": 3}]}
    out = tmp_path / "o"
    assert main(["detect-planes", "--scene", write(three), "--out", str(out), "--radius", "5"]) == 0
    planes = json.loads((out / "planes.json").read_text())
    assert planes["N"] == 3 and sorted(p["multiplicity"] for p in planes["planes"]) == [1, 2, 3]


def test_detect_planes_curved_is_error(tmp_path, write):
    circ = {"n": 2, "m": 1, "primitives": [{"kind": "circle-arc", "center": [0, 0], "radius": 1.0,
                                             "resolution": 256}]}
    assert main(["detect-planes", "--scene", write(circ), "--out", str(tmp_path / "o"), "--radius", "2"]) == 1


def test_tangent_cone(tmp_path, write):
    out = tmp_path / "o"
    assert main(["tangent-cone", "--scene", write(POWER), "--out", str(out), "--radius", "0.5", "--C", "3"]) == 0
    rows = list(csv.DictReader((out / "decay.csv").open()))
    assert all(float(r["first_variation"]) <= float(r["bound"]) for r in rows)


def test_counterexample(tmp_path, write):
    out = tmp_path / "o"
    assert main(["counterexample", "--out", str(out), "--depth", "50"]) == 0
    seq = json.loads((out / "sequence.json").read_text())
    assert seq["exact"] and seq["triples"][49]["P"] == "1/%d" % 2 ** 99
    assert (out / "line_fan.svg").exists()
    assert len(list(csv.DictReader((out / "triples.csv").open()))) == 50


def test_report_embeds_constants(tmp_path, write):
    out = tmp_path / "o"
    main(["partition-run", "--scene", write(TWO_LINES), "--out", str(out), "--Q", "2", "--depth", "2"])
    rep = _report(out)
    assert rep["constants"]["Q"] == 2


@pytest.mark.parametrize("argv", [
    ["scene-build"],
    ["scene-build", "--scene", "/nonexistent/scene.json"],
    ["scene-build", "--scene", "SCENE", "--gamma", "-1"],
    ["scene-build", "--scene", "SCENE", "--resolution", "2"],
    ["check-monotonicity", "--scene", "SCENE", "--center", "1,2,3"],
])
def test_usage_errors_exit_1(argv, write, tmp_path):
    s = write(LINE)
    argv = [s if a == "SCENE" else a for a in argv] + ["--out", str(tmp_path / "o")]
    assert main(argv) == 1


@pytest.mark.parametrize("argv", [["bogus"], ["scene-build", "--lambda", "x"], []])
def test_parser_errors_exit_1(argv):
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == 1


@pytest.mark.parametrize("text,needle", [
    ('{"n": 2, "m": 1, "primitives": [{"kind": "segment", "start": [0, 0], "end": 3, "resolution": 8}]}',
     "primitives[0]"),
    ('{"n": 2, "m": 1, "primitives": [', "line 1"),
    ('{"n": 2, "m": 1, "primitives": [{"kind": "blob"}]}', "blob"),
])
def test_scene_errors(text, needle, write, tmp_path, capsys):
    assert main(["scene-build", "--scene", write(text), "--out", str(tmp_path / "o")]) == 1
    assert needle in capsys.readouterr().err
