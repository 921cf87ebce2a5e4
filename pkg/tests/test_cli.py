import json

import numpy as np
import pytest

from graphonforge.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def test_density_example(capsys):
    code, out = run(capsys, "density", "--graph", "K3", "--graphon", "const:0.5", "--method", "exact")
    assert code == 0
    assert json.loads(out)["density"] == 0.125


def test_density_constraint(capsys, tmp_path):
    spec = tmp_path / "w.json"
    spec.write_text(json.dumps({"kind": "step", "sizes": [0.5, 0.5], "values": [[1, 0.1], [0.1, 1]],
                                "names": ["A", "B"]}))
    text = "graph(roots=[A]; verts=[x:B]; edge(r1,x)) == 0"
    code, out = run(capsys, "density", "--graphon", str(spec), "--constraint", text, "--samples", "50")
    assert code == 3 and json.loads(out)["violation_rate"] == 1.0


def test_wpz_round_trip(capsys, tmp_path):
    path = tmp_path / "wpz.json"
    z = [0.3, 0.7, 0.1, 0.25, 0.5, 0.125]
    assert run(capsys, "wpz", "build", "--bounding", "random", "--seed", "2", "--z", ",".join(map(str, z)),
               "--out", str(path))[0] == 0
    code, out = run(capsys, "wpz", "decode", "--in", str(path))
    assert code == 0
    assert np.abs(np.array(json.loads(out)["z"]) - z).max() <= 1e-9


def test_wpz_diff_and_degrees(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(capsys, "wpz", "build", "--bounding", "random", "--seed", "2", "--out", str(a))
    run(capsys, "wpz", "build", "--bounding", "random", "--seed", "2", "--z", "0.5,0.5,0.5,0.5,0.5,0.5",
        "--out", str(b))
    code, out = run(capsys, "wpz", "diff", "--in", str(a), "--other", str(b), "--samples", "20000")
    rep = json.loads(out)
    assert code == 0 and rep["violations"] == {} and set(rep["support"]) <= {"CxC", "CxE", "ExC"}
    code, out = run(capsys, "wpz", "degrees", "--in", str(a), "--samples", "4")
    rows = {r["part"]: r for r in json.loads(out)["crosscheck"]}
    assert code == 0 and rows["A"]["computed_x2500"] == pytest.approx(1204, abs=1e-6)


def test_render_and_sample(capsys, tmp_path):
    img = tmp_path / "h.pgm"
    assert run(capsys, "render", "--graphon", "half", "--resolution", "32", "--out", str(img))[0] == 0
    assert img.read_bytes().startswith(b"P5\n32 32\n255\n")
    code, out = run(capsys, "sample", "--graphon", "const:1", "--n", "4")
    assert code == 0 and out.splitlines()[0] == "4 6"


def test_series_commands(capsys, tmp_path):
    path = tmp_path / "coeffs.json"
    assert run(capsys, "series", "expand", "--graph", "K2", "--bounding", "random", "--samples", "20000",
               "--out", str(path))[0] == 0
    data = json.loads(path.read_text())
    assert data["imax"] == 64 and data["kmax"] == 5 and "1" in data["coefficients"]
    code, out = run(capsys, "series", "eval", "--in", str(path), "--z", "0.1,0.1,0.1,0.1,0.1,0.1")
    assert code == 0 and 0.0 < json.loads(out)["value"] < 1.0
    code, out = run(capsys, "series", "decay", "--in", str(path))
    assert code == 0 and json.loads(out)["c"] < 1.0


def test_stab_commands(capsys, tmp_path):
    sysfile = tmp_path / "sys.json"
    sysfile.write_text(json.dumps({"variables": {"U": [[0.4, 0.6]]},
                                   "levels": [{"I": [], "J": [], "d": 1, "b": [0.5, 0.5]}]}))
    code, out = run(capsys, "stab", "check", "--system", str(sysfile), "--targets", "a1_1 + a1_2")
    assert code == 0 and json.loads(out)["levels"][0]["vacuous"]
    code, out = run(capsys, "stab", "excellent", "--system", str(sysfile), "--targets", "a1_1 + a1_2")
    step = json.loads(out)
    assert code == 0 and step["grew"] and step["J"] == [2]
    grown = tmp_path / "grown.json"
    grown.write_text(json.dumps(step["system"]))
    assert run(capsys, "stab", "check", "--system", str(grown), "--targets", "a1_1 + a1_2")[0] == 0
    code, out = run(capsys, "stab", "continue", "--f", "y1 - x**2", "--x0", "0", "--y0", "0",
                    "--interval", "0,1", "--reference", "x**2", "--tolerance", "1e-6")
    assert code == 0 and json.loads(out)["residual"] <= 1e-8
    assert run(capsys, "stab", "continue", "--f", "y1**2 - x", "--x0", "1", "--y0", "1", "--interval", "0,1")[0] == 3


def test_exit_codes(capsys, tmp_path):
    assert run(capsys, "density", "--graph", "K3", "--graphon", str(tmp_path / "missing.json"))[0] == 2
    assert run(capsys, "density", "--graph", "Z9", "--graphon", "const:0.5")[0] == 2
    assert run(capsys, "nonsense")[0] == 2
    assert run(capsys, "verify", "AC99")[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "wpz", "decode", "--in", str(bad))[0] == 2


def test_verify_single_check(capsys):
    code, out = run(capsys, "verify", "AC8")
    rep = json.loads(out)
    assert code == 0 and rep["passed"] and [c["id"] for c in rep["checks"]] == ["AC8"]


def test_outputs_do_not_depend_on_threads(capsys, tmp_path, monkeypatch):
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("GRAPHONFORGE_THREADS", threads)
        code, out = run(capsys, "density", "--graph", "C4", "--graphon", "half", "--samples", "200000",
                        "--seed", "5")
        assert code == 0
        img = tmp_path / f"r{threads}.pgm"
        run(capsys, "render", "--graphon", "half", "--resolution", "64", "--out", str(img))
        outs.append((out, img.read_bytes()))
    assert outs[0] == outs[1]
