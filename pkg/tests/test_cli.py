"""
End-to-end runs of cli.main with captured output.
"""
import json

import numpy as np
import pandas as pd
import pytest

import cli
from catalog import get_entry
from paths import load_path, time_grid
from scenario import export_entry, save_scenario


def _run(capsys, *argv):
    code = cli.main(list(argv))
    return code, capsys.readouterr().out


def _straight_line_doc(tmp_path):
    doc = export_entry(get_entry("r4_weak_i0"))
    doc["hamiltonian"] = "u"
    doc["stationary"] = {"from": [0, 0, 0, 0], "a0": ["0x0.0p+0", "0x1.0p+0", "0x1.0p+0", "0x0.0p+0"], "steps": 64}
    path = tmp_path / "straight.json"
    save_scenario(doc, path)
    return path


def test_examples_list(capsys):
    code, out = _run(capsys, "examples")
    assert code == 0
    assert "r4_weak_i1" in out
    assert "poisson=no" in out


def test_examples_check(capsys):
    code, out = _run(capsys, "examples", "--check")
    assert code == 0
    assert out.count(" ok") == 7


def test_examples_export(tmp_path, capsys):
    out_path = tmp_path / "r4.json"
    assert cli.main(["examples", "--export", "r4_weak_i1", "--out", str(out_path)]) == 0
    doc = json.loads(out_path.read_text())
    assert doc["name"] == "r4_weak_i1"
    assert doc["pi"][0][2] == "x"
    assert cli.main(["examples", "--export", "nope", "--out", str(out_path)]) == 2
    assert cli.main(["examples", "--export", "r4_weak_i1"]) == 2


def test_classify_symplectic(capsys):
    code, out = _run(capsys, "classify", "symplectic2d", "--seed", "3")
    assert code == 0
    doc = json.loads(out)
    summary = doc["classification"]["summary"]
    assert summary["poisson"] and summary["weakly_foliated"]
    assert summary["points"] == 50
    assert summary["ranks"] == [2]
    assert doc["seed"] == 3


def test_classify_r3_text(capsys):
    code, out = _run(capsys, "classify", "r3_nonfoliated", "--format", "text")
    assert code == 0
    assert "poisson: False" in out
    assert "weakly foliated: False (0 point(s) pass)" in out


def test_classify_weak_family_grid_with_twisted_check(tmp_path, capsys):
    out_path = tmp_path / "r4.json"
    assert cli.main(["classify", "r4_weak_i1", "--grid", "3", "--out", str(out_path)]) == 0
    doc = json.loads(out_path.read_text())
    assert doc["twisted"]["passed"]
    assert doc["rank_profile"]["grid_shape"] == [3, 3, 3, 3]
    assert doc["classification"]["summary"]["points"] == 81 + 4
    assert doc["classification"]["summary"]["weakly_foliated"]


def test_classify_csv(tmp_path):
    out_path = tmp_path / "points.csv"
    assert cli.main(["classify", "r3_nonfoliated", "--format", "csv", "--out", str(out_path)]) == 0
    frame = pd.read_csv(out_path)
    assert len(frame) == 50
    assert list(frame.columns[:4]) == ["x", "y", "z", "rank"]
    assert (frame["rank"] == 2).all()
    assert frame["witness"].str.contains("dy\\^dz").all()


def test_classify_input_errors(tmp_path, capsys):
    assert cli.main(["classify", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    doc = export_entry(get_entry("symplectic2d"))
    doc["pi"][0][1] = "q * ("
    bad.write_text(json.dumps(doc))
    assert cli.main(["classify", str(bad)]) == 2
    bad.write_text("{not json")
    assert cli.main(["classify", str(bad)]) == 2


def test_classify_singular_coefficient_exits_3(tmp_path, capsys):
    doc = export_entry(get_entry("symplectic2d"))
    doc["pi"][0][1] = "1/q"
    doc["box"] = [[0.5, 1], [-1, 1]]
    doc["classify"] = {"samples": 5, "extra_points": [[0, 0.5]]}
    path = tmp_path / "pole.json"
    save_scenario(doc, path)
    code, out = _run(capsys, "classify", str(path))
    assert code == 3
    records = json.loads(out)["classification"]["records"]
    assert len(records) == 6
    assert records[-1]["error"]
    assert all(r["error"] is None for r in records[:5])


def test_stationary_straight_line(tmp_path, capsys):
    path = _straight_line_doc(tmp_path)
    out_path = tmp_path / "path.csv"
    series = tmp_path / "series.csv"
    code, out = _run(capsys, "stationary", str(path), "--out", str(out_path), "--series", str(series))
    assert code == 0
    doc = json.loads(out)
    np.testing.assert_allclose(doc["end"], [1.0, 0.0, 0.0, 0.0], atol=1e-14)
    assert doc["stationary_residual"] <= 1e-10
    assert doc["sup_cotangent_defect"] == pytest.approx(1.0)
    alpha = load_path(out_path)
    assert alpha.steps == 64
    assert list(pd.read_csv(series).columns) == ["t", "stationary_residual", "cotangent_defect"]


def test_stationary_flags_override_the_block(tmp_path, capsys):
    path = _straight_line_doc(tmp_path)
    code, out = _run(capsys, "stationary", str(path), "--from=0,0,0.5,-0.5", "--a0=0x1p-1,0,0,0", "--steps", "16")
    assert code == 0
    doc = json.loads(out)
    assert doc["steps"] == 16
    assert doc["a0"] == [0.5, 0.0, 0.0, 0.0]
    np.testing.assert_allclose(doc["end"], [1.0, 0.0, 0.5, -0.5], atol=1e-14)


def test_stationary_needs_initial_data(capsys):
    assert cli.main(["stationary", "symplectic2d"]) == 2
    assert cli.main(["stationary", "symplectic2d", "--from=0,0", "--a0=1"]) == 2
    assert cli.main(["stationary", "symplectic2d", "--from=0,0", "--a0=1,0", "--steps", "4"]) == 2


def test_functional_on_a_saved_path(tmp_path, capsys):
    path = _straight_line_doc(tmp_path)
    out_path = tmp_path / "path.json"
    assert cli.main(["stationary", str(path), "--out", str(out_path)]) == 0
    capsys.readouterr()
    code, out = _run(capsys, "functional", str(path), "--path", str(out_path),
                     "--variation", "--kind", "fixed-endpoints", "--seed", "7")
    assert code == 0
    doc = json.loads(out)
    assert doc["lagrangian"] == pytest.approx(0.0, abs=1e-12)
    assert doc["cotangent"] is False
    assert doc["differential"]["kind"] == "fixed-endpoints"
    assert doc["differential"]["relative_error"] <= 1e-5 or doc["differential"]["absolute_error"] <= 1e-9


def test_functional_rejects_a_path_of_the_wrong_dimension(tmp_path, capsys):
    path = _straight_line_doc(tmp_path)
    out_path = tmp_path / "path.csv"
    assert cli.main(["stationary", str(path), "--out", str(out_path)]) == 0
    assert cli.main(["functional", "symplectic2d", "--path", str(out_path)]) == 2


def test_verify_items(capsys):
    code, out = _run(capsys, "verify", "symplectic2d", "--item", "1", "--draws", "3", "--steps", "128")
    assert code == 0
    assert json.loads(out)["passed"] is True
    code, out = _run(capsys, "verify", "--item", "2ce", "--steps", "256", "--format", "text")
    assert code == 0
    assert "counterexample-II on r4_weak_i0: PASS" in out
    assert cli.main(["verify", "r3_nonfoliated", "--item", "1"]) == 2
    assert cli.main(["verify", "--item", "1"]) == 2


def test_verify_failing_check_exits_1(capsys):
    code, out = _run(capsys, "verify", "linear_so3", "--item", "sigma", "--draws", "1",
                     "--steps", "16", "--tol", "1e-14")
    assert code == 1
    assert json.loads(out)["passed"] is False


def test_notify_is_opt_in(monkeypatch, capsys):
    sent = []
    monkeypatch.setattr(cli, "notify", lambda text: sent.append(text) or True)
    assert cli.main(["classify", "symplectic2d"]) == 0
    assert sent == []
    assert cli.main(["classify", "symplectic2d", "--notify"]) == 0
    assert len(sent) == 1
    assert "Scenario: symplectic2d" in sent[0]
    assert "Result: PASS" in sent[0]


def test_overflowing_hamiltonian_is_an_input_error(tmp_path, capsys):
    doc = export_entry(get_entry("r3_nonfoliated"))
    doc["hamiltonian"] = "exp(1000)*x"
    path = tmp_path / "overflow.json"
    save_scenario(doc, path)
    assert cli.main(["classify", str(path)]) == 2
    assert cli.main(["stationary", "r3_nonfoliated", "--hamiltonian", "10^400*x", "--from=0,0,0", "--a0=1,0,0"]) == 2


def test_hamiltonian_override_gives_the_straight_line(tmp_path, capsys):
    out_path = tmp_path / "line.json"
    code, out = _run(capsys, "stationary", "r4_weak_i0", "--hamiltonian", "u",
                     "--from=0,0,0,0", "--a0=0,1,1,0", "--steps", "64", "--out", str(out_path))
    assert code == 0
    doc = json.loads(out)
    assert doc["hamiltonian"] == "u"
    np.testing.assert_allclose(doc["end"], [1.0, 0.0, 0.0, 0.0], atol=1e-14)
    alpha = load_path(out_path)
    np.testing.assert_allclose(alpha.base[:, 0], time_grid(64), atol=1e-14)
    np.testing.assert_allclose(alpha.base[:, 1:], 0.0, atol=1e-14)

    code, out = _run(capsys, "functional", "r4_weak_i0", "--path", str(out_path), "--hamiltonian", "u")
    assert code == 0
    doc = json.loads(out)
    assert doc["hamiltonian"] == "u"
    assert doc["lagrangian"] == pytest.approx(0.0, abs=1e-12)


def test_catalog_hamiltonian_bends_the_same_start(capsys):
    code, out = _run(capsys, "stationary", "r4_weak_i0", "--from=0,0,0,0", "--a0=0,1,1,0", "--steps", "64")
    assert code == 0
    doc = json.loads(out)
    assert doc["hamiltonian"] == "u + v/10"
    assert abs(doc["end"][1]) > 1e-3


def test_bad_hamiltonian_override(capsys):
    assert cli.main(["stationary", "r4_weak_i0", "--hamiltonian", "u +", "--from=0,0,0,0", "--a0=0,1,1,0"]) == 2
    assert cli.main(["functional", "r4_weak_i0", "--hamiltonian", "w", "--from=0,0,0,0", "--a0=0,1,1,0"]) == 2
