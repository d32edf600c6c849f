import json

import pytest

from fillab.cli import main


@pytest.fixture
def sphere_files(tmp_path):
    cx, hs = tmp_path / "c.scx", tmp_path / "s.hsf"
    assert main(["generate", "--model", "grid3", "--size", "9", "--margin", "1", "--out", str(cx),
                 "--surface", "boundary-sphere", "--corner", "2,2,2", "--side", "3",
                 "--surface-out", str(hs)]) == 0
    return cx, hs


def test_fill_report(sphere_files, tmp_path):
    cx, hs = sphere_files
    rep = tmp_path / "rep.json"
    assert main(["fill", "--complex", str(cx), "--surface", str(hs), "--report", str(rep)]) == 0
    doc = json.loads(rep.read_text())
    assert doc["volume"] == 162 and doc["optimalityCertificate"] is True
    assert main(["fill", "--complex", str(cx), "--surface", str(hs), "--method", "cone",
                 "--report", str(rep)]) == 0
    doc = json.loads(rep.read_text())
    assert doc["volume"] >= 162 and doc["coneConstant"] > 0


def test_partition_and_check_cert(sphere_files, tmp_path):
    cx, hs = sphere_files
    cert = tmp_path / "cert.json"
    assert main(["partition", "round", "--complex", str(cx), "--surface", str(hs),
                 "--cert", str(cert)]) == 0
    assert main(["check-cert", "--complex", str(cx), "--cert", str(cert)]) == 0
    doc = json.loads(cert.read_text())
    doc["contours"][0]["signs"][0] *= -1
    cert.write_text(json.dumps(doc))
    assert main(["check-cert", "--complex", str(cx), "--cert", str(cert)]) == 1


def test_folded_and_divergence(tmp_path, capsys):
    cx, hs = tmp_path / "d.scx", tmp_path / "d.hsf"
    assert main(["generate", "--model", "grid3", "--size", "28", "--shape", "28,5,4", "--margin", "1",
                 "--out", str(cx), "--surface", "dumbbell", "--corner", "1,1,1", "--side", "20",
                 "--surface-out", str(hs)]) == 0
    assert main(["folded", "--complex", str(cx), "--surface", str(hs), "--rho", "200"]) == 0
    assert "folded vertices: 38" in capsys.readouterr().out
    line = tmp_path / "line.scx"
    assert main(["generate", "--model", "grid2", "--size", "40", "--margin", "0", "--out", str(line)]) == 0
    csv_p = tmp_path / "div.csv"
    assert main(["divergence", "--complex", str(line), "--family", "line:4,8,16", "--csv", str(csv_p)]) == 0
    assert "exponent 1.0000" in capsys.readouterr().out
    assert csv_p.read_text().startswith("# fillab-csv v1")


def test_experiment_exit_codes(tmp_path):
    good = tmp_path / "good.cfg"
    good.write_text("experiment = partition-sweep\nsizes = 4\n")
    assert main(["experiment", str(good)]) == 0
    bad = tmp_path / "bad.cfg"
    bad.write_text("experiment = partition-sweep\nsizes = 4\ncorrupt_certificate = true\n")
    assert main(["experiment", str(bad)]) == 1
    empty = tmp_path / "empty.cfg"
    empty.write_text("experiment = iso-profile\nsizes =\n")
    assert main(["experiment", str(empty)]) == 2


def test_generate_errors(tmp_path):
    out = str(tmp_path / "x.scx")
    assert main(["generate", "--model", "punctured-grid2", "--size", "8", "--margin", "2",
                 "--remove", "1,4,1", "--out", out]) == 2
    assert main(["generate", "--model", "grid2", "--size", "6", "--margin", "2", "--out", out,
                 "--surface", "square-loop", "--corner", "1,1", "--side", "4"]) == 2


def test_metric_cache(tmp_path, monkeypatch, sphere_files):
    cx, hs = sphere_files
    monkeypatch.setenv("FILLAB_CACHE", str(tmp_path / "cache"))
    assert main(["fill", "--complex", str(cx), "--surface", str(hs)]) == 0
    files = list((tmp_path / "cache").glob("*.npz"))
    assert len(files) == 1
    assert main(["fill", "--complex", str(cx), "--surface", str(hs)]) == 0
