import math

import pytest

from fillab.errors import ConfigError, EmptyRecords, InsufficientPoints, NonPositiveValue
from fillab.harness import CSV_HEADER, emit_plot, parse_config, read_csv, run, to_csv
from fillab.records import ExperimentRecord, fit_affine, fit_exponent


def test_fit_exact_power_law():
    fit = fit_exponent([(x, x * x) for x in (4, 8, 16, 32)])
    assert fit.slope == pytest.approx(2.0) and fit.residual == pytest.approx(0, abs=1e-12)


def test_fit_fill_volume_against_perimeter():
    slope, _, _ = fit_exponent([(4 * s, 2 * s * s) for s in (4, 8, 16, 32)])
    assert slope == pytest.approx(2.0)


def test_fit_drops_two_smallest_of_five():
    pts = [(1, 100), (2, 1), (4, 16), (8, 64), (16, 256)]
    fit = fit_exponent(pts)
    assert fit.n_used == 3 and fit.slope == pytest.approx(2.0)


def test_fit_errors():
    with pytest.raises(InsufficientPoints):
        fit_exponent([(1, 1), (2, 4)])
    with pytest.raises(NonPositiveValue):
        fit_exponent([(1, 1), (2, 0), (3, 9)])
    with pytest.raises(NonPositiveValue):
        fit_exponent([(1, 1), (2, math.inf), (3, 9)])


def test_fit_affine():
    a, b, res = fit_affine([(x, 3 + 0.5 * x) for x in range(5)])
    assert (a, b) == pytest.approx((3, 0.5)) and res == pytest.approx(0, abs=1e-12)


def test_config_parsing():
    cfg = parse_config("experiment = iso-profile\nsizes = 4, 8 16  # comment\nlambda = 0.25\ntimings = true\n")
    assert cfg.sizes == [4, 8, 16] and cfg.lam == 0.25 and cfg.timings
    assert cfg.config_hash == parse_config("sizes = 4, 8 16\nexperiment = iso-profile\nlambda = 0.25\n"
                                           "timings = true\n").config_hash


@pytest.mark.parametrize("text", [
    "experiment = iso-profile\nsizes =\n",
    "experiment = iso-profile\n",
    "experiment = iso-profile\nsizes = 8 4\n",
    "experiment = nope\nsizes = 4\n",
    "experiment = iso-profile\nsizes = 4\nbogus = 1\n",
    "experiment = iso-profile\nsizes = 4\ntimings = maybe\n",
    "experiment = iso-profile\nsizes = 4\neps = 2\n",
    "[other]\nexperiment = iso-profile\nsizes = 4\n",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_iso_profile_run_passes():
    cfg = parse_config("experiment = iso-profile\nsizes = 4 8 16 32\nexpect_exponent = 2.0\n")
    summary = run(cfg, write=False)
    assert [r.value for r in summary.records] == [32, 128, 512, 2048]
    assert summary.exit_code == 0
    assert abs(summary.fits["volume"].slope - 2.0) <= 0.05


def test_radius_profile_run_passes():
    summary = run(parse_config("experiment = radius-profile\nsizes = 4 8 16\n"), write=False)
    assert summary.exit_code == 0, summary.report()


def test_corrupted_certificate_fails_run():
    base = "experiment = partition-sweep\nsizes = 4\nsamples = 2\n"
    assert run(parse_config(base), write=False).exit_code == 0
    bad = run(parse_config(base + "corrupt_certificate = true\n"), write=False)
    assert bad.exit_code == 1 and len(bad.failed) == 2


def test_divergence_profile_k0_run():
    cfg = parse_config("experiment = divergence-profile\nsizes = 8 16 32 64\nexpect_exponent = 1\n"
                       "exponent_tol = 0.1\n")
    summary = run(cfg, write=False)
    assert [r.value for r in summary.records] == [18, 36, 72, 144]
    assert summary.exit_code == 0


def test_csv_is_deterministic(tmp_path):
    text = "experiment = iso-profile\nsizes = 2 4 8\ncsv = {}\nsvg = {}\n"
    outs = []
    for i in range(2):
        csv_p, svg_p = tmp_path / f"a{i}.csv", tmp_path / f"a{i}.svg"
        run(parse_config(text.format(csv_p, svg_p)))
        outs.append((csv_p.read_bytes(), svg_p.read_bytes()))
    assert outs[0] == outs[1]
    rows = read_csv(outs[0][0].decode())
    assert outs[0][0].decode().startswith(CSV_HEADER + "\n")
    assert [r["value"] for r in rows] == ["8", "32", "128"]
    assert set(rows[0]) == {"k", "r", "delta", "value", "finite", "method", "sampleId", "runtime_ms"}


def test_csv_rejects_missing_header():
    with pytest.raises(ConfigError):
        read_csv("k,r\n1,2\n")


def _rec(r, v, method="oracle"):
    return ExperimentRecord("x", 1, r, v, method)


def test_plot_series_and_infinity():
    recs = [_rec(r, r * r) for r in (2, 4, 8)] + [_rec(r, 2 * r * r, "other") for r in (2, 4, 8)]
    svg = emit_plot(recs, "two series")
    assert "oracle slope 2.000" in svg and "other slope 2.000" in svg
    svg_inf = emit_plot(recs + [_rec(16, math.inf)])
    assert "1 infinite values not shown" in svg_inf
    with pytest.raises(EmptyRecords):
        emit_plot([])


def test_csv_infinite_values():
    text = to_csv([_rec(4, math.inf)])
    row = read_csv(text)[0]
    assert row["value"] == "inf" and row["finite"] == "false"
