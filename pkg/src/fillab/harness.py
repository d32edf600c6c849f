"""Experiment configs, runs, CSV persistence and SVG plots."""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .complex import INF
from .decomposition import (
    check_certificate,
    critical_radius,
    folded_unfolded_decomposition,
    pipeline_fill,
    remove_folded,
    round_partition_full,
)
from .divergence import DivergenceQuery, div0, dist_to_image, divk
from .errors import ConfigError, EmptyRecords, EscapesMargin
from .filling import (
    chain_to_domain,
    fill_by_method,
    growth_inequality_failures,
)
from .hypersurface import diameter, folded_set, is_round
from .models import (
    ModelSpec,
    boundary_sphere,
    box_patch,
    dumbbell_sphere,
    generate,
    perturbed_sphere,
    rectangle_loop,
    square_loop,
    vertex_at,
)
from .records import ExperimentRecord, fit_affine, fit_exponent

KINDS = ("iso-profile", "radius-profile", "partition-sweep", "folded-sweep",
         "divergence-profile", "pipeline-compare")

CSV_HEADER = "# fillab-csv v1"
CSV_COLUMNS = ["k", "r", "delta", "value", "finite", "method", "sampleId", "runtime_ms"]


# ---------------------------------------------------------------- config

@dataclass
class ExperimentConfig:
    experiment: str
    sizes: list[int]
    model: str = "grid2"
    margin: int = 2
    method: str = "oracle"
    samples: int = 1
    seed: int = 0
    eps: float = 0.5
    delta: float = 0.25
    eta: float | None = None
    lam: float | None = None
    rho: float | None = None
    volume_cap: float | None = None
    expect_exponent: float | None = None
    exponent_tol: float = 0.05
    k: int | None = None
    timings: bool = False
    corrupt_certificate: bool = False
    csv: str | None = None
    svg: str | None = None
    threads: int = 1
    raw: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        text = "\n".join(f"{k}={v}" for k, v in sorted(self.raw.items()))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


_FLOATS = ("eps", "delta", "eta", "lambda", "rho", "volume_cap", "expect_exponent", "exponent_tol")
_INTS = ("margin", "samples", "seed", "k", "threads")
_BOOLS = ("timings", "corrupt_certificate")
_STRS = ("experiment", "model", "method", "csv", "svg")


def parse_config(text: str) -> ExperimentConfig:
    """Parse flat ``key = value`` lines (``#`` comments, no sections)."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                   inline_comment_prefixes=("#",))
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    if len(cp.sections()) != 1:
        raise ConfigError("config must be flat: no [sections]")
    raw = {k: v.strip().strip('"') for k, v in cp["run"].items()}
    known = set(_FLOATS + _INTS + _BOOLS + _STRS + ("sizes",))
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "experiment" not in raw:
        raise ConfigError("missing key: experiment")
    if raw["experiment"] not in KINDS:
        raise ConfigError(f"unknown experiment {raw['experiment']!r}")
    try:
        sizes = [int(s) for s in raw.get("sizes", "").replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"sizes must be integers: {raw.get('sizes')!r}") from exc
    if not sizes:
        raise ConfigError("size list is empty")
    if any(b <= a for a, b in zip(sizes, sizes[1:])) or sizes[0] <= 0:
        raise ConfigError("sizes must be positive and strictly increasing")
    kw: dict = {}
    try:
        for key in _FLOATS:
            if key in raw:
                kw["lam" if key == "lambda" else key] = float(raw[key])
        for key in _INTS:
            if key in raw:
                kw[key] = int(raw[key])
        for key in _BOOLS:
            if key in raw:
                low = raw[key].lower()
                if low not in ("true", "false"):
                    raise ValueError(f"{key} must be true or false")
                kw[key] = low == "true"
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for key in ("model", "method", "csv", "svg"):
        if key in raw:
            kw[key] = raw[key]
    cfg = ExperimentConfig(raw["experiment"], sizes, raw=raw, **kw)
    if cfg.samples < 1:
        raise ConfigError("samples must be at least 1")
    if not 0 < cfg.eps < 1 or not 0 < cfg.delta:
        raise ConfigError("eps must lie in (0, 1) and delta must be positive")
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# --------------------------------------------------------------- summary

@dataclass
class Assertion:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class Summary:
    config: ExperimentConfig
    records: list[ExperimentRecord]
    fits: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    assertions: list[Assertion] = field(default_factory=list)

    @property
    def failed(self) -> list[Assertion]:
        return [a for a in self.assertions if not a.passed]

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.assertions.append(Assertion(name, bool(passed), detail))

    def report(self) -> str:
        lines = [f"experiment {self.config.experiment} ({self.config.config_hash}): "
                 f"{len(self.records)} records"]
        for name, fit in sorted(self.fits.items()):
            a, b, res = fit
            lines.append(f"  fit {name}: {a:.4f} {b:.4f} residual {res:.4f}")
        for name, val in sorted(self.constants.items()):
            lines.append(f"  constant {name}: {val:.4g}")
        passed = len(self.assertions) - len(self.failed)
        lines.append(f"  assertions: {passed} passed, {len(self.failed)} failed")
        for a in self.failed:
            lines.append(f"  FAILED {a.name}: {a.detail}")
        return "\n".join(lines)


# --------------------------------------------------------------- families

def _grid_patch(cfg: ExperimentConfig, dim: int, extent: int):
    m = cfg.margin
    kind = "grid3" if dim == 3 else "grid2"
    return generate(ModelSpec(kind, extent + 2 * m + 2, margin=m))


def _closed_family(cfg: ExperimentConfig):
    """Square loops (grid2) or box boundaries (grid3) of the configured sides."""
    dim = 3 if cfg.model == "grid3" else 2
    X, M = _grid_patch(cfg, dim, max(cfg.sizes))
    corner = vertex_at(X, *([cfg.margin + 1] * dim))
    make = boundary_sphere if dim == 3 else square_loop
    return X, [(s, (lambda s=s: make(X, corner, s, M))) for s in cfg.sizes]


def _map(cfg: ExperimentConfig, fn, items):
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, (time.perf_counter() - t0) * 1e3


# ------------------------------------------------------------ experiments

def _iso_profile(cfg: ExperimentConfig, summary: Summary) -> None:
    X, fam = _closed_family(cfg)

    def one(item):
        s, make = item
        h = make()
        res, ms = _timed(fill_by_method, h, cfg.method)
        return s, h, res, ms

    cone = []
    for i, (s, h, res, ms) in enumerate(_map(cfg, one, fam)):
        x = h.volume ** (1.0 / h.k)
        extra = {"side": s, "volume": h.volume, "diameter": diameter(h),
                 "radius": res.radius, "certificate": res.certificate}
        if res.cone_constant is not None:
            extra["cone_constant"] = res.cone_constant
            cone.append(res.cone_constant)
        summary.records.append(ExperimentRecord(cfg.experiment, h.k, x, res.volume, cfg.method,
                                                i, cfg.delta, ms, extra))
    pts = [(r.r, r.value) for r in summary.records if r.finite and r.value > 0]
    if len(pts) >= 3:
        fit = fit_exponent(pts)
        summary.fits["volume"] = fit
        if cfg.expect_exponent is not None:
            summary.add("fitted exponent", abs(fit.slope - cfg.expect_exponent) <= cfg.exponent_tol,
                        f"slope {fit.slope:.4f} vs {cfg.expect_exponent} +- {cfg.exponent_tol}")
    if cone:
        summary.constants["cone_constant_max"] = max(cone)


def _radius_profile(cfg: ExperimentConfig, summary: Summary) -> None:
    X, fam = _closed_family(cfg)
    for i, (s, make) in enumerate(fam):
        h = make()
        res, ms = _timed(fill_by_method, h, "oracle")
        x = h.volume ** (1.0 / h.k)
        ok = True
        if res.finite and res.volume:
            ok = not growth_inequality_failures(chain_to_domain(res.domain))
        summary.add(f"growth inequality at size {s}", ok)
        summary.records.append(ExperimentRecord(cfg.experiment, h.k, x, res.radius, "oracle", i,
                                                cfg.delta, ms, {"side": s, "volume": res.volume}))
    pts = [(r.r, r.value) for r in summary.records if r.finite]
    if len(pts) >= 2:
        a, b, res = fit_affine(pts)
        summary.fits["radius-affine"] = (a, b, res)
        top = max(p[1] for p in pts)
        summary.add("affine radius fit", res <= 0.05 * top + 1e-12,
                    f"residual {res:.4f} vs 5% of {top}")


def _partition_sweep(cfg: ExperimentConfig, summary: Summary) -> None:
    m = cfg.margin
    etas = []
    for s in cfg.sizes:
        X, M = generate(ModelSpec("grid3", s + 2 * m + 4, margin=m))
        corner = vertex_at(X, m + 2, m + 2, m + 2)
        rng = np.random.default_rng([cfg.seed, s])
        for j in range(cfg.samples):
            h, _ = perturbed_sphere(X, corner, s, rng, margin=M)
            cert, ms = _timed(round_partition_full, h, cfg.eps)
            if cfg.corrupt_certificate:
                corrupt(cert)
            problems = check_certificate(cert)
            failed = [str(c) for c in cert.failed()]
            summary.add(f"certificate size {s} sample {j}", not problems and not failed,
                        "; ".join(problems + failed))
            eta = cert.constants.get("eta", 0.0)
            etas.append(eta)
            summary.records.append(ExperimentRecord(
                cfg.experiment, 2, s, sum(p.volume for p in cert.contours) / h.volume, "round",
                j, cfg.delta, ms, {"volume": h.volume, "contours": len(cert.contours),
                                   "steps": len(cert.steps), "eta": eta}))
    if etas:
        summary.constants["eta_max"] = max(etas)


def corrupt(cert) -> None:
    """Deliberately break a certificate: flip one stored chamber sign."""
    target = cert
    while target.steps:
        target = target.steps[0]
    for p in target.pieces:
        if p.signs is not None and len(p.signs):
            p.signs = p.signs.copy()
            p.signs[0] *= -1
            return


def _folded_sweep(cfg: ExperimentConfig, summary: Summary) -> None:
    rho = cfg.rho if cfg.rho is not None else 200.0
    for i, neck in enumerate(cfg.sizes):
        X, _ = box_patch((neck + 2 * cfg.margin + 10, 10, 9), margin=0)
        h, _ = dumbbell_sphere(X, (cfg.margin + 3, 3, 3), neck)
        t0 = time.perf_counter()
        F = folded_set(h, cfg.eps, rho)
        sigma = INF
        if len(F):
            crit = critical_radius(h, min(F), cfg.eps, rho)
            for c in crit.checks:
                summary.add(f"neck {neck} {c.name}", c.passed, str(c))
            rf = remove_folded(h, cfg.eps, rho)
            sigma = rf.constants.get("sigma", INF)
            summary.add(f"neck {neck} removal certificate", not check_certificate(rf) and not rf.failed(),
                        "; ".join(str(c) for c in rf.failed()))
        tt = folded_unfolded_decomposition(h, cfg.eps, cfg.delta)
        summary.add(f"neck {neck} decomposition", not check_certificate(tt) and not tt.failed(),
                    "; ".join(str(c) for c in tt.failed()))
        ms = (time.perf_counter() - t0) * 1e3
        summary.records.append(ExperimentRecord(cfg.experiment, 2, neck, len(F), "scan", i,
                                                cfg.delta, ms, {"rho": rho, "sigma": sigma}))


def _divergence_profile(cfg: ExperimentConfig, summary: Summary) -> None:
    k = cfg.k if cfg.k is not None else 0
    n_max = max(cfg.sizes)
    m = cfg.margin
    restricted = cfg.eta is not None
    if k == 0:
        X, _ = _grid_patch(cfg, 2, 2 * n_max)
        o = m + 1 + n_max
        c = vertex_at(X, o, o)
        for i, n in enumerate(cfg.sizes):
            a, b = vertex_at(X, o - n, o), vertex_at(X, o + n, o)
            val, ms = _timed(div0, X, a, b, c, cfg.delta)
            summary.add(f"div0 >= 2n at n={n}", val >= 2 * n, f"{val}")
            summary.records.append(ExperimentRecord(cfg.experiment, 0, n, val, "bfs", i, cfg.delta, ms))
    else:
        dim = k + 1
        X, M = _grid_patch(cfg, dim, 6 * n_max)
        base = (m + 1,) * dim
        c = vertex_at(X, *base)
        restriction = (cfg.eta, cfg.volume_cap) if restricted else None
        for i, r in enumerate(cfg.sizes):
            t0 = time.perf_counter()
            best, n_inf = divergence_point(X, M, base, r, k, cfg.delta, cfg.method,
                                           cfg.volume_cap, restriction)
            ms = (time.perf_counter() - t0) * 1e3
            summary.records.append(ExperimentRecord(
                cfg.experiment, k, r, best, cfg.method, i, cfg.delta, ms,
                {"infinite": n_inf, "restricted": restricted}))
    pts = [(r.r, r.value) for r in summary.records if r.finite and r.value > 0]
    if len(pts) >= 3:
        fit = fit_exponent(pts)
        summary.fits["divergence"] = fit
        if cfg.expect_exponent is not None:
            summary.add("fitted exponent", abs(fit.slope - cfg.expect_exponent) <= cfg.exponent_tol,
                        f"slope {fit.slope:.4f} vs {cfg.expect_exponent} +- {cfg.exponent_tol}")


def divergence_samples(X, M, base, r: int, k: int) -> list:
    """Rectangles (k = 1) or boxes (k = 2) with a corner r steps diagonally
    from ``base``: r x r, 2r x r and 4r x r, skipping those that leave the
    margin."""
    corner = vertex_at(X, *[b + r for b in base])
    out = []
    for w, hgt in ((r, r), (2 * r, r), (4 * r, r)):
        try:
            if k == 1:
                out.append(rectangle_loop(X, corner, w, hgt, M))
            else:
                out.append(boundary_sphere(X, corner, w, M))
        except EscapesMargin:
            continue
    return out


def divergence_point(X, M, base, r: int, k: int, delta: float, method: str = "oracle",
                     volume_cap: float | None = None, restricted=None) -> tuple[float, int]:
    """Largest finite divergence over the samples at size r, and the count of
    infinite ones.  ``restricted = (eta, A)`` keeps eta-round samples of
    volume at most 2 A r^k; ``volume_cap`` A otherwise keeps volume <= A r^k."""
    c = vertex_at(X, *base)
    best, n_inf = -1.0, 0
    for h in divergence_samples(X, M, base, r, k):
        if restricted is not None:
            eta, A = restricted
            if not is_round(h, eta) or (A is not None and h.volume > 2 * A * r**k):
                continue
        elif volume_cap is not None and h.volume > volume_cap * r**k:
            continue
        q = DivergenceQuery(h, c, min(r, dist_to_image(h, c)), delta)
        val = divk(q, method).value
        if math.isinf(val):
            n_inf += 1
        else:
            best = max(best, val)
    return (best if best >= 0 else INF), n_inf


def _pipeline_compare(cfg: ExperimentConfig, summary: Summary) -> None:
    X, fam = _closed_family(ExperimentConfig(cfg.experiment, cfg.sizes, model="grid3",
                                             margin=cfg.margin))
    ratios = []
    for i, (s, make) in enumerate(fam):
        h = make()
        res, ms = _timed(pipeline_fill, h, cfg.eps, cfg.delta)
        summary.add(f"assembled >= oracle at size {s}", res.volume >= res.oracle_volume,
                    f"{res.volume} vs {res.oracle_volume}")
        summary.add(f"pipeline checks at size {s}", all(c.passed for c in res.checks),
                    "; ".join(str(c) for c in res.checks if not c.passed))
        ratios.append(res.ratio)
        summary.records.append(ExperimentRecord(cfg.experiment, 2, s, res.ratio, "pipeline", i,
                                                cfg.delta, ms, {"assembled": res.volume,
                                                                "oracle": res.oracle_volume,
                                                                "pieces": len(res.pieces)}))
    if ratios:
        summary.constants["ratio_max"] = max(ratios)


RUNNERS = {
    "iso-profile": _iso_profile,
    "radius-profile": _radius_profile,
    "partition-sweep": _partition_sweep,
    "folded-sweep": _folded_sweep,
    "divergence-profile": _divergence_profile,
    "pipeline-compare": _pipeline_compare,
}


def run(cfg: ExperimentConfig, write: bool = True) -> Summary:
    """Run one experiment; write CSV/SVG outputs when configured."""
    summary = Summary(cfg, [])
    try:
        RUNNERS[cfg.experiment](cfg, summary)
    except Exception as exc:
        raise type(exc)(f"{cfg.experiment}: {exc}") from exc
    for r in summary.records:
        r.config_hash = cfg.config_hash
    summary.records.sort(key=lambda r: (r.experiment, r.r, r.sample_id))
    if write and cfg.csv:
        Path(cfg.csv).write_text(to_csv(summary.records, cfg.timings))
    if write and cfg.svg and summary.records:
        Path(cfg.svg).write_text(emit_plot(summary.records, title=cfg.experiment))
    return summary


# -------------------------------------------------------------------- csv

def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def to_csv(records, timings: bool = False) -> str:
    """Versioned CSV; runtimes are written only when ``timings`` is set so
    that reruns reproduce the file byte for byte."""
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([r.k, _fmt(r.r), _fmt(r.delta), _fmt(r.value), str(r.finite).lower(), r.method,
                     r.sample_id, f"{r.runtime_ms:.3f}" if timings else "0"])
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != CSV_HEADER:
        raise ConfigError("missing fillab-csv v1 header")
    return list(csv.DictReader(lines[1:]))


# -------------------------------------------------------------------- svg

def emit_plot(records, title: str = "", series_key: str = "method") -> str:
    """Log-log scatter per series with a fitted line; deterministic bytes."""
    records = list(records)
    if not records:
        raise EmptyRecords("nothing to plot")
    W, H, pad = 480, 360, 50
    groups: dict[str, list] = {}
    for r in records:
        key = str(r.extra.get("series", getattr(r, series_key, r.method)))
        groups.setdefault(key, []).append(r)
    finite = [r for r in records if r.finite and r.r > 0 and r.value > 0]
    n_inf = sum(1 for r in records if not r.finite)
    if finite:
        lx = np.log10([r.r for r in finite])
        ly = np.log10([r.value for r in finite])
        x0, x1 = float(lx.min()), float(lx.max())
        y0, y1 = float(ly.min()), float(ly.max())
    else:
        x0 = y0 = 0.0
        x1 = y1 = 1.0
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def px(v):
        return pad + (v - x0) / (x1 - x0) * (W - 2 * pad)

    def py(v):
        return H - pad - (v - y0) / (y1 - y0) * (H - 2 * pad)

    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>',
           f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{_esc(title)}</text>',
           f'<text x="{W / 2:.1f}" y="{H - 12}" text-anchor="middle" font-size="11">log10 size</text>']
    for gi, (name, rs) in enumerate(sorted(groups.items())):
        col = colours[gi % len(colours)]
        pts = [(math.log10(r.r), math.log10(r.value)) for r in rs if r.finite and r.r > 0 and r.value > 0]
        for x, y in pts:
            out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{col}"/>')
        label = name
        if len(pts) >= 2:
            slope, icpt = np.polyfit([p[0] for p in pts], [p[1] for p in pts], 1)
            xa, xb = min(p[0] for p in pts), max(p[0] for p in pts)
            out.append(f'<line x1="{px(xa):.2f}" y1="{py(slope * xa + icpt):.2f}" '
                       f'x2="{px(xb):.2f}" y2="{py(slope * xb + icpt):.2f}" stroke="{col}"/>')
            label = f"{name} slope {slope:.3f}"
        out.append(f'<text x="{W - pad}" y="{pad + 14 * gi}" text-anchor="end" font-size="11" '
                   f'fill="{col}">{_esc(label)}</text>')
    if n_inf:
        out.append(f'<text x="{pad + 4}" y="{pad - 6}" font-size="11">{n_inf} infinite values not shown</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
