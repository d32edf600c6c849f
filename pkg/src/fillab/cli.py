"""Command line entry point: ``fillab <verb> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .complex import SimplicialComplex
from .decomposition import (
    certificate_from_json,
    certificate_to_json,
    check_certificate,
    critical_radius,
    folded_unfolded_decomposition,
    pipeline_fill,
    remove_folded,
    round_partition_full,
    unfolded_to_round,
)
from .divergence import div_profile
from .errors import FillabError
from .filling import fill_by_method
from .harness import divergence_point, emit_plot, load_config, run, to_csv
from .hypersurface import diameter, folded_set, read_hsf, write_hsf
from .models import (
    ModelSpec,
    boundary_sphere,
    dumbbell_sphere,
    generate,
    perturbed_sphere,
    read_model,
    rectangle_loop,
    square_loop,
    vertex_at,
    write_model,
)
from .records import ExperimentRecord, fit_exponent

log = logging.getLogger("fillab")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _cache_path(X: SimplicialComplex) -> Path | None:
    root = os.environ.get("FILLAB_CACHE")
    spec = getattr(X.model, "spec", None)
    if not root or spec is None:
        return None
    key = f"{spec.kind}-{'x'.join(map(str, spec.sides))}-m{spec.margin_width}"
    if spec.removal is not None:
        c, r = spec.removal
        key += "-r" + "_".join(f"{v:g}" for v in c) + f"_{r:g}"
    return Path(root) / f"{key}.npz"


def load_complex(path: str):
    X, M = read_model(Path(path).read_text())
    cache = _cache_path(X)
    if cache is not None and cache.exists():
        n = X.metric.load(cache)
        log.info("loaded %d cached distance rows from %s", n, cache)
    return X, M


def save_cache(X: SimplicialComplex) -> None:
    cache = _cache_path(X)
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        X.metric.save(cache)


def load_surface(args):
    X, M = load_complex(args.complex)
    return X, M, read_hsf(Path(args.surface).read_text(), X)


# ----------------------------------------------------------------- verbs

def cmd_generate(args) -> int:
    removal = None
    if args.removal:
        *c, r = (float(x) for x in args.removal.replace(",", " ").split())
        removal = (tuple(c), r)
    spec = ModelSpec(args.model, args.size, args.margin, removal,
                     _ints(args.shape) if args.shape else None)
    X, M = generate(spec)
    Path(args.out).write_text(write_model(X))
    print(f"{spec.kind}: {X.n_vertices} vertices, {X.n_chambers} chambers -> {args.out}")
    if args.surface:
        corner = vertex_at(X, *_ints(args.corner))
        if args.surface == "square-loop":
            h = square_loop(X, corner, args.side, M)
        elif args.surface == "rectangle-loop":
            h = rectangle_loop(X, corner, args.side, args.height or args.side, M)
        elif args.surface == "boundary-sphere":
            h = boundary_sphere(X, corner, args.side, M)
        elif args.surface == "perturbed-sphere":
            h, _ = perturbed_sphere(X, corner, args.side, np.random.default_rng(args.seed or 0), margin=M)
        else:
            h, _ = dumbbell_sphere(X, _ints(args.corner), args.side, margin=M)
        Path(args.surface_out).write_text(write_hsf(h))
        print(f"{args.surface}: volume {h.volume}, diameter {diameter(h):g} -> {args.surface_out}")
    return 0


def cmd_fill(args) -> int:
    X, M, h = load_surface(args)
    kw = {"apex": args.apex} if args.apex is not None and args.method != "oracle" else {}
    res = fill_by_method(h, args.method, **kw)

    def num(v):
        return v if v is None or math.isfinite(v) else "inf"

    report = {"method": res.method, "volume": num(float(res.volume)), "radius": num(float(res.radius)),
              "coneConstant": res.cone_constant, "optimalityCertificate": bool(res.certificate),
              "runtime_ms": round(res.runtime_ms, 3)}
    text = json.dumps(report, indent=2)
    print(text)
    if args.report:
        Path(args.report).write_text(text + "\n")
    save_cache(X)
    return 0 if res.finite else 2


def cmd_partition(args) -> int:
    X, M, h = load_surface(args)
    if args.mode == "round":
        cert = round_partition_full(h, args.eps)
    elif args.mode == "folded":
        rho = args.rho if args.rho is not None else 6 * args.delta * h.volume ** 0.5
        cert = remove_folded(h, args.eps, rho)
    elif args.mode == "thickthin":
        cert = folded_unfolded_decomposition(h, args.eps, args.delta)
    elif args.mode == "thickround":
        cert = unfolded_to_round(h, args.eps, args.delta)
    else:
        res = pipeline_fill(h, args.eps, args.delta)
        cert = res.certificate
        print(f"assembled volume {res.volume}, oracle {res.oracle_volume}, ratio {res.ratio:.4f}")
    problems = check_certificate(cert)
    failed = cert.failed()
    for c in cert.checks:
        print(c)
    for p in problems:
        print("PROBLEM", p)
    print(f"{cert.kind}: {len(cert.contours)} contours, remainder volume {cert.remainder_volume}")
    if args.cert:
        Path(args.cert).write_text(json.dumps(certificate_to_json(cert)))
    return 1 if problems or failed else 0


def cmd_folded(args) -> int:
    X, M, h = load_surface(args)
    F = folded_set(h, args.eps, args.rho)
    print(f"folded vertices: {len(F)} of {len(h.vol_vertices)}")
    bad = 0
    for y in list(F)[: args.limit]:
        c = critical_radius(h, y, args.eps, args.rho)
        print(f"  y={y} R*={c.R_star} r*={c.r_star} r={c.r}"
              + ("" if c.strict else " (non-strict R*)"))
        for chk in c.checks:
            bad += not chk.passed
            log.info("    %s", chk)
    return 1 if bad else 0


def cmd_divergence(args) -> int:
    X, M = load_complex(args.complex)
    kind, _, sizes = args.family.partition(":")
    sizes = _ints(sizes)
    spec = getattr(X.model, "spec", None)
    if spec is None:
        raise FillabError("divergence families need a grid model complex")
    recs = []
    if kind == "line":
        o = [s // 2 for s in spec.sides]
        c = vertex_at(X, *o)
        fam = [(n, [(vertex_at(X, o[0] - n, *o[1:]), vertex_at(X, o[0] + n, *o[1:]), c)])
               for n in sizes]
        prof = div_profile(X, fam, args.delta)
        for i, p in enumerate(prof.points):
            recs.append(ExperimentRecord("divergence", 0, p.r, p.value, p.method, i, args.delta,
                                         extra={"infinite": p.infinite}))
    elif kind == "box":
        if args.k not in (1, 2) or X.dim != args.k + 1:
            raise FillabError("box families need --k 1 on grid2 or --k 2 on grid3")
        base = (spec.margin_width + 1,) * X.dim
        restricted = (args.round_eta, args.volume_cap) if args.round_eta is not None else None
        for i, r in enumerate(sizes):
            val, n_inf = divergence_point(X, M, base, r, args.k, args.delta,
                                          volume_cap=args.volume_cap, restricted=restricted)
            recs.append(ExperimentRecord("divergence", args.k, r, val, "oracle", i, args.delta,
                                         extra={"infinite": n_inf}))
    else:
        raise FillabError(f"unknown family {kind!r}; use line:<n,...> or box:<r,...>")
    for r in recs:
        print(f"r={r.r:g} value={r.value:g} infinite={r.extra.get('infinite', 0)}")
    pts = [(r.r, r.value) for r in recs if r.finite and r.value > 0]
    if len(pts) >= 3:
        print(f"exponent {fit_exponent(pts).slope:.4f}")
    if args.csv:
        Path(args.csv).write_text(to_csv(recs))
    if args.svg:
        Path(args.svg).write_text(emit_plot(recs, title="divergence"))
    save_cache(X)
    return 0


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    if args.threads:
        cfg.threads = args.threads
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.raw["seed"] = str(args.seed)
    summary = run(cfg)
    print(summary.report())
    return summary.exit_code


def cmd_check_cert(args) -> int:
    X, M = load_complex(args.complex)
    doc = json.loads(Path(args.cert).read_text())
    cert = certificate_from_json(doc, X)
    problems = check_certificate(cert)
    failed = cert.failed()
    for p in problems:
        print("PROBLEM", p)
    for c in failed:
        print("FAILED", c)
    print("certificate sound" if not problems and not failed else "certificate rejected")
    return 1 if problems or failed else 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fillab", description="Filling experiments on model complexes.")
    p.add_argument("--version", action="version", version=f"fillab {__version__}")
    p.add_argument("--threads", type=int, default=0, help="worker threads for experiments")
    p.add_argument("--seed", type=int, default=None, help="override the experiment seed")
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("generate", help="write a model complex and optionally a hypersurface")
    g.add_argument("--model", required=True)
    g.add_argument("--size", type=int, required=True)
    g.add_argument("--margin", type=int, default=None)
    g.add_argument("--shape", default=None, help="per-axis sides, e.g. 20,10,9")
    g.add_argument("--remove", "--removal", dest="removal", default=None,
                   help="centre coordinates then radius, e.g. 3.5,3.5,3.5,0.9")
    g.add_argument("--out", required=True)
    g.add_argument("--surface", choices=["square-loop", "rectangle-loop", "boundary-sphere",
                                         "perturbed-sphere", "dumbbell"])
    g.add_argument("--corner", default="0,0,0")
    g.add_argument("--side", type=int, default=2, help="side length (neck length for dumbbells)")
    g.add_argument("--height", type=int, default=None)
    g.add_argument("--surface-out", default="surface.hsf")
    g.set_defaults(func=cmd_generate)

    def surface_args(q):
        q.add_argument("--complex", required=True)
        q.add_argument("--surface", required=True)

    f = sub.add_parser("fill", help="fill a hypersurface")
    surface_args(f)
    f.add_argument("--method", default="oracle", choices=["oracle", "cone", "heuristic"])
    f.add_argument("--apex", type=int, default=None, help="apex vertex for cone and heuristic fills")
    f.add_argument("--report", default=None, help="write the JSON report here")
    f.set_defaults(func=cmd_fill)

    pt = sub.add_parser("partition", help="decompose a surface and write a certificate")
    pt.add_argument("mode", choices=["round", "folded", "thickthin", "thickround", "pipeline"])
    surface_args(pt)
    pt.add_argument("--eps", type=float, default=0.5)
    pt.add_argument("--delta", type=float, default=0.25)
    pt.add_argument("--rho", type=float, default=None)
    pt.add_argument("--cert", default=None)
    pt.set_defaults(func=cmd_partition)

    fo = sub.add_parser("folded", help="folded set and critical radii")
    surface_args(fo)
    fo.add_argument("--eps", type=float, default=0.5)
    fo.add_argument("--rho", type=float, required=True)
    fo.add_argument("--limit", type=int, default=10)
    fo.set_defaults(func=cmd_folded)

    d = sub.add_parser("divergence", help="divergence profile of a sampled family")
    d.add_argument("--complex", required=True)
    d.add_argument("--k", type=int, default=0)
    d.add_argument("--delta", type=float, default=0.25)
    d.add_argument("--family", required=True, help="line:<n,...> (k = 0) or box:<r,...>")
    d.add_argument("--round-eta", type=float, default=None,
                   help="keep only eta-round samples (restricted profile)")
    d.add_argument("--volume-cap", type=float, default=None, help="volume cap constant A")
    d.add_argument("--csv", default=None)
    d.add_argument("--svg", default=None)
    d.set_defaults(func=cmd_divergence)

    e = sub.add_parser("experiment", help="run an experiment config")
    e.add_argument("config")
    e.set_defaults(func=cmd_experiment)

    c = sub.add_parser("check-cert", help="re-check a saved certificate")
    c.add_argument("--complex", required=True)
    c.add_argument("--cert", required=True)
    c.set_defaults(func=cmd_check_cert)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except FillabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
