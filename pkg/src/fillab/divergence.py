"""Ball-avoiding paths and fillings, their profiles, and the transfer of
ball-avoiding fills from round pieces to general spheres."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import shortest_path

from .complex import INF, SimplicialComplex
from .decomposition import PartitionCertificate, identity_piece, round_partition_full
from .errors import DegenerateInput, EmptyFamily, EscapesMargin
from .filling import (
    ChainFill,
    branch_and_bound_fill,
    certification_window,
    exhaustive_fill,
    oracle_fill,
)
from .hypersurface import Hypersurface, image_chain, is_round, orient
from .records import ExponentFit, fit_exponent


def open_ball_mask(X: SimplicialComplex, c: int, radius: float) -> np.ndarray:
    """Vertices at distance strictly less than ``radius`` from c."""
    return X.metric.row(c) < radius


def forbidden_chambers(X: SimplicialComplex, c: int, radius: float) -> np.ndarray:
    """Chambers with some vertex in the open ball B(c, radius)."""
    inside = open_ball_mask(X, c, radius)
    return np.flatnonzero(inside[X.chamber_array].any(axis=1))


# ------------------------------------------------------------- k = 0

def div0(X: SimplicialComplex, a: int, b: int, c: int, delta: float) -> float:
    """Shortest a-b path avoiding the open ball of radius delta*dist(c, {a, b})."""
    if len({a, b, c}) < 3:
        raise DegenerateInput("a, b and c must be distinct")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    row = X.metric.row(c)
    radius = delta * min(float(row[a]), float(row[b]))
    keep = row >= radius
    g = X.graph.tocsr()
    idx = np.flatnonzero(keep)
    sub = g[idx][:, idx]
    pos = {int(v): i for i, v in enumerate(idx)}
    d = shortest_path(sub, method="D", unweighted=True, indices=[pos[a]])[0]
    val = float(d[pos[b]])
    return INF if math.isinf(val) else int(val)


# ------------------------------------------------------------- k >= 1

@dataclass
class DivergenceQuery:
    h: Hypersurface
    c: int
    r: float
    delta: float

    def validate(self) -> None:
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        d = self.h.ambient.metric.to_set(self.h.image_vertices.tolist())
        if self.r > float(d[self.c]) + 1e-9:
            raise DegenerateInput(f"r = {self.r} exceeds the distance {d[self.c]} from c to h")


@dataclass
class DivergenceResult:
    value: float
    method: str
    exact: bool
    chain: ChainFill | None = None
    nodes: int = 0
    runtime_ms: float = 0.0

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


def divk(q: DivergenceQuery, method: str = "oracle", certify: bool = False) -> DivergenceResult:
    """Least volume of a filling of h avoiding the open ball B(c, delta r).

    On grid models the chain with boundary h is unique, so the ball-avoiding
    infimum is the oracle volume when the oracle chain misses every
    forbidden chamber and infinite otherwise.  ``method`` selects the
    oracle, branch-and-bound or exhaustive enumeration with the forbidden
    chambers excluded; ``certify`` additionally cross-checks the oracle
    answer by exhaustive enumeration when the window is small.
    """
    t0 = time.perf_counter()
    q.validate()
    h = q.h
    X = h.ambient
    forb = forbidden_chambers(X, q.c, q.delta * q.r)
    if method == "oracle":
        res = oracle_fill(h)
        if not res.finite:
            out = DivergenceResult(INF, "oracle", True)
        else:
            chain = res.domain
            hit = set(chain.support()) & set(forb.tolist())
            out = DivergenceResult(INF if hit else res.volume, "oracle", True, None if hit else chain)
        if certify:
            win = certification_window(h)
            if win is not None:
                ex, _, nodes = exhaustive_fill(h, pad=win[0], forbidden_chambers=forb)
                out.nodes = nodes
                if ex != out.value and not (math.isinf(ex) and math.isinf(out.value)):
                    raise AssertionError(f"oracle {out.value} disagrees with enumeration {ex}")
    elif method in ("bnb", "exhaustive"):
        win = certification_window(h)
        pad = win[0] if win is not None else 1
        fn = branch_and_bound_fill if method == "bnb" else exhaustive_fill
        cost, coeffs, nodes = fn(h, pad=pad, forbidden_chambers=forb)
        chain = ChainFill(X, coeffs, h) if math.isfinite(cost) else None
        out = DivergenceResult(cost, method, win is not None, chain, nodes)
    else:
        raise ValueError(f"unknown divergence method {method!r}")
    out.runtime_ms = (time.perf_counter() - t0) * 1e3
    return out


# ------------------------------------------------------------- profiles

@dataclass
class ProfilePoint:
    r: float
    value: float
    method: str
    samples: int
    infinite: int

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


@dataclass
class DivergenceProfile:
    k: int
    delta: float
    points: list[ProfilePoint]
    fit: ExponentFit | None
    gaps: list = field(default_factory=list)
    restricted: bool = False


def div_profile(X: SimplicialComplex, family, delta: float, k: int | None = None,
                restricted: tuple[float, float] | None = None,
                method: str = "oracle") -> DivergenceProfile:
    """Per-size maximum of the finite divergence values over a sampled family.

    ``family`` yields (r, samples) where a sample is (a, b, c) for k = 0 or
    (h, c) otherwise; a sample may also be a callable returning one.
    ``restricted = (eta, A)`` keeps only eta-round spheres of volume at most
    2 A r^k.  Infinite values are excluded from the maximum and counted.
    """
    groups = list(family)
    if not groups:
        raise EmptyFamily("divergence family is empty")
    points, gaps = [], []
    kk = k
    for r, samples in groups:
        best, n_inf, n = -1.0, 0, 0
        for sample in samples:
            try:
                if callable(sample):
                    sample = sample()
            except EscapesMargin:
                gaps.append(r)
                continue
            if len(sample) == 3:
                kk = 0
                val = div0(X, *sample, delta)
            else:
                h, c = sample
                kk = h.k
                if restricted is not None:
                    eta, A = restricted
                    if not is_round(h, eta) or h.volume > 2 * A * r**h.k:
                        continue
                val = divk(DivergenceQuery(h, c, r, delta), method).value
            n += 1
            if math.isinf(val):
                n_inf += 1
            else:
                best = max(best, val)
        if n:
            points.append(ProfilePoint(float(r), best if best >= 0 else INF,
                                       "bfs" if kk == 0 else method, n, n_inf))
    pts = [(p.r, p.value) for p in points if p.finite and p.value > 0]
    fit = fit_exponent(pts) if len(pts) >= 3 else None
    return DivergenceProfile(kk if kk is not None else -1, delta, points, fit, gaps,
                             restricted is not None)


# ------------------------------------------------------------- transfer

@dataclass
class TransferResult:
    value: float
    chain: ChainFill | None
    pieces: int
    small_pieces: int
    certificate: PartitionCertificate
    piece_volumes: list[int]
    radius_ratio: float
    avoids_ball: bool
    valid: bool


def divround_transfer(h: Hypersurface, c: int, r: float, delta: float, eps: float,
                      L: float = 1.0) -> TransferResult:
    """Ball-avoiding filling of h assembled from fills of its round pieces.

    Pieces of volume at most eps r^k are filled minimally and their filling
    radius is compared with L eps r; the others are filled avoiding
    B(c, delta (1 - eps) r).  The value is the total volume of the piece
    fills, an upper bound for the ball-avoiding filling volume of h.
    """
    k = h.k
    q = DivergenceQuery(h, c, r, delta)
    q.validate()
    signs = orient(h.domain)
    if k == 2 and h.volume:
        cert = round_partition_full(h, eps, signs)
    else:
        cert = PartitionCertificate("single", h, signs, [identity_piece(h, signs, "contour")], [])
    X = h.ambient
    radius = delta * (1 - eps) * r
    forb = set(forbidden_chambers(X, c, radius).tolist())
    total, small, ratio = 0, 0, 0.0
    coeffs: dict[int, int] = {}
    vols = []
    ok = True
    for p in cert.pieces:
        if p.volume == 0 and not image_chain(p.map, p.signs):
            continue
        res = oracle_fill(p.map, signs=p.signs)
        if not res.finite:
            ok = False
            break
        chain = res.domain
        if p.volume <= eps * r**k:
            small += 1
            ratio = max(ratio, res.radius / (L * eps * r))
        if set(chain.support()) & forb:
            ok = False
            break
        total += chain.volume
        vols.append(chain.volume)
        for t, v in chain.coeffs.items():
            coeffs[t] = coeffs.get(t, 0) + v
    if not ok:
        return TransferResult(INF, None, len(cert.pieces), small, cert, vols, ratio, False, False)
    assembled = ChainFill(X, {t: v for t, v in coeffs.items() if v}, h, signs)
    avoids = not (set(assembled.support()) & forb)
    return TransferResult(total, assembled, len(cert.pieces), small, cert, vols, ratio,
                          avoids, assembled.is_valid())


def dist_to_image(h: Hypersurface, c: int) -> float:
    return float(h.ambient.metric.to_set(h.image_vertices.tolist())[c])

