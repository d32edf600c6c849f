"""Partitions of k = 2 hypersurfaces into round, folded and unfolded pieces,
each step emitting a certificate checked by one shared checker."""

from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .complex import INF, SimplicialComplex, build_complex, read_scx, write_scx
from .errors import (
    BoundViolation,
    CapFillUnavailable,
    DegenerateInput,
    FormatError,
    NoEmptyAnnulus,
    NonDecayingRemainder,
    NonTerminating,
    NotFoldedVertex,
    RectangleNotStarFillable,
    UnsupportedDimension,
)
from .filling import (
    FillResult,
    ChainFill,
    box_corner_vertex,
    cone_fill,
    default_apex,
    image_radius,
    oracle_fill,
)
from .hypersurface import (
    Hypersurface,
    GrowthProfile,
    cut_chambers,
    diameter,
    euler_characteristic,
    folded_constant,
    folded_set,
    growth_levels,
    growth_profiles,
    image_chain,
    orient,
    permutation_parity,
    read_hsf,
    write_hsf,
)


def theta(k: int) -> float:
    """Remainder decay factor of one round step."""
    return 1.0 - 6.0 ** -(k + 1)


def boundary_constant(k: int) -> int:
    """C_k = k (k+1) 3^(k-1) bounding the frontier of a folded region."""
    return k * (k + 1) * 3 ** (k - 1)


# -------------------------------------------------------------- records

@dataclass
class Check:
    name: str
    passed: bool
    measured: float = 0.0
    bound: float = 0.0

    def __str__(self) -> str:
        tag = "ok" if self.passed else "FAIL"
        return f"{self.name}: {tag} (measured {self.measured:g}, bound {self.bound:g})"


@dataclass(eq=False)
class Cap:
    """Disk glued along a closed walk of source vertices."""

    cap_id: int
    walk: list[int]
    complex: SimplicialComplex
    image: np.ndarray
    boundary: dict[int, int]  # cap vertex -> walk position
    volume: int


@dataclass(eq=False)
class Piece:
    """Closed piece of a partition.

    ``labels[v]`` is ("src", source vertex) or ("cap", cap id, cap vertex);
    ``origin[t]`` is ("src", source chamber) or ("cap", cap id, cap chamber).
    ``signs`` orients the piece compatibly with the source orientation.
    """

    map: Hypersurface
    signs: np.ndarray | None
    labels: list
    origin: list
    role: str
    centre: tuple | None = None

    @property
    def volume(self) -> int:
        return self.map.volume


@dataclass(eq=False)
class PartitionCertificate:
    kind: str
    source: Hypersurface
    source_signs: np.ndarray
    contours: list[Piece]
    remainder: list[Piece]
    caps: dict[int, Cap] = field(default_factory=dict)
    steps: list["PartitionCertificate"] = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    @property
    def pieces(self) -> list[Piece]:
        return self.contours + self.remainder

    @property
    def remainder_volume(self) -> int:
        return sum(p.volume for p in self.remainder)

    @property
    def contour_volume(self) -> int:
        return sum(p.volume for p in self.contours)

    def failed(self) -> list[Check]:
        out = [c for c in self.checks if not c.passed]
        for s in self.steps:
            out += s.failed()
        return out

    def check(self, name: str) -> Check:
        return next(c for c in self.checks if c.name == name)


# ------------------------------------------------------------ orientation

def _source_signs(h: Hypersurface, signs: np.ndarray | None) -> np.ndarray:
    if signs is not None:
        return np.asarray(signs, dtype=np.int64)
    s = orient(h.domain)
    if s is None:
        raise DegenerateInput("hypersurface domain is not orientable")
    return s


def _components(D: SimplicialComplex) -> np.ndarray:
    comp = -np.ones(D.n_chambers, dtype=np.int64)
    across = D.across
    c = 0
    for s in range(D.n_chambers):
        if comp[s] >= 0:
            continue
        comp[s] = c
        dq = deque([s])
        while dq:
            t = dq.popleft()
            for u in across[t]:
                if u >= 0 and comp[u] < 0:
                    comp[u] = c
                    dq.append(int(u))
        c += 1
    return comp


def _induced_sign(piece_chamber: Sequence[int], labels: list, sign: int) -> int:
    src = [labels[v][1] for v in piece_chamber]
    return sign * permutation_parity(src)


def align_signs(D: SimplicialComplex, labels: list, origin: list,
                source_signs: np.ndarray) -> np.ndarray | None:
    """Orientation of D agreeing with the source on source chambers.

    Returns None when D is not orientable or a component would need two
    incompatible orientations.
    """
    raw = orient(D)
    if raw is None:
        return None
    comp = _components(D)
    out = raw.copy()
    for c in np.unique(comp):
        agree = disagree = 0
        for t in np.flatnonzero(comp == c):
            o = origin[t]
            if o[0] != "src":
                continue
            s = _induced_sign(D.chambers[t], labels, int(raw[t]))
            if s == source_signs[o[1]]:
                agree += 1
            else:
                disagree += 1
        if agree and disagree:
            return None
        if disagree:
            out[comp == c] *= -1
    return out


# ---------------------------------------------------------------- carving

def boundary_walks(D: SimplicialComplex, mask: np.ndarray, signs: np.ndarray) -> list[list[int]]:
    """Closed walks along the frontier of a chamber region of a closed surface.

    Each frontier edge is oriented as part of the boundary of the region;
    at every vertex the outgoing edge is found by turning through the
    region's fan, so pinched vertices give separate walks.
    """
    if D.dim != 2:
        raise UnsupportedDimension("frontier walks are implemented for surfaces")
    facets = D.facet_index
    out_edges = []
    for fct, ts in facets.items():
        inside = [t for t in ts if mask[t]]
        if len(inside) != 1 or len(ts) != 2:
            continue
        t = inside[0]
        ch = D.chambers[t]
        j = next(i for i, w in enumerate(ch) if w not in fct)
        a, b = fct
        if signs[t] * (-1) ** j < 0:
            a, b = b, a
        out_edges.append((a, b))
    frontier = {tuple(sorted(e)) for e in out_edges}
    succ_edge = {}
    for a, b in out_edges:
        # turn around b starting from the region chamber on edge (a, b)
        t = next(t for t in facets[tuple(sorted((a, b)))] if mask[t])
        prev = a
        while True:
            w = next(x for x in D.chambers[t] if x != b and x != prev)
            e = tuple(sorted((b, w)))
            if e in frontier:
                succ_edge[(a, b)] = (b, w)
                break
            t = next(u for u in facets[e] if u != t)
            prev = w
    walks = []
    used = set()
    for e in sorted(out_edges):
        if e in used:
            continue
        walk = []
        cur = e
        while cur not in used:
            used.add(cur)
            walk.append(cur[0])
            cur = succ_edge[cur]
        walks.append(walk)
    return walks


def make_cap(h: Hypersurface, walk: list[int], cap_id: int) -> Cap:
    """Cone disk on the image of a closed walk, built from a combing.

    The apex is the lower corner of the walk image's bounding box, which
    keeps every ladder cell star-local on grid models; the lowest image
    vertex is tried next.
    """
    from .models import cycle_complex

    X = h.ambient
    img = h.image[walk]
    loop = Hypersurface(cycle_complex(len(walk)), img, X, kind="sphere")
    tries = []
    corner = box_corner_vertex(X, img.tolist())
    if corner is not None:
        tries.append(corner)
    tries.append(default_apex(loop))
    last = None
    for apex in tries:
        try:
            res = cone_fill(loop, apex=int(apex), measure=False)
            break
        except RectangleNotStarFillable as exc:
            last = exc
    else:
        raise CapFillUnavailable(f"no star-local cone for a walk of length {len(walk)}: {last}")
    d = res.domain
    return Cap(cap_id, list(walk), d.domain, d.image, dict(d.boundary), d.volume)


def _assemble(h: Hypersurface, src_signs: np.ndarray, src_chambers: Sequence[int],
              caps: Sequence[Cap], role: str, centre=None) -> Piece:
    labels: list = []
    index: dict = {}

    def vid(lab) -> int:
        if lab not in index:
            index[lab] = len(labels)
            labels.append(lab)
        return index[lab]

    chs, origin, images = [], [], []
    for t in src_chambers:
        chs.append([vid(("src", int(v))) for v in h.domain.chambers[t]])
        origin.append(("src", int(t)))
    for cap in caps:
        for lt, ch in enumerate(cap.complex.chambers):
            row = []
            for u in ch:
                if u in cap.boundary:
                    row.append(vid(("src", int(cap.walk[cap.boundary[u]]))))
                else:
                    row.append(vid(("cap", cap.cap_id, int(u))))
            chs.append(row)
            origin.append(("cap", cap.cap_id, lt))
    cap_by_id = {c.cap_id: c for c in caps}
    for lab in labels:
        if lab[0] == "src":
            images.append(int(h.image[lab[1]]))
        else:
            images.append(int(cap_by_id[lab[1]].image[lab[2]]))
    if not chs:
        raise DegenerateInput("empty piece")
    soup = build_complex(chs, n_vertices=len(labels))
    cut = cut_chambers(soup, range(soup.n_chambers), np.asarray(images))
    new_labels = [labels[g] for g in cut.gluing.tolist()]
    new_origin = [origin[t] for t in cut.chambers]
    D = cut.complex
    chi = euler_characteristic(D)
    ncomp = len(np.unique(_components(D)))
    kind = "sphere" if chi == 2 * ncomp else "surface"
    hs = Hypersurface(D, cut.image, h.ambient, kind=kind)
    if kind == "surface":
        hs.genus = max(0, (2 * ncomp - chi) // 2)
    signs = align_signs(D, new_labels, new_origin, src_signs)
    return Piece(hs, signs, new_labels, new_origin, role, centre)


def identity_piece(h: Hypersurface, signs: np.ndarray, role: str = "remainder") -> Piece:
    labels = [("src", v) for v in range(h.domain.n_vertices)]
    origin = [("src", t) for t in range(h.domain.n_chambers)]
    return Piece(h, np.asarray(signs), labels, origin, role)


def carve(h: Hypersurface, signs: np.ndarray, regions: Sequence[np.ndarray],
          centres: Sequence[tuple] | None = None, kind: str = "carve") -> PartitionCertificate:
    """Split h into the given disjoint chamber regions and their complement.

    Every frontier walk of a region receives one cap; the cap is glued to
    the region's contour and, with the opposite orientation, to the
    remainder.
    """
    C = h.domain.n_chambers
    taken = np.zeros(C, dtype=bool)
    caps: dict[int, Cap] = {}
    contours = []
    for i, mask in enumerate(regions):
        mask = np.asarray(mask, dtype=bool)
        if np.any(taken & mask):
            raise DegenerateInput("carved regions overlap")
        taken |= mask
        mine = []
        for walk in boundary_walks(h.domain, mask, signs):
            cap = make_cap(h, walk, len(caps))
            caps[cap.cap_id] = cap
            mine.append(cap)
        centre = centres[i] if centres else None
        contours.append(_assemble(h, signs, np.flatnonzero(mask), mine, "contour", centre))
    rest = np.flatnonzero(~taken)
    remainder = []
    if len(rest):
        remainder.append(_assemble(h, signs, rest, list(caps.values()), "remainder"))
    return PartitionCertificate(kind, h, signs, contours, remainder, caps)


# ------------------------------------------------------------- checking

def _closed_pseudomanifold(D: SimplicialComplex) -> bool:
    return all(len(ts) == 2 for ts in D.facet_index.values())


def _signs_coherent(D: SimplicialComplex, signs: np.ndarray) -> bool:
    across = D.across
    chs = D.chambers
    for t in range(D.n_chambers):
        for j in range(D.dim + 1):
            u = int(across[t, j])
            if u < 0:
                continue
            fct = chs[t][:j] + chs[t][j + 1 :]
            ju = next(i for i, w in enumerate(chs[u]) if w not in fct)
            if signs[t] * (-1) ** j != -signs[u] * (-1) ** ju:
                return False
    return True


def _add_chain(acc: dict, chain: dict) -> None:
    for key, val in chain.items():
        acc[key] = acc.get(key, 0) + val


def _chain_sum(pieces: Sequence[Piece]) -> dict:
    acc: dict = {}
    for p in pieces:
        if p.signs is None:
            return {None: 1}
        _add_chain(acc, image_chain(p.map, p.signs))
    return {key: val for key, val in acc.items() if val}


def check_certificate(cert: PartitionCertificate) -> list[str]:
    """Independent soundness check; returns a list of problems (empty if sound).

    Elementary steps are checked for interior disjointness, closed and
    oriented pieces, image preservation, caps shared by exactly two pieces
    and the chain identity; composite certificates are checked step by step
    and for the chain identity of their terminal pieces.
    """
    problems: list[str] = []
    src = cert.source
    src_chain = image_chain(src, cert.source_signs)
    if cert.steps:
        for i, step in enumerate(cert.steps):
            problems += [f"step {i}: {p}" for p in check_certificate(step)]
        if _chain_sum(cert.pieces) != src_chain:
            problems.append("terminal pieces do not sum to the source chain")
        return problems
    seen = np.zeros(src.domain.n_chambers, dtype=np.int64)
    cap_uses: dict[tuple, int] = defaultdict(int)
    for pi, p in enumerate(cert.pieces):
        D = p.map.domain
        if not _closed_pseudomanifold(D):
            problems.append(f"piece {pi} is not closed")
        if p.signs is None or not _signs_coherent(D, p.signs):
            problems.append(f"piece {pi} carries no coherent orientation")
        for v, lab in enumerate(p.labels):
            if lab[0] == "src":
                if p.map.image[v] != src.image[lab[1]]:
                    problems.append(f"piece {pi} vertex {v} changes the source image")
            else:
                cap = cert.caps.get(lab[1])
                if cap is None or p.map.image[v] != cap.image[lab[2]]:
                    problems.append(f"piece {pi} vertex {v} disagrees with its cap")
        for t, o in enumerate(p.origin):
            ch = D.chambers[t]
            if o[0] == "src":
                seen[o[1]] += 1
                labs = [p.labels[v] for v in ch]
                if any(lab[0] != "src" for lab in labs) or \
                        tuple(sorted(lab[1] for lab in labs)) != src.domain.chambers[o[1]]:
                    problems.append(f"piece {pi} chamber {t} is not source chamber {o[1]}")
                elif p.signs is not None and \
                        _induced_sign(ch, p.labels, int(p.signs[t])) != cert.source_signs[o[1]]:
                    problems.append(f"piece {pi} chamber {t} reverses the source orientation")
            else:
                cap_uses[(o[1], o[2])] += 1
    if np.any(seen != 1):
        problems.append(f"{int(np.sum(seen != 1))} source chambers not in exactly one piece")
    for cid, cap in cert.caps.items():
        for lt in range(cap.complex.n_chambers):
            if cap_uses.get((cid, lt), 0) != 2:
                problems.append(f"cap {cid} chamber {lt} used {cap_uses.get((cid, lt), 0)} times")
                break
    if _chain_sum(cert.pieces) != src_chain:
        problems.append("pieces do not sum to the source chain")
    return problems


# ------------------------------------------------------------ round step

def r0_radius(h: Hypersurface, y: int, lam: float, profile: GrowthProfile | None = None) -> int:
    """Largest integer r >= 1 with Vol(h(y, r)) >= lam r^k."""
    k = h.k
    if profile is None:
        profile = _profiles(h, [y], lam)[0]
    V = profile.volumes
    r = np.arange(len(V))
    ok = np.flatnonzero((V >= lam * r.astype(float) ** k) & (r >= 1))
    return int(ok.max()) if len(ok) else 1


def _profiles(h: Hypersurface, ys, lam: float):
    k = h.k
    rmax = int(math.floor((h.volume / lam) ** (1.0 / k))) + 1
    return growth_profiles(h, ys, max(rmax, 2))


def _levels_mask(lev: np.ndarray, r: float) -> np.ndarray:
    return lev <= r


def _region_vertices(h: Hypersurface, mask: np.ndarray) -> set[int]:
    return set(np.unique(h.domain.chamber_array[mask]).tolist())


def _radius_check(cert: PartitionCertificate, h: Hypersurface, R: float, name: str) -> Check:
    worst = 0.0
    for p in cert.pieces:
        worst = max(worst, image_radius(p.map.chamber_images, h))
    return Check(name, worst <= R + 1e-9, worst, R)


def _eta(pieces: Sequence[Piece]) -> float:
    out = 0.0
    for p in pieces:
        v = p.volume
        if v:
            out = max(out, diameter(p.map) / v ** (1.0 / p.map.k))
    return out


def round_partition_step(h: Hypersurface, eps: float, signs: np.ndarray | None = None,
                         lam: float | None = None, max_halvings: int = 20) -> PartitionCertificate:
    """One round-partition step: greedy balls of maximal r0, capped.

    lambda starts at 2^-k and is halved until the three output bounds hold.
    """
    k = h.k
    if k != 2:
        raise UnsupportedDimension("round partition is implemented for k = 2")
    signs = _source_signs(h, signs)
    vol = h.volume
    if vol == 0:
        cert = PartitionCertificate("round-step", h, signs, [], [identity_piece(h, signs)])
        cert.constants = {"eps": eps, "lambda": lam or 2.0 ** -k}
        return cert
    lam = 2.0 ** -k if lam is None else lam
    R = eps * vol ** (1.0 / k)
    th = theta(k)
    ys = h.vol_vertices.tolist()
    for attempt in range(max_halvings + 1):
        profs = _profiles(h, ys, lam)
        r0 = {p.vertex: r0_radius(h, p.vertex, lam, p) for p in profs}
        lev = {p.vertex: p.levels for p in profs}
        remaining = set(ys)
        chosen: list[tuple[int, int]] = []
        degenerate = None
        while remaining:
            y = min(remaining, key=lambda v: (-r0[v], v))
            r = r0[y]
            chosen.append((y, r))
            reach = _region_vertices(h, _levels_mask(lev[y], 6 * r))
            if degenerate is None and set(ys) <= reach:
                degenerate = len(chosen) - 1
            remaining -= reach
            remaining.discard(y)
        flags = []
        if degenerate is not None:
            chosen = [chosen[degenerate]]
            flags.append("single-domain case")
        regions = [_levels_mask(lev[y], r) for y, r in chosen]
        cert = carve(h, signs, regions, chosen, kind="round-step")
        cert.flags = flags
        two = [_levels_mask(lev[y], 2 * r) for y, r in chosen]
        overlap = any(np.any(two[i] & two[j]) for i in range(len(two)) for j in range(i))
        cert.checks = [
            Check("sum contour volume <= 2 Vol", cert.contour_volume <= 2 * vol, cert.contour_volume, 2 * vol),
            Check("remainder volume <= theta Vol", cert.remainder_volume <= th * vol, cert.remainder_volume, th * vol),
            _radius_check(cert, h, R, "pieces inside N_R(h)"),
            Check("M(y_i, 2r_i) pairwise chamber-disjoint", not overlap or degenerate is not None,
                  float(overlap), 0.0),
        ]
        cert.constants = {"eps": eps, "lambda": lam, "theta": th, "R": R,
                          "eta": _eta(cert.contours), "halvings": attempt}
        if all(c.passed for c in cert.checks):
            return cert
        lam /= 2.0
    raise BoundViolation(f"round step bounds still fail after {max_halvings} halvings: "
                         + "; ".join(str(c) for c in cert.checks if not c.passed))


def round_partition_full(h: Hypersurface, eps: float, signs: np.ndarray | None = None,
                         max_steps: int = 10_000) -> PartitionCertificate:
    """Iterate round steps on the remainder until it has volume zero."""
    k = h.k
    signs = _source_signs(h, signs)
    vol = h.volume
    th = theta(k)
    steps = []
    contours: list[Piece] = []
    cur = identity_piece(h, signs)
    for _ in range(max_steps):
        if cur.volume == 0:
            break
        step = round_partition_step(cur.map, eps, cur.signs)
        if step.remainder_volume > th * cur.volume:
            raise NonDecayingRemainder(
                f"remainder {step.remainder_volume} exceeds theta * {cur.volume}")
        steps.append(step)
        contours += step.contours
        cur = step.remainder[0] if step.remainder else None
        if cur is None:
            break
    else:
        raise NonDecayingRemainder("round partition did not terminate")
    remainder = [cur] if cur is not None else []
    cert = PartitionCertificate("round-full", h, signs, contours, remainder, steps=steps)
    R = eps * vol ** (1.0 / k) if vol else 0.0
    total = sum(p.volume for p in contours)
    bound = 2 * 6 ** (k + 1) * vol
    cert.checks = [
        Check("sum contour volume <= 2*6^(k+1) Vol", total <= bound, total, bound),
        _radius_check(cert, h, R, "pieces inside N_R(h)"),
    ]
    cert.constants = {"eps": eps, "theta": th, "R": R, "steps": len(steps),
                      "eta": _eta(contours)}
    return cert


# ---------------------------------------------------------- folded parts

@dataclass
class CriticalRadii:
    vertex: int
    R_star: int
    r_star: int
    r: int
    strict: bool
    checks: list[Check]


def critical_radius(h: Hypersurface, y: int, eps: float, rho: float,
                    profile: GrowthProfile | None = None) -> CriticalRadii:
    """Scan integer radii for R_*, r_* and r = r_* + 1 at a folded vertex.

    R_* is the least r in [1, rho] with Vol(h(y, r)) below eps r^k / (2 12^k)
    (falling back to "at most" when the strict threshold is never met),
    r_* the largest r in [1, R_*] with Vol(h(y, r)) > eps r^k.
    """
    k = h.k
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    n = int(math.floor(rho))
    if profile is None:
        profile = growth_profiles(h, [y], n + 12 + 6 * (n // 12 + 2))[0]
    V = profile.volumes.astype(float)
    need = 6 * (n // 12 + 2)
    if len(V) <= need:
        raise ValueError("growth profile too short for the critical radius checks")
    r = np.arange(len(V), dtype=float)
    thr = eps * r**k / folded_constant(k)
    span = np.arange(1, n + 1)
    if len(span) == 0 or not np.any(V[span] <= thr[span]):
        raise NotFoldedVertex(f"vertex {y} is not in the folded set at rho={rho}")
    strict_hits = span[V[span] < thr[span]]
    strict = len(strict_hits) > 0
    R_star = int(strict_hits[0]) if strict else int(span[V[span] <= thr[span]][0])
    cand = np.arange(1, R_star + 1)
    above = cand[V[cand] > eps * cand.astype(float) ** k]
    r_star = int(above.max()) if len(above) else 1
    rr = r_star + 1
    Ck = boundary_constant(k)
    bvol = int(profile.boundary_volumes[rr])
    checks = [
        Check("(b1) V(6r) <= 12^k V(r)", V[6 * rr] <= 12**k * V[rr], V[6 * rr], 12**k * V[rr]),
        Check("(b2) V(r) <= eps r^k", V[rr] <= eps * rr**k, V[rr], eps * rr**k),
        Check("(b3) Vol(frontier) <= C_k eps^(1/k) V(r)^((k-1)/k)",
              bvol <= Ck * eps ** (1.0 / k) * V[rr] ** ((k - 1) / k) + 1e-9,
              bvol, Ck * eps ** (1.0 / k) * V[rr] ** ((k - 1) / k)),
        Check("r_* < R_*/12", r_star < R_star / 12.0, r_star, R_star / 12.0),
    ]
    return CriticalRadii(int(y), R_star, r_star, rr, strict, checks)


def remove_folded(h: Hypersurface, eps: float, rho: float,
                  signs: np.ndarray | None = None) -> PartitionCertificate:
    """Carve balls of radius r(y) around folded vertices, greedily by r(y)."""
    k = h.k
    if k != 2:
        raise UnsupportedDimension("folded removal is implemented for k = 2")
    signs = _source_signs(h, signs)
    vol = h.volume
    F = folded_set(h, eps, rho)
    consts = {"eps": eps, "rho": rho, "folded": len(F)}
    if len(F) == 0:
        cert = PartitionCertificate("remove-folded", h, signs, [], [identity_piece(h, signs)])
        cert.constants = consts
        cert.checks = [Check("(4) Vol(r) + sum/2 <= Vol(h)", True, vol, vol)]
        return cert
    n = int(math.floor(rho))
    rmax = n + 12 + 6 * (n // 12 + 2)
    profs = {p.vertex: p for p in growth_profiles(h, sorted(F), rmax)}
    crit = {y: critical_radius(h, y, eps, rho, profs[y]) for y in sorted(F)}
    remaining = set(F)
    chosen = []
    while remaining:
        y = min(remaining, key=lambda v: (-crit[v].r, v))
        r = crit[y].r
        chosen.append((y, r))
        remaining -= _region_vertices(h, profs[y].levels <= 6 * r)
        remaining.discard(y)
    regions = [profs[y].levels <= r for y, r in chosen]
    cert = carve(h, signs, regions, chosen, kind="remove-folded")
    thr_c = folded_constant(k)
    Ck = boundary_constant(k)
    checks = []
    s1 = all(eps * r**k / thr_c <= profs[y].V(r) <= eps * r**k for y, r in chosen)
    checks.append(Check("(s1) eps r^k/(2 12^k) <= V(r_i) <= eps r^k", s1))
    s2 = max(r for _, r in chosen)
    checks.append(Check("(s2) r_i <= rho/6", s2 <= rho / 6.0, s2, rho / 6.0))
    two = [profs[y].levels <= 2 * r for y, r in chosen]
    overlap = any(np.any(two[i] & two[j]) for i in range(len(two)) for j in range(i))
    checks.append(Check("(s3) M(y_i, 2r_i) pairwise chamber-disjoint", not overlap, float(overlap), 0.0))
    s4 = all(profs[y].boundary_volumes[r] <= Ck * eps ** (1 / k) * profs[y].V(r) ** ((k - 1) / k) + 1e-9
             for y, r in chosen)
    checks.append(Check("(s4) frontier bound with C_k", s4))
    sumV = sum(profs[y].V(r) for y, r in chosen)
    checks.append(Check("(s5) sum V(r_i) >= card F/(2 12^k)", sumV >= len(F) / thr_c, sumV, len(F) / thr_c))
    vols = [p.volume for p in cert.contours]
    ub = 2 * eps * rho**k / 6**k
    checks.append(Check("(1) 0 < Vol(h_i) <= 2 eps rho^k / 6^k",
                        all(0 < v <= ub for v in vols), max(vols), ub))
    sig = 0.0
    for p in cert.contours:
        if p.volume:
            sig = max(sig, diameter(p.map) * eps ** (1 / k) / p.volume ** (1 / k))
    checks.append(Check("(2) sigma measured", math.isfinite(sig), sig, INF))
    checks.append(Check("(3) sum Vol(h_i) >= card F/(2 12^k)", sum(vols) >= len(F) / thr_c,
                        sum(vols), len(F) / thr_c))
    lhs = cert.remainder_volume + 0.5 * sum(vols)
    checks.append(Check("(4) Vol(r) + sum/2 <= Vol(h)", lhs <= vol, lhs, vol))
    cert.checks = checks
    consts.update({"sigma": sig, "C_k": Ck, "radii": chosen,
                   "critical": {y: (c.R_star, c.r_star, c.r, c.strict) for y, c in crit.items()}})
    cert.constants = consts
    cert.flags = [f"non-strict R_* at {y}" for y, c in crit.items() if not c.strict]
    return cert


def folded_unfolded_decomposition(h: Hypersurface, eps: float, delta: float,
                                  signs: np.ndarray | None = None) -> PartitionCertificate:
    """Remove folded parts at scale 6 delta Vol^(1/k) until none remain."""
    k = h.k
    signs = _source_signs(h, signs)
    vol = h.volume
    cur = identity_piece(h, signs)
    steps = []
    contours: list[Piece] = []
    cap = max(1, vol) + 1
    for _ in range(cap):
        rho = 6 * delta * cur.volume ** (1.0 / k)
        if cur.volume == 0 or len(folded_set(cur.map, eps, rho)) == 0:
            break
        step = remove_folded(cur.map, eps, rho, cur.signs)
        steps.append(step)
        contours += step.contours
        if not step.remainder:
            cur = None
            break
        cur = step.remainder[0]
    else:
        raise NonTerminating(f"folded removal exceeded {cap} iterations")
    remainder = [cur] if cur is not None else []
    cert = PartitionCertificate("thickthin", h, signs, contours, remainder, steps=steps)
    rvol = cur.volume if cur is not None else 0
    rho_f = 6 * delta * rvol ** (1.0 / k)
    unfolded = cur is None or rvol == 0 or len(folded_set(cur.map, eps, rho_f)) == 0
    vols = [p.volume for p in contours]
    ub = 2 * delta**k * eps * vol
    sig = 0.0
    for p in contours:
        if p.volume:
            sig = max(sig, diameter(p.map) * eps ** (1 / k) / p.volume ** (1 / k))
    lhs = rvol + 0.5 * sum(vols)
    cert.checks = [
        Check("(1) remainder unfolded at 6 delta Vol(r)^(1/k)", unfolded, 0.0 if unfolded else 1.0, 0.0),
        Check("(2) 0 < Vol(h_i) <= 2 delta^k eps Vol(h)", all(0 < v <= ub for v in vols),
              max(vols, default=0), ub),
        Check("(3) sigma measured", math.isfinite(sig), sig, INF),
        Check("(4) Vol(r) + sum/2 <= Vol(h)", lhs <= vol, lhs, vol),
    ]
    if steps and not steps[0].remainder:
        cert.flags.append("empty remainder")
    cert.constants = {"eps": eps, "delta": delta, "iterations": len(steps), "sigma": sig}
    return cert


# ------------------------------------------------------- unfolded to round

def unfolded_to_round(r: Hypersurface, eps: float, delta: float,
                      signs: np.ndarray | None = None) -> PartitionCertificate:
    """Split an unfolded hypersurface along annuli free of volume.

    W = 24 delta Vol^(1/k); from the lowest non-collapsed vertex the first
    integer s in [W, 17 W/(eps delta^k)] whose annulus between s and s + W
    holds no non-collapsed chamber gives the piece R(v, s + W/2).  Its
    frontier circles carry no volume and are capped by collapsed cones.
    """
    k = r.k
    signs = _source_signs(r, signs)
    vol = r.volume
    if vol == 0:
        cert = PartitionCertificate("thickround", r, signs, [], [identity_piece(r, signs)])
        cert.constants = {"eps": eps, "delta": delta}
        return cert
    W = 24 * delta * vol ** (1.0 / k)
    if W < 6:
        raise DegenerateInput(f"volume too small: W = {W:.2f} < 6")
    rho_in = 6 * delta * vol ** (1.0 / k)
    if len(folded_set(r, eps, rho_in)) != 0:
        raise DegenerateInput("input is folded at scale 6 delta Vol^(1/k)")
    top = 17 * W / (eps * delta**k)
    N = math.ceil(2 / (eps * delta**k))
    cur = identity_piece(r, signs)
    steps = []
    contours: list[Piece] = []
    while cur is not None and cur.volume > 0:
        if len(contours) > N:
            raise NonTerminating(f"more than N = {N} pieces")
        h = cur.map
        v = int(h.vol_vertices.min())
        lev = growth_levels(h, [v])[0]
        nc = h.noncollapsed
        nl = np.sort(lev[nc])
        found = None
        for s in range(int(math.ceil(W)), int(math.floor(top)) + 1):
            lo = np.searchsorted(nl, s, side="right")
            hi = np.searchsorted(nl, s + W, side="right")
            if hi == lo:
                found = s
                break
        if found is None:
            raise NoEmptyAnnulus(f"no volume-free annulus from vertex {v}")
        region = lev <= found + W / 2.0
        step = carve(h, cur.signs, [region], [(v, found + W / 2.0)], kind="thickround-step")
        steps.append(step)
        contours += step.contours
        cur = step.remainder[0] if step.remainder else None
    remainder = [cur] if cur is not None else []
    cert = PartitionCertificate("thickround", r, signs, contours, remainder, steps=steps)
    lower = eps * delta**k / 2 * vol
    vols = [p.volume for p in contours]
    kap = 0.0
    unfolded = True
    for p in contours:
        if p.volume:
            kap = max(kap, diameter(p.map) * eps * delta ** (k - 1) / vol ** (1.0 / k))
            unfolded &= len(folded_set(p.map, eps, rho_in)) == 0
    cert.checks = [
        Check("(1) pieces unfolded at the inherited scale", unfolded),
        Check("(2) kappa measured", math.isfinite(kap), kap, INF),
        Check("(3) eps delta^k/2 Vol <= Vol(r_i) <= Vol", all(lower <= x <= vol for x in vols),
              min(vols, default=0), lower),
        Check("piece count <= N", len(contours) <= N, len(contours), N),
    ]
    cert.constants = {"eps": eps, "delta": delta, "W": W, "N": N, "kappa": kap}
    return cert


# ---------------------------------------------------------------- pipeline

@dataclass
class PipelineResult:
    certificate: PartitionCertificate
    pieces: list[Piece]
    piece_fills: list[FillResult]
    assembled: ChainFill
    volume: int
    oracle_volume: float
    checks: list[Check]

    @property
    def ratio(self) -> float:
        return self.volume / self.oracle_volume if self.oracle_volume else 1.0


def pipeline_fill(h: Hypersurface, eps: float = 0.5, delta: float = 0.25) -> PipelineResult:
    """Round partition, then folded removal and annulus splitting of every
    contour, then exact fills of the terminal pieces summed into one chain."""
    signs = _source_signs(h, None)
    rf = round_partition_full(h, eps, signs)
    steps = [rf]
    terminal: list[Piece] = []
    for c in rf.contours:
        tt = folded_unfolded_decomposition(c.map, eps, delta, c.signs)
        steps.append(_lift(tt, c))
        terminal += tt.contours
        for rem in tt.remainder:
            W = 24 * delta * rem.volume ** 0.5 if rem.volume else 0.0
            if rem.volume and W >= 6:
                tr = unfolded_to_round(rem.map, eps, delta, rem.signs)
                steps.append(_lift(tr, rem))
                terminal += tr.pieces
            else:
                terminal.append(rem)
    terminal += rf.remainder
    cert = PartitionCertificate("pipeline", h, signs, terminal, [], steps=[])
    fills = [oracle_fill(p.map, signs=p.signs) for p in terminal]
    coeffs: dict[int, int] = {}
    for f in fills:
        if not f.finite:
            raise DegenerateInput("a terminal piece has no finite chain filling")
        for t, c in f.domain.coeffs.items():
            coeffs[t] = coeffs.get(t, 0) + c
    assembled = ChainFill(h.ambient, {t: c for t, c in coeffs.items() if c}, h, signs)
    total = int(sum(f.volume for f in fills))
    oracle = oracle_fill(h, signs=signs).volume
    chain_ok = _chain_sum(terminal) == image_chain(h, signs)
    checks = [
        Check("terminal pieces sum to h", chain_ok),
        Check("assembled chain bounds h", assembled.is_valid()),
        Check("assembled volume >= oracle", total >= oracle, total, oracle),
    ]
    for s in steps:
        checks += [Check(f"{s.kind}: {c.name}", c.passed, c.measured, c.bound) for c in s.failed()]
    cert.steps = steps
    cert.checks = checks
    return PipelineResult(cert, terminal, fills, assembled, total, oracle, checks)


def _lift(cert: PartitionCertificate, piece: Piece) -> PartitionCertificate:
    """Tag a sub-certificate with the piece it decomposes."""
    cert.constants = dict(cert.constants, parent_role=piece.role)
    return cert


# ------------------------------------------------------------ persistence

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else str(float(x))
    return x


def certificate_to_json(cert: PartitionCertificate) -> dict:
    """JSON document embedding every piece as .hsf text plus its labels."""

    def piece(p: Piece) -> dict:
        return {"role": p.role, "hsf": write_hsf(p.map),
                "signs": None if p.signs is None else p.signs.tolist(),
                "labels": [list(lab) for lab in p.labels],
                "origin": [list(o) for o in p.origin],
                "centre": _jsonable(p.centre)}

    return {
        "format": "fillab-cert v1",
        "kind": cert.kind,
        "source": write_hsf(cert.source),
        "source_signs": cert.source_signs.tolist(),
        "contours": [piece(p) for p in cert.contours],
        "remainder": [piece(p) for p in cert.remainder],
        "caps": {str(cid): {"walk": c.walk, "complex": write_scx(c.complex),
                            "image": c.image.tolist(),
                            "boundary": {str(u): j for u, j in c.boundary.items()},
                            "volume": c.volume}
                 for cid, c in cert.caps.items()},
        "steps": [certificate_to_json(s) for s in cert.steps],
        "constants": _jsonable(cert.constants),
        "checks": [{"name": c.name, "passed": bool(c.passed),
                    "measured": _jsonable(float(c.measured)), "bound": _jsonable(float(c.bound))}
                   for c in cert.checks],
        "flags": list(cert.flags),
    }


def _num(x) -> float:
    return float(x)


def certificate_from_json(doc: dict, ambient: SimplicialComplex) -> PartitionCertificate:
    if doc.get("format") != "fillab-cert v1":
        raise FormatError("not a fillab certificate")
    src = read_hsf(doc["source"], ambient)

    def piece(d: dict) -> Piece:
        signs = None if d["signs"] is None else np.asarray(d["signs"], dtype=np.int64)
        centre = tuple(d["centre"]) if d["centre"] is not None else None
        return Piece(read_hsf(d["hsf"], ambient), signs, [tuple(x) for x in d["labels"]],
                     [tuple(x) for x in d["origin"]], d["role"], centre)

    caps = {}
    for cid, c in doc["caps"].items():
        caps[int(cid)] = Cap(int(cid), list(c["walk"]), read_scx(c["complex"]),
                             np.asarray(c["image"], dtype=np.int64),
                             {int(u): int(j) for u, j in c["boundary"].items()}, int(c["volume"]))
    cert = PartitionCertificate(doc["kind"], src, np.asarray(doc["source_signs"], dtype=np.int64),
                                [piece(p) for p in doc["contours"]],
                                [piece(p) for p in doc["remainder"]], caps,
                                [certificate_from_json(s, ambient) for s in doc["steps"]],
                                doc.get("constants", {}),
                                [Check(c["name"], c["passed"], _num(c["measured"]), _num(c["bound"]))
                                 for c in doc["checks"]],
                                list(doc.get("flags", [])))
    return cert
