"""Cone fillings from a combing, exact chain fillings on grid models, and
the filling radius and isoperimetric measurements built on them."""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .complex import INF, SimplicialComplex, build_complex
from .errors import (
    DegenerateInput,
    EmptyFamily,
    EscapesMargin,
    RectangleNotStarFillable,
    UnsupportedDimension,
)
from .hypersurface import (
    FillingDomain,
    Hypersurface,
    SimplicialMap,
    _MutableDomain,
    diameter,
    growth_profile,
    growth_profiles,
    image_chain,
    normalize_domain,
)
from .records import ExperimentRecord, fit_exponent

GRID_KINDS = ("grid2", "grid3", "punctured-grid2", "ball-removed-grid3")


# ------------------------------------------------------------------ combing

@dataclass
class Combing:
    """BFS tree towards ``x0`` with lowest-id parent tie-break."""

    complex: SimplicialComplex
    x0: int
    parent: np.ndarray
    depth: np.ndarray
    measured_L: float = 0.0
    measured_C: float = 0.0

    def path(self, y: int) -> list[int]:
        """Vertices q(0) = x0, ..., q(depth(y)) = y."""
        out = [int(y)]
        while self.parent[out[-1]] >= 0:
            out.append(int(self.parent[out[-1]]))
        return out[::-1]

    def at(self, y: int, i: int) -> int:
        """q_y(i), held constant at y beyond depth(y)."""
        d = int(self.depth[y])
        v = int(y)
        for _ in range(max(0, d - i)):
            v = int(self.parent[v])
        return v


def _fellow_travel(comb: Combing, pairs: np.ndarray) -> float:
    """Largest level-wise distance between paths of the given vertex pairs."""
    if len(pairs) == 0:
        return 0.0
    X = comb.complex
    paths = {}
    for v in np.unique(pairs):
        paths[int(v)] = comb.path(int(v))
    worst = 0.0
    need = sorted({v for p in paths.values() for v in p})
    rows = X.metric.rows(need)
    pos = {v: i for i, v in enumerate(need)}
    for y, a in pairs.tolist():
        py, pa = paths[y], paths[a]
        n = max(len(py), len(pa))
        for i in range(n):
            u = py[min(i, len(py) - 1)]
            w = pa[min(i, len(pa) - 1)]
            worst = max(worst, float(rows[pos[u], w]))
    return worst


def build_combing(X: SimplicialComplex, x0: int, sample: int | None = 4000,
                  rng: np.random.Generator | None = None) -> Combing:
    """Geodesic combing of a connected complex towards ``x0``.

    ``measured_L`` is the least L >= 1 with level-wise path distance at most
    L d(y,a) + L over the sampled adjacent pairs (all edges when ``sample``
    is None or exceeds the edge count).  ``measured_C`` is the additive
    quasi-geodesic defect of the sampled paths, which is 0 for a BFS tree.
    """
    depth = X.metric.row(x0)
    if not np.all(np.isfinite(depth)):
        raise DegenerateInput("combing needs a connected complex")
    depth = depth.astype(np.int64)
    parent = np.full(X.n_vertices, -1, dtype=np.int64)
    nbrs = X.neighbors
    for v in range(X.n_vertices):
        if v == x0:
            continue
        nb = nbrs[v]
        parent[v] = int(nb[depth[nb] == depth[v] - 1].min())
    comb = Combing(X, int(x0), parent, depth)
    edges = X.edges
    if sample == 0:
        edges = edges[:0]
    elif sample is not None and len(edges) > sample:
        rng = rng or np.random.default_rng(0)
        edges = edges[rng.choice(len(edges), size=sample, replace=False)]
    worst = _fellow_travel(comb, edges)
    comb.measured_L = max(1.0, worst / 2.0)
    comb.measured_C = 0.0
    return comb


# ------------------------------------------------------------ fill results

@dataclass
class ChainFill:
    """Integer coefficients on ambient chambers bounding h's image cycle."""

    ambient: SimplicialComplex
    coeffs: dict[int, int]
    surface: Hypersurface
    signs: np.ndarray | None = None

    @property
    def volume(self) -> int:
        return int(sum(abs(c) for c in self.coeffs.values()))

    def support(self) -> list[int]:
        return sorted(t for t, c in self.coeffs.items() if c)

    def boundary(self) -> dict[tuple[int, ...], int]:
        out: dict[tuple[int, ...], int] = {}
        chs = self.ambient.chambers
        for t, c in self.coeffs.items():
            if not c:
                continue
            ch = chs[t]
            for j in range(len(ch)):
                f = ch[:j] + ch[j + 1 :]
                out[f] = out.get(f, 0) + c * (-1) ** j
        return {f: c for f, c in out.items() if c}

    def is_valid(self) -> bool:
        return self.boundary() == image_chain(self.surface, self.signs)


@dataclass
class FillResult:
    domain: FillingDomain | ChainFill | None
    volume: float
    radius: float
    method: str
    cone_constant: float | None = None
    certificate: bool = False
    runtime_ms: float = 0.0
    note: str = ""

    @property
    def finite(self) -> bool:
        return math.isfinite(self.volume)


def infinite_fill(method: str, note: str = "") -> FillResult:
    return FillResult(None, INF, INF, method, note=note)


# -------------------------------------------------------------- cone fill

def _common_neighbors(X: SimplicialComplex, verts: Iterable[int]) -> list[int]:
    verts = sorted(set(int(v) for v in verts))
    nb = X.neighbors
    common = None
    for v in verts:
        s = set(nb[v].tolist()) | {v}
        common = s if common is None else common & s
    return sorted(common or ())


def _find_centre(X: SimplicialComplex, corner_images: Sequence[int],
                 faces: Sequence[Sequence[int]]) -> int | None:
    """An ambient vertex p with {p} + face a simplex for every face."""
    seen = []
    for v in corner_images:
        if v not in seen:
            seen.append(int(v))
    for p in seen + [c for c in _common_neighbors(X, seen) if c not in seen]:
        if all(X.has_simplex([p, *f]) for f in faces):
            return p
    return None


def default_apex(h: SimplicialMap) -> int:
    """Image vertex at the lower corner of the image bounding box when there
    is one, else the image vertex with lexicographically smallest coordinates."""
    X = h.ambient
    verts = h.image_vertices
    if X.coords is None:
        return int(verts.min())
    c = X.coords[verts]
    hit = np.flatnonzero(np.all(c == c.min(axis=0), axis=1))
    if len(hit):
        return int(verts[hit[0]])
    order = np.lexsort(c.T[::-1])
    return int(verts[order[0]])


def cone_fill(h: Hypersurface, comb: Combing | None = None, apex: int | None = None,
              margin=None, measure: bool = True) -> FillResult:
    """Fill h by joining every vertex to the apex along combing paths.

    The domain is the product of h's domain with a path of length H (the
    largest apex distance), coned off at the apex end.  Each ladder cell is
    filled inside the star of one ambient vertex.  When ``apex`` differs
    from the combing basepoint the combing is rebuilt at the apex.
    """
    t0 = time.perf_counter()
    X = h.ambient
    k = h.k
    if k not in (1, 2):
        raise UnsupportedDimension("cone_fill supports k = 1 and k = 2")
    if apex is None:
        apex = comb.x0 if comb is not None else default_apex(h)
    if comb is None or comb.x0 != apex:
        comb = build_combing(X, apex, sample=2000 if measure else 0)
    M = h.domain
    n = M.n_vertices
    img = h.image
    H = int(comb.depth[img].max()) if n else 0
    q = np.empty((n, H + 1), dtype=np.int64)
    for v in range(n):
        p = comb.path(int(img[v]))
        for i in range(H + 1):
            q[v, i] = p[min(i, len(p) - 1)]
    if margin is not None:
        bad = [int(x) for x in np.unique(q) if not margin.inside(int(x))]
        if bad:
            raise EscapesMargin(f"combing paths enter the margin band at {bad[:5]}")

    images: list[int] = []

    def new_vertex(x: int) -> int:
        images.append(int(x))
        return len(images) - 1

    grid = np.empty((n, H + 1), dtype=np.int64)
    for i in range(H + 1):
        for v in range(n):
            grid[v, i] = new_vertex(q[v, i])
    A = new_vertex(apex)
    chambers: list[tuple[int, ...]] = []

    if k == 1:
        for a, b in M.chambers:
            chambers.append((A, grid[a, 0], grid[b, 0]))
            for i in range(H):
                loop = [grid[a, i], grid[b, i], grid[b, i + 1], grid[a, i + 1]]
                li = [images[x] for x in loop]
                sides = [(li[j], li[(j + 1) % 4]) for j in range(4)]
                for s in sides:
                    if not X.has_simplex(s):
                        raise RectangleNotStarFillable(f"rung {s} is not an edge")
                p = _find_centre(X, li, sides)
                if p is None:
                    raise RectangleNotStarFillable(f"cell with images {li} has no star centre")
                Z = new_vertex(p)
                for j in range(4):
                    chambers.append((Z, loop[j], loop[(j + 1) % 4]))
    else:
        edge_centre: dict[tuple[int, int, int], int] = {}

        def quad(a: int, b: int, i: int) -> list[tuple[int, int, int]]:
            a, b = min(a, b), max(a, b)
            loop = [grid[a, i], grid[b, i], grid[b, i + 1], grid[a, i + 1]]
            key = (a, b, i)
            if key not in edge_centre:
                li = [images[x] for x in loop]
                sides = [(li[j], li[(j + 1) % 4]) for j in range(4)]
                for s in sides:
                    if not X.has_simplex(s):
                        raise RectangleNotStarFillable(f"rung {s} is not an edge")
                p = _find_centre(X, li, sides)
                if p is None:
                    raise RectangleNotStarFillable(f"cell with images {li} has no star centre")
                edge_centre[key] = new_vertex(p)
            Z = edge_centre[key]
            return [(Z, loop[j], loop[(j + 1) % 4]) for j in range(4)]

        for a, b, c in M.chambers:
            for i in range(H + 1):
                tri = [images[grid[v, i]] for v in (a, b, c)]
                if not X.has_simplex(tri):
                    raise RectangleNotStarFillable(f"level triangle {tri} is not a simplex")
            chambers.append((A, grid[a, 0], grid[b, 0], grid[c, 0]))
            for i in range(H):
                bottom = (grid[a, i], grid[b, i], grid[c, i])
                top = (grid[a, i + 1], grid[b, i + 1], grid[c, i + 1])
                shell = [bottom, top] + quad(a, b, i) + quad(b, c, i) + quad(a, c, i)
                corners = [images[x] for x in bottom + top]
                corners += [images[x] for x in
                            (shell[2][0], shell[6][0], shell[10][0])]
                faces = [[images[x] for x in f] for f in shell]
                p = _find_centre(X, corners, faces)
                if p is None:
                    raise RectangleNotStarFillable(f"prism with images {corners} has no star centre")
                P = new_vertex(p)
                for f in shell:
                    chambers.append((P, *f))

    D = build_complex(chambers, n_vertices=len(images))
    boundary = {int(grid[v, H]): v for v in range(n)}
    d = FillingDomain(D, np.asarray(images), X, surface=h, boundary=boundary)
    vol = d.volume
    diam = diameter(h)
    cc = vol / ((h.volume + 1) * (diam + 1)) if math.isfinite(diam) else INF
    res = FillResult(d, vol, 0.0, "cone", cone_constant=cc)
    res.radius = filling_radius(res, h)
    res.runtime_ms = (time.perf_counter() - t0) * 1e3
    return res


def box_corner_vertex(X: SimplicialComplex, verts) -> int | None:
    """Ambient vertex at the lower corner of the bounding box of ``verts``."""
    if X.coords is None or getattr(X.model, "index", None) is None:
        return None
    c = X.coords[np.asarray(sorted(set(int(v) for v in verts)))]
    return X.model.index.get(tuple(int(x) for x in c.min(axis=0)))


# ---------------------------------------------------------- chain oracle

def _require_grid(h: SimplicialMap) -> None:
    X = h.ambient
    spec = getattr(X.model, "spec", None)
    if spec is None or spec.kind not in GRID_KINDS or X.coords is None:
        raise UnsupportedDimension("the chain oracle needs a grid model ambient")
    if X.dim != h.k + 1:
        raise UnsupportedDimension("the chain oracle fills codimension-one cycles")


def chain_window(X: SimplicialComplex, verts: Iterable[int], pad: int = 1) -> np.ndarray:
    """Chambers with every vertex in the padded bounding box of ``verts``."""
    verts = np.asarray(sorted(set(int(v) for v in verts)))
    c = X.coords[verts]
    lo = c.min(axis=0) - pad
    hi = c.max(axis=0) + pad
    cc = X.coords[X.chamber_array]
    inside = np.all((cc >= lo) & (cc <= hi), axis=(1, 2))
    return np.flatnonzero(inside)


@dataclass
class _Window:
    """Local facet structure of a chamber subset."""

    chambers: np.ndarray  # ambient chamber ids
    nbr: np.ndarray  # (W, k+2) local neighbour index, -1 outside window
    facet_val: np.ndarray  # (W, k+2) target boundary coefficient of each facet
    order: list[int]  # gallery BFS order, free-facet chambers first


def _make_window(X: SimplicialComplex, chambers: np.ndarray,
                 z: dict[tuple[int, ...], int]) -> _Window | None:
    W = len(chambers)
    local = -np.ones(X.n_chambers, dtype=np.int64)
    local[chambers] = np.arange(W)
    across = X.across[chambers]
    nbr = np.where(across >= 0, local[np.maximum(across, 0)], -1)
    facet_val = np.zeros(across.shape, dtype=np.int64)
    seen = set()
    for i, t in enumerate(chambers.tolist()):
        ch = X.chambers[t]
        for j in range(len(ch)):
            f = ch[:j] + ch[j + 1 :]
            if f in z:
                facet_val[i, j] = z[f]
                seen.add(f)
    if len(seen) != len(z):
        return None  # some image face lies outside the window
    order: list[int] = []
    mark = np.zeros(W, dtype=bool)
    free = np.flatnonzero((nbr < 0).any(axis=1))
    for s in list(free) + list(range(W)):
        if mark[s]:
            continue
        mark[s] = True
        dq = deque([int(s)])
        while dq:
            u = dq.popleft()
            order.append(u)
            for w in nbr[u]:
                if w >= 0 and not mark[w]:
                    mark[w] = True
                    dq.append(int(w))
    return _Window(chambers, nbr, facet_val, order)


def _facet_residual(win: _Window, vals: np.ndarray, i: int, j: int) -> int:
    """Boundary coefficient mismatch on facet j of local chamber i."""
    got = vals[i] * (-1) ** j
    u = win.nbr[i, j]
    if u >= 0:
        # facet seen from u: find its index there
        jj = int(np.flatnonzero(win.nbr[u] == i)[0])
        got += vals[u] * (-1) ** jj
    return int(got - win.facet_val[i, j])


def _propagate(win: _Window) -> np.ndarray | None:
    """The unique chain on the window with prescribed boundary, or None."""
    W = len(win.chambers)
    vals = np.zeros(W, dtype=np.int64)
    known = np.zeros(W, dtype=bool)
    dq: deque[int] = deque()
    for i in range(W):
        js = np.flatnonzero(win.nbr[i] < 0)
        if len(js) and not known[i]:
            j = int(js[0])
            vals[i] = (-1) ** j * win.facet_val[i, j]
            known[i] = True
            dq.append(i)
        while dq:
            u = dq.popleft()
            for j in range(win.nbr.shape[1]):
                w = int(win.nbr[u, j])
                if w < 0 or known[w]:
                    continue
                jj = int(np.flatnonzero(win.nbr[w] == u)[0])
                vals[w] = (-1) ** jj * (win.facet_val[u, j] - (-1) ** j * vals[u])
                known[w] = True
                dq.append(w)
    if not known.all():
        return None
    for i in range(W):
        for j in range(win.nbr.shape[1]):
            if _facet_residual(win, vals, i, j):
                return None
    return vals


def _search(win: _Window, bound: int, forbidden: np.ndarray | None, prune_cost: bool) -> tuple[float, np.ndarray | None, int]:
    """Depth-first search for the cheapest chain with |coefficient| <= bound.

    Chambers are assigned in window gallery order; a facet is checked as
    soon as every chamber on it is assigned.  With ``prune_cost`` partial
    assignments already as expensive as the best found are abandoned.
    Returns (cost, values, nodes visited).
    """
    W = len(win.chambers)
    order = win.order
    pos = np.empty(W, dtype=np.int64)
    pos[order] = np.arange(W)
    kk = win.nbr.shape[1]
    # facets closed when chamber order[s] is assigned
    closing: list[list[tuple[int, int]]] = [[] for _ in range(W)]
    for i in range(W):
        for j in range(kk):
            u = win.nbr[i, j]
            if u < 0:
                closing[pos[i]].append((i, j))
            elif pos[u] < pos[i]:
                closing[pos[i]].append((i, j))
    back = {}
    for i in range(W):
        for j in range(kk):
            u = win.nbr[i, j]
            if u >= 0:
                back[(i, j)] = int(np.flatnonzero(win.nbr[u] == i)[0])
    vals = np.zeros(W, dtype=np.int64)
    best_cost = INF
    best = None
    nodes = 0
    allowed_vals = list(range(-bound, bound + 1))
    allowed_vals.sort(key=abs)

    def ok(s: int) -> bool:
        for i, j in closing[s]:
            got = vals[i] * (-1) ** j
            u = win.nbr[i, j]
            if u >= 0:
                got += vals[u] * (-1) ** back[(i, j)]
            if got != win.facet_val[i, j]:
                return False
        return True

    stack = [(0, 0, 0)]  # (position, value index, cost so far)
    # iterative DFS
    s = 0
    idx = [0] * (W + 1)
    cost = [0] * (W + 1)
    while s >= 0:
        if s == W:
            if cost[W] < best_cost:
                best_cost = cost[W]
                best = vals.copy()
            s -= 1
            continue
        i = order[s]
        if idx[s] >= len(allowed_vals):
            idx[s] = 0
            vals[i] = 0
            s -= 1
            continue
        v = allowed_vals[idx[s]]
        idx[s] += 1
        if v and forbidden is not None and forbidden[i]:
            continue
        vals[i] = v
        nodes += 1
        c = cost[s] + abs(v)
        if prune_cost and c >= best_cost:
            continue
        if not ok(s):
            continue
        cost[s + 1] = c
        s += 1
    del stack
    return best_cost, best, nodes


def _search_propagating(win: _Window, bound: int, forbidden: np.ndarray | None) -> tuple[float, np.ndarray | None, int]:
    """Branch and bound with forced-value propagation.

    A facet with a single unassigned chamber forces that chamber's value;
    branching happens only when nothing is forced, on the unassigned
    chamber earliest in gallery order.
    """
    W = len(win.chambers)
    kk = win.nbr.shape[1]
    back = {}
    for i in range(W):
        for j in range(kk):
            u = win.nbr[i, j]
            if u >= 0:
                back[(i, j)] = int(np.flatnonzero(win.nbr[u] == i)[0])
    best = [INF, None]
    nodes = [0]

    def consistent_and_forced(vals, known):
        queue = deque(i for i in range(W) if known[i])
        # facets with one side outside the window
        for i in range(W):
            if known[i]:
                continue
            for j in range(kk):
                if win.nbr[i, j] < 0:
                    v = (-1) ** j * win.facet_val[i, j]
                    if abs(v) > bound or (v and forbidden is not None and forbidden[i]):
                        return False
                    vals[i] = v
                    known[i] = True
                    queue.append(i)
                    break
        while queue:
            i = queue.popleft()
            for j in range(kk):
                u = win.nbr[i, j]
                if u < 0:
                    if vals[i] * (-1) ** j != win.facet_val[i, j]:
                        return False
                    continue
                want = win.facet_val[i, j] - vals[i] * (-1) ** j
                v = want * (-1) ** back[(i, j)]
                if known[u]:
                    if vals[u] != v:
                        return False
                    continue
                if abs(v) > bound or (v and forbidden is not None and forbidden[u]):
                    return False
                vals[u] = v
                known[u] = True
                queue.append(u)
        return True

    def rec(vals, known):
        nodes[0] += 1
        if not consistent_and_forced(vals, known):
            return
        cost = int(np.abs(vals[known]).sum())
        if cost >= best[0]:
            return
        if known.all():
            best[0], best[1] = cost, vals.copy()
            return
        i = next(x for x in win.order if not known[x])
        for v in sorted(range(-bound, bound + 1), key=abs):
            if v and forbidden is not None and forbidden[i]:
                continue
            nv, nk = vals.copy(), known.copy()
            nv[i] = v
            nk[i] = True
            rec(nv, nk)

    rec(np.zeros(W, dtype=np.int64), np.zeros(W, dtype=bool))
    return best[0], best[1], nodes[0]


def _window_for(h: SimplicialMap, pad: int, signs=None) -> tuple[_Window | None, np.ndarray, dict]:
    X = h.ambient
    z = image_chain(h, signs)
    verts = h.image_vertices
    chambers = chain_window(X, verts, pad)
    return _make_window(X, chambers, z), chambers, z


def oracle_fill(h: Hypersurface, pad: int = 1, signs: np.ndarray | None = None) -> FillResult:
    """Exact minimal chain filling of h's image cycle on a grid model.

    A codimension-one chain in a subcomplex of Euclidean space has no
    nonzero cycles, so a chain with the prescribed boundary is unique when
    it exists and it vanishes outside the convex hull of the image.  It is
    found by propagating from the free facets of a padded bounding box and
    then checked facet by facet.  Windows with at most ``certify_limit``
    ``signs`` fixes the orientation of h's domain (default: ``orient``).
    """
    t0 = time.perf_counter()
    _require_grid(h)
    if h.volume == 0 or not image_chain(h, signs):
        res = FillResult(ChainFill(h.ambient, {}, h, signs), 0, 0.0, "oracle", certificate=True)
        res.radius = filling_radius(res, h)
        return res
    win, chambers, z = _window_for(h, pad, signs)
    vals = _propagate(win) if win is not None else None
    if vals is None:
        res = infinite_fill("oracle", "image cycle is not null-homologous in the patch")
        res.runtime_ms = (time.perf_counter() - t0) * 1e3
        return res
    coeffs = {int(t): int(c) for t, c in zip(chambers.tolist(), vals.tolist()) if c}
    chain = ChainFill(h.ambient, coeffs, h, signs)
    cert = unique_solution_certificate(win)
    res = FillResult(chain, chain.volume, 0.0, "oracle", certificate=cert)
    res.radius = filling_radius(res, h)
    res.runtime_ms = (time.perf_counter() - t0) * 1e3
    return res


def unique_solution_certificate(win: _Window) -> bool:
    """Every gallery component of the window reaches a free facet.

    Then the chain with the given boundary is unique, hence minimal.
    """
    W = len(win.chambers)
    reach = np.zeros(W, dtype=bool)
    dq = deque(int(i) for i in np.flatnonzero((win.nbr < 0).any(axis=1)))
    reach[list(dq)] = True
    while dq:
        u = dq.popleft()
        for w in win.nbr[u]:
            if w >= 0 and not reach[w]:
                reach[w] = True
                dq.append(int(w))
    return bool(reach.all())


def filling_volume(h: Hypersurface) -> float:
    return oracle_fill(h).volume


def certification_window(h: Hypersurface, limit: int = 200, pads=(1, 0)) -> tuple[int, int] | None:
    """Largest pad whose window has at most ``limit`` chambers: (pad, size)."""
    X = h.ambient
    for pad in pads:
        n = len(chain_window(X, h.image_vertices, pad))
        if n <= limit:
            return pad, n
    return None


def exhaustive_fill(h: Hypersurface, pad: int = 1, bound: int = 2,
                    forbidden_chambers: Iterable[int] = ()) -> tuple[float, dict[int, int], int]:
    """Minimal chain by exhaustive enumeration over |coefficient| <= bound.

    Independent of the propagation oracle: only facet consistency prunes.
    Returns (volume, coefficients, nodes visited); volume is inf when no
    bounded chain exists.
    """
    _require_grid(h)
    win, chambers, z = _window_for(h, pad)
    if win is None:
        return INF, {}, 0
    forb = _forbidden_mask(chambers, forbidden_chambers)
    cost, vals, nodes = _search(win, bound, forb, prune_cost=False)
    if vals is None:
        return INF, {}, nodes
    return cost, {int(t): int(c) for t, c in zip(chambers.tolist(), vals.tolist()) if c}, nodes


def branch_and_bound_fill(h: Hypersurface, pad: int = 1, bound: int = 2,
                          forbidden_chambers: Iterable[int] = ()) -> tuple[float, dict[int, int], int]:
    """Minimal chain with forced-value propagation and cost pruning."""
    _require_grid(h)
    win, chambers, z = _window_for(h, pad)
    if win is None:
        return INF, {}, 0
    forb = _forbidden_mask(chambers, forbidden_chambers)
    cost, vals, nodes = _search_propagating(win, bound, forb)
    if vals is None:
        return INF, {}, nodes
    return cost, {int(t): int(c) for t, c in zip(chambers.tolist(), vals.tolist()) if c}, nodes


def _forbidden_mask(chambers: np.ndarray, forbidden: Iterable[int]) -> np.ndarray | None:
    forbidden = set(int(t) for t in forbidden)
    if not forbidden:
        return None
    return np.asarray([int(t) in forbidden for t in chambers.tolist()])


def chain_to_domain(chain: ChainFill) -> FillingDomain:
    """Realize a 0/+-1 chain as a filling domain mapped by inclusion."""
    if any(abs(c) > 1 for c in chain.coeffs.values()):
        raise DegenerateInput("only chains with coefficients in {-1, 0, 1} are realized")
    X = chain.ambient
    sup = chain.support()
    verts = sorted({v for t in sup for v in X.chambers[t]})
    relabel = {v: i for i, v in enumerate(verts)}
    D = build_complex([[relabel[v] for v in X.chambers[t]] for t in sup], n_vertices=len(verts))
    h = chain.surface
    inv: dict[int, int] = {}
    for v, x in enumerate(h.image.tolist()):
        inv.setdefault(int(x), v)
    boundary = {relabel[x]: inv[x] for x in verts if x in inv}
    return FillingDomain(D, np.asarray(verts), X, surface=h, boundary=boundary)


# ----------------------------------------------------------- fill radius

def filling_radius(fill: FillResult, h: SimplicialMap) -> float:
    """Least R with the image of the filling's 1-skeleton inside the closed
    R-neighbourhood of the image of h's 1-skeleton.

    Distances are measured in the ambient 1-skeleton as a metric graph: an
    image vertex at distance d contributes d, and an image edge (x, y) not
    already in h's image contributes (d(x) + d(y) + 1) / 2, its farthest
    interior point.
    """
    if fill.domain is None or not math.isfinite(fill.volume):
        return INF
    X = h.ambient
    if isinstance(fill.domain, ChainFill):
        sup = fill.domain.support()
        if not sup:
            return 0.0
        arr = X.chamber_array[sup]
    else:
        arr = fill.domain.chamber_images
    return image_radius(arr, h)


def _edge_pairs(arr: np.ndarray) -> set[tuple[int, int]]:
    out = set()
    for row in arr.tolist():
        for a in range(len(row)):
            for b in range(a + 1, len(row)):
                x, y = row[a], row[b]
                if x != y:
                    out.add((min(x, y), max(x, y)))
    return out


def image_radius(chamber_images: np.ndarray, h: SimplicialMap) -> float:
    """Least R with the simplices spanned by ``chamber_images`` (rows of
    ambient vertices) inside the closed R-neighbourhood of h's 1-skeleton
    image, measured in the ambient metric graph."""
    arr = np.asarray(chamber_images)
    if arr.size == 0:
        return 0.0
    dist = h.ambient.metric.to_set(h.image_vertices.tolist())
    R = float(dist[np.unique(arr)].max())
    hedges = _edge_pairs(h.chamber_images)
    for x, y in _edge_pairs(arr):
        if (x, y) not in hedges:
            R = max(R, (float(dist[x]) + float(dist[y]) + 1.0) / 2.0)
    return R


# ------------------------------------------------------- radius growth

def radius_growth_profile(fill: FillingDomain, v: int, rmax: int | None = None):
    """Triples (i, Vol(d(v, i)), Vol of its internal frontier) for i = 0..rmax.

    ``rmax`` defaults to the ambient distance from d(v) to the boundary image.
    """
    if rmax is None:
        if fill.surface is not None:
            dist = fill.ambient.metric.to_set(fill.surface.image_vertices.tolist())
            rmax = int(dist[fill.image[v]])
        else:
            rmax = int(diameter(fill))
    prof = growth_profile(fill, v, max(rmax, 0))
    return [(i, int(prof.volumes[i]), int(prof.boundary_volumes[i])) for i in range(rmax + 1)]


def growth_inequality_failures(fill: FillingDomain) -> list[int]:
    """Vertices of a filling domain whose radius growth profile breaks
    (k+1)(Vol(i+1) - Vol(i)) >= Vol(frontier(i)) for some i below the
    distance from the vertex image to the boundary image; k is the
    dimension of the filled hypersurface."""
    k = fill.k - 1
    dist = fill.ambient.metric.to_set(fill.surface.image_vertices.tolist())
    lim = dist[fill.image].astype(np.int64)
    n = fill.domain.n_vertices
    if n == 0:
        return []
    profs = growth_profiles(fill, range(n), int(lim.max()) + 1)
    bad = []
    for v, p in enumerate(profs):
        a = p.volumes[: lim[v] + 1]
        b = p.boundary_volumes[: lim[v]]
        if np.any((k + 1) * np.diff(a) < b):
            bad.append(v)
    return bad


def growth_inequality_holds(profile, k: int) -> bool:
    """Vol(i+1) >= Vol(i) + Vol(frontier(i)) / (k+1) at every listed step,
    checked in integers as (k+1)(Vol(i+1) - Vol(i)) >= Vol(frontier(i))."""
    for (i, a, b), (_, a2, _) in zip(profile, profile[1:]):
        if (k + 1) * (a2 - a) < b:
            return False
    return True


# ------------------------------------------------------------ iso profile

def iso_profile(X: SimplicialComplex, family, method: str = "oracle",
                experiment: str = "iso-profile"):
    """Largest fill volume per size over a family, and the fitted exponent.

    ``family`` yields (label, hypersurface or list of hypersurfaces); the
    size of a group is the largest Vol(h)^(1/k) in it.  A group that
    escapes the margin is recorded as a gap.
    """
    records: list[ExperimentRecord] = []
    gaps: list = []
    groups = list(family)
    if not groups:
        raise EmptyFamily("family produced no hypersurfaces")
    for label, hs in groups:
        t0 = time.perf_counter()
        try:
            if callable(hs):
                hs = hs()
            if isinstance(hs, SimplicialMap):
                hs = [hs]
            best = 0.0
            x = 0.0
            k = hs[0].k
            for h in hs:
                res = fill_by_method(h, method)
                best = max(best, res.volume)
                x = max(x, h.volume ** (1.0 / k))
        except EscapesMargin:
            gaps.append(label)
            continue
        records.append(ExperimentRecord(experiment, k, x, best, method, sample_id=len(records),
                                        runtime_ms=(time.perf_counter() - t0) * 1e3,
                                        extra={"label": label}))
    pts = [(r.r, r.value) for r in records if r.finite and r.value > 0]
    fit = fit_exponent(pts) if len(pts) >= 3 else None
    return records, fit, gaps


def fill_by_method(h: Hypersurface, method: str, **kw) -> FillResult:
    if method == "oracle":
        return oracle_fill(h, **kw)
    if method == "cone":
        return cone_fill(h, **kw)
    if method == "heuristic":
        return heuristic_fill(h, **kw)
    raise ValueError(f"unknown fill method {method!r}")


# -------------------------------------------------------------- heuristic

def heuristic_fill(h: Hypersurface, apex: int | None = None, max_passes: int = 4) -> FillResult:
    """Cone fill, normalized, then greedy interior edge contractions.

    A contraction merges an interior vertex into a neighbour (taking the
    neighbour's image) when the link condition holds, every surviving
    chamber still maps to a simplex, and the volume does not grow.  The
    result is an upper bound for the filling volume, never a certified
    value.
    """
    t0 = time.perf_counter()
    base = cone_fill(h, apex=apex)
    d = normalize_domain(base.domain)
    X = h.ambient
    bnd = d.domain.boundary_vertices()
    md = _MutableDomain(d.domain.chambers, d.image)

    def local_volume(ts):
        out = 0
        for t in ts:
            im = {md.image[v] for v in md.ch[t]}
            out += len(im) == len(md.ch[t])
        return out

    for _ in range(max_passes):
        changed = False
        for u, w in sorted(md.edges()):
            if u not in md.star or w not in md.star or not (md.star[u] & md.star[w]):
                continue
            if w in bnd:
                u, w = w, u
            if w in bnd:
                continue
            before = local_volume(md.star[w] | md.star[u])
            new_chs = []
            ok = True
            for t in md.star[w]:
                c = md.ch[t]
                if u in c:
                    continue
                nc = tuple(u if x == w else x for x in c)
                if not X.has_simplex([md.image[x] for x in nc]):
                    ok = False
                    break
                new_chs.append(nc)
            if not ok or not md.link_condition(u, w):
                continue
            after = sum(len({md.image[x] for x in c}) == len(c) for c in new_chs)
            after += local_volume(md.star[u] - md.star[w])
            if after > before:
                continue
            md.contract(u, w)
            changed = True
        if not changed:
            break
    chs, img, relabel = md.export()
    D = build_complex(chs, n_vertices=len(img))
    boundary = {relabel[v]: x for v, x in d.boundary.items() if v in relabel}
    out = FillingDomain(D, img, X, surface=h, boundary=boundary)
    res = FillResult(out, out.volume, 0.0, "heuristic", cone_constant=base.cone_constant)
    res.radius = filling_radius(res, h)
    res.runtime_ms = (time.perf_counter() - t0) * 1e3
    return res
