"""Simplicial maps, hypersurfaces and filling domains.

Volumes count non-collapsed chambers.  Local restrictions ``C(v, r)`` are
computed for all radii at once: every chamber gets the smallest radius at
which it joins the gallery closure grown from the star of ``v`` (a
bottleneck path problem on the chamber adjacency graph).
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .complex import ChamberSet, SimplicialComplex, build_complex, read_scx, write_scx
from .errors import EscapesMargin, FormatError, UnsupportedDimension

# Folded-set threshold denominator for dimension k.
def folded_constant(k: int) -> float:
    return 2.0 * 12.0**k


@dataclass(eq=False)
class SimplicialMap:
    """Vertex map from a domain complex into an ambient complex."""

    domain: SimplicialComplex
    image: np.ndarray
    ambient: SimplicialComplex

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.int64)
        if self.image.shape != (self.domain.n_vertices,):
            raise ValueError("image must give one ambient vertex per domain vertex")

    @property
    def k(self) -> int:
        return self.domain.dim

    @cached_property
    def chamber_images(self) -> np.ndarray:
        return self.image[self.domain.chamber_array]

    @cached_property
    def noncollapsed(self) -> np.ndarray:
        """Boolean mask of chambers whose image has dim+1 distinct vertices."""
        ci = np.sort(self.chamber_images, axis=1)
        if ci.shape[1] < 2:
            return np.ones(len(ci), dtype=bool)
        return np.all(ci[:, 1:] != ci[:, :-1], axis=1)

    @property
    def volume(self) -> int:
        return int(self.noncollapsed.sum())

    @cached_property
    def vol_vertices(self) -> np.ndarray:
        """Sorted domain vertices lying on some non-collapsed chamber."""
        arr = self.domain.chamber_array[self.noncollapsed]
        return np.unique(arr)

    def check_simplicial(self) -> bool:
        X = self.ambient
        return all(X.has_simplex(row) for row in self.chamber_images.tolist())

    @cached_property
    def image_vertices(self) -> np.ndarray:
        return np.unique(self.image)

    def restricted(self, chambers: Iterable[int]) -> SimplicialMap:
        """Map restricted to a chamber subset (vertices relabelled)."""
        sub = [self.domain.chambers[t] for t in chambers]
        verts = sorted({v for ch in sub for v in ch})
        relabel = {v: i for i, v in enumerate(verts)}
        D = build_complex([[relabel[v] for v in ch] for ch in sub], n_vertices=len(verts))
        return SimplicialMap(D, self.image[verts], self.ambient)


@dataclass(eq=False)
class Hypersurface(SimplicialMap):
    """Map from a closed k-manifold complex (sphere or closed surface).

    Disjoint unions are allowed: the domain may have several components.
    """

    kind: str = "sphere"
    genus: int = 0

    def __post_init__(self):
        super().__post_init__()
        if self.kind not in ("sphere", "surface"):
            raise ValueError(f"unknown model kind {self.kind!r}")

    def is_closed_manifold(self) -> bool:
        counts = [len(ts) for ts in self.domain.facet_index.values()]
        return all(c == 2 for c in counts)


@dataclass(eq=False)
class FillingDomain(SimplicialMap):
    """Map from a (k+1)-manifold with boundary filling a hypersurface.

    ``boundary`` sends each boundary vertex of the domain to the vertex of
    ``surface`` it is identified with.
    """

    surface: Hypersurface | None = None
    boundary: dict[int, int] = field(default_factory=dict)

    def boundary_matches(self) -> bool:
        """Restriction to the boundary equals the filled hypersurface."""
        h = self.surface
        if h is None:
            return False
        free = self.domain.free_facets()
        mapped = set()
        for f in free:
            try:
                g = tuple(sorted(self.boundary[v] for v in f))
            except KeyError:
                return False
            mapped.add(g)
            for v in f:
                if self.image[v] != h.image[self.boundary[v]]:
                    return False
        return mapped == set(h.domain.chambers) and len(free) == h.domain.n_chambers


# ---------------------------------------------------------------- metrics

def volume(f: SimplicialMap) -> int:
    return f.volume


def image_distance_rows(f: SimplicialMap, vertices: Sequence[int]) -> np.ndarray:
    """dist(f(v), f(u)) for v in ``vertices`` (rows) and every domain u."""
    rows = f.ambient.metric.rows([int(f.image[v]) for v in vertices])
    return rows[:, f.image]


def diameter(h: SimplicialMap) -> float:
    """Largest ambient distance between two image vertices."""
    iv = h.image_vertices
    if len(iv) <= 1:
        return 0
    rows = h.ambient.metric.rows(iv.tolist())[:, iv]
    d = float(rows.max())
    return math.inf if math.isinf(d) else int(d)


def is_round(h: Hypersurface, eta: float) -> bool:
    k = h.k
    if k < 1:
        raise ValueError("roundness needs k >= 1")
    vol = h.volume
    diam = diameter(h)
    if vol == 0:
        return diam == 0
    return diam <= eta * vol ** (1.0 / k)


# ------------------------------------------------------- local restriction

def growth_levels(f: SimplicialMap, vertices: Sequence[int]) -> np.ndarray:
    """Entry radius of every chamber in the restriction grown at each vertex.

    Row i, column t is the least integer r with chamber t in C(v_i, r), or
    inf if no such r exists.  C(v, r) is the gallery closure, inside the
    chambers whose vertices all map into the closed r-ball about f(v), of
    the chambers containing v.
    """
    vertices = [int(v) for v in vertices]
    D = f.domain
    if not vertices:
        return np.zeros((0, D.n_chambers))
    dist = image_distance_rows(f, vertices).astype(np.float64)
    arr = D.chamber_array
    m = dist[:, arr].max(axis=2)  # (n, C)
    n, C = m.shape
    level = np.full((n, C + 1), np.inf)
    star = D.vertex_star
    for i, v in enumerate(vertices):
        ts = star[v]
        level[i, ts] = m[i, ts]
    across = D.across.copy()
    across[across < 0] = C
    while True:
        nb = level[:, across].min(axis=2)  # (n, C)
        new = np.minimum(level[:, :C], np.maximum(m, nb))
        if np.array_equal(new, level[:, :C]):
            break
        level[:, :C] = new
    return level[:, :C]


def _facet_pairs_array(D: SimplicialComplex) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    facets = D.facet_index
    pairs, keys = [], []
    for fct, ts in facets.items():
        if len(ts) == 2:
            pairs.append(ts)
            keys.append(fct)
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2), keys


@dataclass
class GrowthProfile:
    """Volumes of C(v, r) and of its internal frontier for r = 0..rmax."""

    vertex: int
    volumes: np.ndarray
    boundary_volumes: np.ndarray
    levels: np.ndarray

    def V(self, r: float) -> int:
        r = int(math.floor(r))
        if r < 0:
            return 0
        return int(self.volumes[min(r, len(self.volumes) - 1)])


def growth_profiles(f: SimplicialMap, vertices: Sequence[int], rmax: int) -> list[GrowthProfile]:
    """Volume growth functions r -> Vol(f(v, r)) for several vertices."""
    vertices = list(vertices)
    out: list[GrowthProfile] = []
    if not vertices:
        return out
    D = f.domain
    nc = f.noncollapsed
    pairs, keys = _facet_pairs_array(D)
    if len(keys):
        fimg = np.sort(f.image[np.asarray(keys)], axis=1)
        facet_live = np.all(fimg[:, 1:] != fimg[:, :-1], axis=1) if fimg.shape[1] > 1 else np.ones(len(keys), bool)
    else:
        facet_live = np.zeros(0, dtype=bool)
    chunk = max(1, 4_000_000 // max(1, D.n_chambers * (D.dim + 1)))
    for start in range(0, len(vertices), chunk):
        part = vertices[start : start + chunk]
        lev = growth_levels(f, part)
        vols = _cumulative_counts(lev[:, nc], rmax)
        if len(pairs):
            la = lev[:, pairs[:, 0]]
            lb = lev[:, pairs[:, 1]]
            lo = np.minimum(la, lb)[:, facet_live]
            hi = np.maximum(la, lb)[:, facet_live]
            bvol = _cumulative_counts(lo, rmax) - _cumulative_counts(hi, rmax)
        else:
            bvol = np.zeros((len(part), rmax + 1), dtype=np.int64)
        for i, v in enumerate(part):
            out.append(GrowthProfile(v, vols[i], bvol[i], lev[i]))
    return out


def _cumulative_counts(values: np.ndarray, rmax: int) -> np.ndarray:
    """Row-wise counts of entries <= r for r = 0..rmax."""
    n = values.shape[0]
    clipped = np.where(np.isfinite(values), np.minimum(values, rmax + 1), rmax + 1).astype(np.int64)
    counts = np.zeros((n, rmax + 2), dtype=np.int64)
    rows = np.repeat(np.arange(n), values.shape[1])
    np.add.at(counts, (rows, clipped.ravel()), 1)
    return np.cumsum(counts, axis=1)[:, : rmax + 1]


def growth_profile(f: SimplicialMap, v: int, rmax: int) -> GrowthProfile:
    return growth_profiles(f, [v], rmax)[0]


@dataclass
class Restriction:
    """C(v, r) together with its internal frontier."""

    source: SimplicialMap
    vertex: int
    radius: float
    chambers: ChamberSet
    boundary: list[tuple[int, ...]]

    @property
    def volume(self) -> int:
        return int((self.chambers.mask & self.source.noncollapsed).sum())

    @property
    def boundary_volume(self) -> int:
        img = self.source.image
        return sum(1 for f in self.boundary if len(set(img[list(f)].tolist())) == len(f))


def frontier(D: SimplicialComplex, mask: np.ndarray) -> list[tuple[int, ...]]:
    """Facets lying in exactly one chamber of ``mask`` and two of ``D``."""
    out = []
    for fct, ts in D.facet_index.items():
        if len(ts) == 2 and mask[ts[0]] != mask[ts[1]]:
            out.append(fct)
    return sorted(out)


def restrict(c: SimplicialMap, v: int, r: float) -> Restriction:
    if r < 0:
        mask = np.zeros(c.domain.n_chambers, dtype=bool)
    else:
        lev = growth_levels(c, [v])[0]
        mask = lev <= r
    return Restriction(c, v, r, ChamberSet.from_mask(mask), frontier(c.domain, mask))


# ------------------------------------------------------------------ cut

@dataclass
class CutResult:
    """Manifold complex obtained by separating pinched vertices.

    ``gluing[i]`` is the vertex of the original domain that new vertex i is
    glued back to; ``chambers[j]`` is the original chamber id of new chamber
    j.  The restricted map is ``source.image[gluing]``.
    """

    complex: SimplicialComplex
    gluing: np.ndarray
    chambers: list[int]
    image: np.ndarray

    def as_map(self, ambient: SimplicialComplex) -> SimplicialMap:
        return SimplicialMap(self.complex, self.image, ambient)


def cut_chambers(domain: SimplicialComplex, chamber_ids: Sequence[int], image: np.ndarray) -> CutResult:
    """Split vertices whose link inside the chamber subset is disconnected."""
    k = domain.dim
    if k > 2:
        raise UnsupportedDimension(f"cut is implemented for k <= 2, got {k}")
    chamber_ids = list(chamber_ids)
    chs = [domain.chambers[t] for t in chamber_ids]
    # facet multiplicity inside the subset
    fmult: dict[tuple[int, ...], int] = defaultdict(int)
    for ch in chs:
        for j in range(len(ch)):
            fmult[ch[:j] + ch[j + 1 :]] += 1
    by_vertex: dict[int, list[int]] = defaultdict(list)
    for i, ch in enumerate(chs):
        for v in ch:
            by_vertex[v].append(i)
    copy_of: dict[tuple[int, int], int] = {}
    gluing: list[int] = []
    for v in sorted(by_vertex):
        members = by_vertex[v]
        parent = {i: i for i in members}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        if k == 2:
            by_edge: dict[tuple[int, ...], list[int]] = defaultdict(list)
            for i in members:
                for w in chs[i]:
                    if w != v:
                        by_edge[tuple(sorted((v, w)))].append(i)
            for e, ts in by_edge.items():
                if len(ts) == 2 and fmult[e] == 2:
                    ra, rb = find(ts[0]), find(ts[1])
                    if ra != rb:
                        parent[ra] = rb
        elif k == 1:
            if len(members) <= 2:
                for i in members[1:]:
                    parent[find(i)] = find(members[0])
        groups = sorted({find(i) for i in members})
        for g in groups:
            copy_of[(v, g)] = len(gluing)
            gluing.append(v)
        for i in members:
            copy_of[(v, i)] = copy_of[(v, find(i))]
    new_chs = [[copy_of[(v, i)] for v in ch] for i, ch in enumerate(chs)]
    glu = np.asarray(gluing, dtype=np.int64)
    C = build_complex(new_chs, n_vertices=len(gluing))
    # build_complex sorts each chamber; chamber order is preserved
    return CutResult(C, glu, chamber_ids, np.asarray(image)[glu])


def cut(sub: Restriction) -> CutResult:
    src = sub.source
    return cut_chambers(src.domain, list(sub.chambers), src.image)


# ------------------------------------------------------------ folded set

@dataclass
class FoldedSet:
    vertices: frozenset[int]
    eps: float
    rho: float
    witness: dict[int, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.vertices)

    def __iter__(self):
        return iter(sorted(self.vertices))

    def __contains__(self, v) -> bool:
        return v in self.vertices


def folded_set(h: SimplicialMap, eps: float, rho: float) -> FoldedSet:
    """Vertices of non-collapsed chambers with slow local volume growth.

    v is folded when some integer r in [1, floor(rho)] has
    Vol(h(v, r)) <= eps r^k / (2 * 12^k).
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    k = h.k
    rmax = int(math.floor(rho))
    verts = h.vol_vertices.tolist()
    if rmax < 1 or not verts:
        return FoldedSet(frozenset(), eps, rho)
    radii = np.arange(rmax + 1, dtype=np.float64)
    thresh = eps * radii**k / folded_constant(k)
    members: dict[int, int] = {}
    for prof in growth_profiles(h, verts, rmax):
        hit = np.flatnonzero(prof.volumes[1:] <= thresh[1:])
        if len(hit):
            members[prof.vertex] = int(hit[0]) + 1
    return FoldedSet(frozenset(members), eps, rho, members)


# ------------------------------------------------------------ orientation

def orient(D: SimplicialComplex) -> np.ndarray | None:
    """Coherent +-1 signs for the chambers of a pseudomanifold, or None."""
    C = D.n_chambers
    sign = np.zeros(C, dtype=np.int64)
    across = D.across
    chs = D.chambers
    for seed in range(C):
        if sign[seed]:
            continue
        sign[seed] = 1
        stack = [seed]
        while stack:
            t = stack.pop()
            for j in range(D.dim + 1):
                u = int(across[t, j])
                if u < 0:
                    continue
                fct = chs[t][:j] + chs[t][j + 1 :]
                ju = next(i for i, w in enumerate(chs[u]) if w not in fct)
                want = -sign[t] * (-1) ** j * (-1) ** ju
                if sign[u] == 0:
                    sign[u] = want
                    stack.append(u)
                elif sign[u] != want:
                    return None
    return sign


def permutation_parity(seq: Sequence[int]) -> int:
    seq = list(seq)
    parity = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                parity = -parity
    return parity


def image_chain(f: SimplicialMap, signs: np.ndarray | None = None) -> dict[tuple[int, ...], int]:
    """Push-forward of the (oriented) fundamental chain to the ambient."""
    if signs is None:
        signs = orient(f.domain)
        if signs is None:
            raise ValueError("domain is not orientable")
    out: dict[tuple[int, ...], int] = defaultdict(int)
    ci = f.chamber_images
    for t in np.flatnonzero(f.noncollapsed):
        img = ci[t].tolist()
        key = tuple(sorted(img))
        out[key] += int(signs[t]) * permutation_parity(img)
    return {key: val for key, val in out.items() if val}


def euler_characteristic(D: SimplicialComplex) -> int:
    return sum((-1) ** d * len(D.faces(d)) for d in range(D.dim + 1))


def link_is_sphere_like(D: SimplicialComplex) -> bool:
    """Every vertex link of a closed surface is a single cycle."""
    if D.dim != 2:
        return True
    for v in range(D.n_vertices):
        edges = []
        for t in D.vertex_star[v]:
            a, b = [w for w in D.chambers[t] if w != v]
            edges.append((a, b))
        adj: dict[int, list[int]] = defaultdict(list)
        for a, b in edges:
            adj[a].append(b)
            adj[b].append(a)
        if any(len(n) != 2 for n in adj.values()):
            return False
        start = next(iter(adj))
        seen = {start}
        stack = [start]
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        if len(seen) != len(adj):
            return False
    return True


# ---------------------------------------------------------- normalization

class _MutableDomain:
    """Chamber soup supporting edge contractions with the link condition."""

    def __init__(self, chambers: Iterable[Sequence[int]], image: np.ndarray):
        self.ch: dict[int, tuple[int, ...]] = {}
        self.star: dict[int, set[int]] = defaultdict(set)
        self.image = {i: int(x) for i, x in enumerate(image)}
        self._next = 0
        for c in chambers:
            self.add(tuple(sorted(c)))

    def add(self, c: tuple[int, ...]) -> int:
        t = self._next
        self._next += 1
        self.ch[t] = c
        for v in c:
            self.star[v].add(t)
        return t

    def remove(self, t: int) -> None:
        for v in self.ch.pop(t):
            self.star[v].discard(t)

    def link(self, v: int) -> set[tuple[int, ...]]:
        out = set()
        for t in self.star[v]:
            rest = tuple(w for w in self.ch[t] if w != v)
            for size in range(1, len(rest) + 1):
                out.update(combinations(rest, size))
        return out

    def edge_link(self, u: int, v: int) -> set[tuple[int, ...]]:
        out = set()
        for t in self.star[u] & self.star[v]:
            rest = tuple(w for w in self.ch[t] if w != u and w != v)
            for size in range(1, len(rest) + 1):
                out.update(combinations(rest, size))
        return out

    def link_condition(self, u: int, v: int) -> bool:
        return (self.link(u) & self.link(v)) == self.edge_link(u, v)

    def contract(self, keep: int, drop: int) -> None:
        """Merge vertex ``drop`` into ``keep``."""
        for t in list(self.star[drop]):
            c = self.ch[t]
            self.remove(t)
            if keep in c:
                continue
            self.add(tuple(sorted(keep if w == drop else w for w in c)))
        self.star.pop(drop, None)

    def edges(self) -> set[tuple[int, int]]:
        out = set()
        for c in self.ch.values():
            out.update(combinations(c, 2))
        return out

    def export(self):
        verts = sorted({v for c in self.ch.values() for v in c})
        relabel = {v: i for i, v in enumerate(verts)}
        chs = [[relabel[v] for v in c] for c in self.ch.values()]
        img = np.asarray([self.image[v] for v in verts], dtype=np.int64)
        return chs, img, relabel


def _boundary_vertex_set(D: SimplicialComplex) -> set[int]:
    return D.boundary_vertices()


def normalize_domain(d: FillingDomain) -> FillingDomain:
    """Contract interior edges whose endpoints share an image vertex.

    An edge is contracted only when both endpoints are interior and the
    link condition holds, so the domain stays a manifold with the same
    boundary.  Volume and image are unchanged and the chamber count drops
    with every contraction.
    """
    bnd = _boundary_vertex_set(d.domain)
    md = _MutableDomain(d.domain.chambers, d.image)
    changed = True
    while changed:
        changed = False
        for u, v in sorted(md.edges()):
            if u not in md.star or v not in md.star:
                continue
            if not (md.star[u] & md.star[v]):
                continue
            if u in bnd or v in bnd or md.image[u] != md.image[v]:
                continue
            if md.link_condition(u, v):
                md.contract(u, v)
                changed = True
    chs, img, relabel = md.export()
    D = build_complex(chs, n_vertices=len(img))
    boundary = {relabel[v]: w for v, w in d.boundary.items() if v in relabel}
    return FillingDomain(D, img, d.ambient, surface=d.surface, boundary=boundary)


def normal_dichotomy(d: FillingDomain) -> bool:
    """Every chamber is non-collapsed or touches the boundary."""
    bnd = _boundary_vertex_set(d.domain)
    nc = d.noncollapsed
    for t, ch in enumerate(d.domain.chambers):
        if not nc[t] and not any(v in bnd for v in ch):
            return False
    return True


# ------------------------------------------------------------ margins

def check_margin(X: SimplicialComplex, vertices: Iterable[int], margin) -> None:
    """Raise EscapesMargin if a vertex lies inside the reserved band."""
    if margin is None:
        return
    bad = [v for v in vertices if not margin.inside(v)]
    if bad:
        raise EscapesMargin(f"{len(bad)} vertices inside the margin band (e.g. {bad[:5]})")


# ------------------------------------------------------------------- I/O

def write_hsf(h: Hypersurface) -> str:
    if h.kind == "sphere":
        head = f"model sphere k {h.k}"
    else:
        head = f"model surface {h.genus} k {h.k}"
    lines = [head, write_scx(h.domain).rstrip("\n")]
    lines += [f"m {v} {int(a)}" for v, a in enumerate(h.image)]
    return "\n".join(lines) + "\n"


def read_hsf(text: str, ambient: SimplicialComplex) -> Hypersurface:
    kind, genus, k = None, 0, None
    scx_lines, maps = [], {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "model":
            kind = parts[1]
            rest = parts[2:]
            if rest and rest[0] != "k":
                genus = int(rest[0])
                rest = rest[1:]
            if len(rest) != 2 or rest[0] != "k":
                raise FormatError(f"line {lineno}: bad model header")
            k = int(rest[1])
        elif parts[0] == "m":
            maps[int(parts[1])] = int(parts[2])
        else:
            scx_lines.append(line)
    if kind is None:
        raise FormatError("missing model header")
    D = read_scx("\n".join(scx_lines))
    if D.dim != k:
        raise FormatError(f"header k={k} but domain has dim {D.dim}")
    if sorted(maps) != list(range(D.n_vertices)):
        raise FormatError("vertex map must cover every domain vertex exactly once")
    image = np.asarray([maps[v] for v in range(D.n_vertices)], dtype=np.int64)
    if image.max() >= ambient.n_vertices or image.min() < 0:
        raise FormatError("vertex map points outside the ambient complex")
    h = Hypersurface(D, image, ambient, kind=kind, genus=genus)
    if not h.check_simplicial():
        raise FormatError("vertex map is not simplicial")
    return h
