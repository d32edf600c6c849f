"""Pure simplicial complexes, chamber galleries and the 1-skeleton metric."""

from __future__ import annotations

import math
import threading
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import DanglingVertex, FormatError, NonPureComplex, SeedNotAllowed

INF = math.inf

# Per-source distance rows are memoized; a full table is only materialized
# on request and only below this many vertices.
ALL_PAIRS_CAP = 20_000


@dataclass(frozen=True, eq=False)
class SimplicialComplex:
    """Finite pure complex stored by its maximal simplices (chambers).

    Lower faces, chamber adjacency and the skeleton metric are derived
    lazily and cached on the instance.  Instances are never mutated after
    construction, so they can be shared between threads.
    """

    dim: int
    n_vertices: int
    chambers: tuple[tuple[int, ...], ...]
    coords: np.ndarray | None = field(default=None, repr=False)
    model: object = field(default=None, repr=False)

    @property
    def n_chambers(self) -> int:
        return len(self.chambers)

    @cached_property
    def chamber_array(self) -> np.ndarray:
        return np.asarray(self.chambers, dtype=np.int64).reshape(-1, self.dim + 1)

    @cached_property
    def facet_pairs(self) -> tuple[dict[tuple[int, ...], list[int]], np.ndarray]:
        """Codimension-1 faces mapped to incident chambers, plus the
        (C, dim+1) table whose entry [t, j] is the chamber across the facet
        of t opposite its j-th vertex (-1 when the facet is free)."""
        facets: dict[tuple[int, ...], list[int]] = {}
        for t, ch in enumerate(self.chambers):
            for j in range(len(ch)):
                f = ch[:j] + ch[j + 1 :]
                facets.setdefault(f, []).append(t)
        across = np.full((self.n_chambers, self.dim + 1), -1, dtype=np.int64)
        for f, ts in facets.items():
            if len(ts) == 2:
                a, b = ts
                across[a, _omitted(self.chambers[a], f)] = b
                across[b, _omitted(self.chambers[b], f)] = a
        return facets, across

    @property
    def facet_index(self) -> dict[tuple[int, ...], list[int]]:
        return self.facet_pairs[0]

    @property
    def across(self) -> np.ndarray:
        return self.facet_pairs[1]

    @cached_property
    def adjacency(self) -> list[list[int]]:
        """Chambers sharing a codimension-1 face with each chamber."""
        facets = self.facet_index
        adj: list[list[int]] = [[] for _ in range(self.n_chambers)]
        for ts in facets.values():
            for a, b in combinations(ts, 2):
                adj[a].append(b)
                adj[b].append(a)
        return [sorted(set(a)) for a in adj]

    @cached_property
    def face_index(self) -> dict[tuple[int, ...], list[int]]:
        """Every face (including vertices) mapped to its incident chambers."""
        idx: dict[tuple[int, ...], list[int]] = {}
        for t, ch in enumerate(self.chambers):
            for size in range(1, len(ch) + 1):
                for f in combinations(ch, size):
                    idx.setdefault(f, []).append(t)
        return idx

    def faces(self, d: int) -> list[tuple[int, ...]]:
        out = set()
        for ch in self.chambers:
            out.update(combinations(ch, d + 1))
        return sorted(out)

    @cached_property
    def edges(self) -> np.ndarray:
        arr = self.chamber_array
        pairs = [arr[:, [i, j]] for i, j in combinations(range(self.dim + 1), 2)]
        if not pairs:
            return np.zeros((0, 2), dtype=np.int64)
        e = np.unique(np.concatenate(pairs), axis=0)
        return e

    @cached_property
    def graph(self) -> csr_matrix:
        e = self.edges
        n = self.n_vertices
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        data = np.ones(len(rows), dtype=np.float64)
        return csr_matrix((data, (rows, cols)), shape=(n, n))

    @cached_property
    def neighbors(self) -> list[np.ndarray]:
        g = self.graph
        return [g.indices[g.indptr[i] : g.indptr[i + 1]] for i in range(self.n_vertices)]

    @cached_property
    def vertex_star(self) -> list[list[int]]:
        star: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for t, ch in enumerate(self.chambers):
            for v in ch:
                star[v].append(t)
        return star

    @cached_property
    def metric(self) -> SkeletonMetric:
        return SkeletonMetric(self)

    def has_simplex(self, verts: Iterable[int]) -> bool:
        """True when the vertex set (duplicates ignored) spans a face."""
        s = tuple(sorted(set(verts)))
        if len(s) == 0:
            return False
        if len(s) == 1:
            return 0 <= s[0] < self.n_vertices
        if len(s) == 2:
            u, v = s
            nb = self.neighbors[u]
            i = np.searchsorted(nb, v)
            return bool(i < len(nb) and nb[i] == v)
        if len(s) == self.dim:
            return s in self.facet_index
        if len(s) == self.dim + 1:
            return s in self._chamber_lookup
        if len(s) > self.dim + 1:
            return False
        return s in self.face_index

    @cached_property
    def _chamber_lookup(self) -> dict[tuple[int, ...], int]:
        return {ch: t for t, ch in enumerate(self.chambers)}

    def chamber_id(self, verts: Sequence[int]) -> int:
        return self._chamber_lookup[tuple(sorted(verts))]

    def free_facets(self) -> list[tuple[int, ...]]:
        return [f for f, ts in self.facet_index.items() if len(ts) == 1]

    def boundary_vertices(self) -> set[int]:
        out: set[int] = set()
        for f in self.free_facets():
            out.update(f)
        return out


def _omitted(chamber: tuple[int, ...], facet: tuple[int, ...]) -> int:
    for j, v in enumerate(chamber):
        if v not in facet:
            return j
    raise ValueError("facet is not a face of chamber")


def build_complex(
    simplices: Iterable[Sequence[int]],
    n_vertices: int | None = None,
    coords: np.ndarray | None = None,
    model: object = None,
) -> SimplicialComplex:
    """Build a pure complex from its maximal simplices.

    Vertex ids must be exactly ``0..V-1``; every id has to appear in some
    simplex.  Mixed simplex sizes are rejected.
    """
    chambers = [tuple(sorted(int(v) for v in s)) for s in simplices]
    if not chambers:
        raise NonPureComplex("no simplices given")
    sizes = {len(c) for c in chambers}
    if len(sizes) != 1:
        raise NonPureComplex(f"maximal simplices of sizes {sorted(sizes)}")
    for c in chambers:
        if len(set(c)) != len(c):
            raise ValueError(f"repeated vertex in simplex {c}")
    if len(set(chambers)) != len(chambers):
        raise ValueError("duplicate simplices")
    used = sorted({v for c in chambers for v in c})
    if used[0] < 0:
        raise ValueError("negative vertex id")
    nv = used[-1] + 1 if n_vertices is None else int(n_vertices)
    if used[-1] >= nv:
        raise ValueError(f"vertex id {used[-1]} outside 0..{nv - 1}")
    if len(used) != nv:
        missing = sorted(set(range(nv)) - set(used))
        raise DanglingVertex(f"vertices not in any simplex: {missing[:10]}")
    return SimplicialComplex(
        dim=len(chambers[0]) - 1,
        n_vertices=nv,
        chambers=tuple(chambers),
        coords=coords,
        model=model,
    )


class SkeletonMetric:
    """Shortest-path distances on the 1-skeleton with unit edges.

    Rows are computed per source with scipy's unweighted BFS and memoized.
    The memo is guarded by a lock so one instance can serve several threads.
    """

    def __init__(self, X: SimplicialComplex, cap: int = ALL_PAIRS_CAP):
        self.X = X
        self.cap = cap
        self._rows: dict[int, np.ndarray] = {}
        self._lock = threading.Lock()
        self._table: np.ndarray | None = None

    def rows(self, sources: Sequence[int]) -> np.ndarray:
        """Distance rows (float, inf when unreachable) for many sources."""
        src = [int(s) for s in sources]
        if self._table is not None:
            return self._table[src]
        missing = sorted({s for s in src if s not in self._rows})
        if missing:
            d = shortest_path(self.X.graph, method="D", unweighted=True, indices=missing)
            d = np.atleast_2d(d).astype(np.float32)
            with self._lock:
                for s, row in zip(missing, d):
                    self._rows[s] = row
        if not src:
            return np.zeros((0, self.X.n_vertices), dtype=np.float32)
        return np.stack([self._rows[s] for s in src])

    def row(self, u: int) -> np.ndarray:
        return self.rows([u])[0]

    def dist(self, u: int, v: int) -> float:
        d = float(self.row(u)[v])
        return INF if math.isinf(d) else int(d)

    def all_pairs(self) -> np.ndarray:
        if self.X.n_vertices > self.cap:
            raise MemoryError(f"{self.X.n_vertices} vertices exceed the all-pairs cap {self.cap}")
        if self._table is None:
            self._table = self.rows(range(self.X.n_vertices))
        return self._table

    def save(self, path) -> None:
        """Write the memoized rows to an .npz file."""
        with self._lock:
            keys = sorted(self._rows)
            rows = np.stack([self._rows[k] for k in keys]) if keys else np.zeros((0, self.X.n_vertices))
        np.savez_compressed(path, sources=np.asarray(keys, dtype=np.int64), rows=rows.astype(np.float32))

    def load(self, path) -> int:
        """Merge rows saved by ``save``; returns how many were loaded."""
        data = np.load(path)
        rows = data["rows"]
        if rows.size and rows.shape[1] != self.X.n_vertices:
            raise FormatError("cached distance rows belong to a different complex")
        with self._lock:
            for s, row in zip(data["sources"].tolist(), rows):
                self._rows[int(s)] = row
        return len(rows)

    def to_set(self, sources: Iterable[int]) -> np.ndarray:
        """Distance from every vertex to the nearest vertex of a set."""
        src = sorted(set(int(s) for s in sources))
        if not src:
            return np.full(self.X.n_vertices, np.inf, dtype=np.float32)
        n = self.X.n_vertices
        dist = np.full(n, np.inf, dtype=np.float32)
        dist[src] = 0
        frontier = np.asarray(src)
        g = self.X.graph
        level = 0
        seen = np.zeros(n, dtype=bool)
        seen[src] = True
        while len(frontier):
            level += 1
            nxt = np.unique(g[frontier].indices)
            nxt = nxt[~seen[nxt]]
            seen[nxt] = True
            dist[nxt] = level
            frontier = nxt
        return dist


def skeleton_distance(X: SimplicialComplex, u: int, v: int) -> float:
    """BFS distance between two vertices; ``INF`` if disconnected."""
    for w in (u, v):
        if not 0 <= w < X.n_vertices:
            raise IndexError(f"vertex {w} out of range")
    if u == v:
        return 0
    return X.metric.dist(u, v)


class ChamberSet:
    """A set of chamber ids of one complex, stored as a boolean mask."""

    __slots__ = ("mask",)

    def __init__(self, n_chambers: int, members: Iterable[int] = ()):
        self.mask = np.zeros(n_chambers, dtype=bool)
        idx = list(members)
        if idx:
            self.mask[np.asarray(idx, dtype=np.int64)] = True

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> ChamberSet:
        out = cls.__new__(cls)
        out.mask = np.asarray(mask, dtype=bool).copy()
        return out

    @classmethod
    def full(cls, n_chambers: int) -> ChamberSet:
        return cls.from_mask(np.ones(n_chambers, dtype=bool))

    def __contains__(self, t: int) -> bool:
        return 0 <= t < len(self.mask) and bool(self.mask[t])

    def __iter__(self) -> Iterator[int]:
        return iter(np.flatnonzero(self.mask).tolist())

    def __len__(self) -> int:
        return int(self.mask.sum())

    def __eq__(self, other: object) -> bool:
        if isinstance(other, ChamberSet):
            return bool(np.array_equal(self.mask, other.mask))
        if isinstance(other, (set, frozenset)):
            return set(self) == other
        return NotImplemented

    def __le__(self, other: ChamberSet) -> bool:
        return bool(np.all(~self.mask | other.mask))

    def __or__(self, other: ChamberSet) -> ChamberSet:
        return ChamberSet.from_mask(self.mask | other.mask)

    def __and__(self, other: ChamberSet) -> ChamberSet:
        return ChamberSet.from_mask(self.mask & other.mask)

    def __repr__(self) -> str:
        return f"ChamberSet({sorted(self)})"


def gallery_component(X: SimplicialComplex, seed: int, allowed: ChamberSet | Iterable[int]) -> ChamberSet:
    """Allowed chambers reachable from ``seed`` through shared facets."""
    if not isinstance(allowed, ChamberSet):
        allowed = ChamberSet(X.n_chambers, allowed)
    if seed not in allowed:
        raise SeedNotAllowed(f"chamber {seed} is not in the allowed set")
    ok = allowed.mask
    seen = np.zeros(X.n_chambers, dtype=bool)
    seen[seed] = True
    queue = deque([seed])
    adj = X.adjacency
    while queue:
        t = queue.popleft()
        for u in adj[t]:
            if ok[u] and not seen[u]:
                seen[u] = True
                queue.append(u)
    return ChamberSet.from_mask(seen)


def metric_ball(X: SimplicialComplex, center: int, r: float) -> set[int]:
    """Closed ball in the 1-skeleton metric; empty when ``r < 0``."""
    if r < 0:
        return set()
    row = X.metric.row(center)
    return set(np.flatnonzero(row <= r).tolist())


def read_scx(text: str) -> SimplicialComplex:
    dim = nv = None
    simplices = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0]
        try:
            if key == "dim":
                dim = int(parts[1])
            elif key == "vertices":
                nv = int(parts[1])
            elif key == "s":
                simplices.append(tuple(int(p) for p in parts[1:]))
            else:
                raise FormatError(f"line {lineno}: unknown record {key!r}")
        except (IndexError, ValueError) as exc:
            raise FormatError(f"line {lineno}: {raw!r}") from exc
    if dim is None or nv is None:
        raise FormatError("missing dim or vertices header")
    X = build_complex(simplices, n_vertices=nv)
    if X.dim != dim:
        raise FormatError(f"header says dim {dim}, simplices have dim {X.dim}")
    return X


def write_scx(X: SimplicialComplex) -> str:
    lines = [f"dim {X.dim}", f"vertices {X.n_vertices}"]
    lines += ["s " + " ".join(map(str, ch)) for ch in X.chambers]
    return "\n".join(lines) + "\n"
