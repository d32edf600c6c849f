"""Euclidean model patches and test hypersurfaces with known fillings."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import nnls

from .complex import SimplicialComplex, build_complex, read_scx, write_scx
from .errors import DegenerateInput, EscapesMargin, FormatError, RemovalOutOfBounds
from .hypersurface import Hypersurface, euler_characteristic, link_is_sphere_like, orient

KINDS = ("grid2", "grid3", "sphere2-subdiv", "punctured-grid2", "ball-removed-grid3")


@dataclass(frozen=True)
class ModelSpec:
    """Description of a model patch.

    ``size`` is the side length in cells (for ``sphere2-subdiv`` it is the
    number of subdivision rounds).  ``shape`` optionally overrides the side
    length per axis for box-shaped patches.  ``removal`` is a center and a
    radius in patch coordinates.
    """

    kind: str
    size: int
    margin: int | None = None
    removal: tuple[tuple[float, ...], float] | None = None
    shape: tuple[int, ...] | None = None

    @property
    def dim(self) -> int:
        return 3 if self.kind in ("grid3", "ball-removed-grid3") else 2

    @property
    def sides(self) -> tuple[int, ...]:
        if self.shape is not None:
            return tuple(int(s) for s in self.shape)
        return (self.size,) * self.dim

    @property
    def margin_width(self) -> int:
        if self.margin is not None:
            return int(self.margin)
        return max(self.sides) // 4


@dataclass(frozen=True)
class PatchInfo:
    spec: ModelSpec
    index: dict = field(repr=False)

    def vertex(self, *coord: int) -> int:
        return self.index[tuple(int(c) for c in coord)]


@dataclass
class MarginMap:
    """Per-vertex distance to the outer boundary of the patch."""

    dist: np.ndarray
    width: int

    def inside(self, v: int) -> bool:
        return bool(self.dist[v] >= self.width)

    def is_lipschitz(self, X: SimplicialComplex) -> bool:
        e = X.edges
        d = self.dist
        finite = np.isfinite(d[e[:, 0]]) & np.isfinite(d[e[:, 1]])
        return bool(np.all(np.abs(d[e[finite, 0]] - d[e[finite, 1]]) <= 1))


def freudenthal_cells(sides: Sequence[int]):
    """Yield the simplices (as coordinate tuples) of the Kuhn triangulation."""
    n = len(sides)
    perms = list(itertools.permutations(range(n)))
    for corner in itertools.product(*[range(s) for s in sides]):
        for p in perms:
            cur = list(corner)
            simplex = [tuple(cur)]
            for axis in p:
                cur[axis] += 1
                simplex.append(tuple(cur))
            yield corner, simplex


def _point_simplex_distance(pts: np.ndarray, c: np.ndarray) -> float:
    # min over convex combinations; the sum-to-one row is heavily weighted
    w = 1e4
    A = np.vstack([pts.T, w * np.ones(len(pts))])
    b = np.concatenate([c, [w]])
    lam, _ = nnls(A, b)
    lam = lam / lam.sum()
    return float(np.linalg.norm(lam @ pts - c))


def vertex_at(X: SimplicialComplex, *coord: int) -> int:
    return X.model.vertex(*coord)


def generate(spec: ModelSpec) -> tuple[SimplicialComplex, MarginMap]:
    """Build a model patch and its margin map."""
    if spec.kind not in KINDS:
        raise ValueError(f"unknown model kind {spec.kind!r}")
    if spec.kind == "sphere2-subdiv":
        return _subdivided_octahedron(spec)
    sides = spec.sides
    if min(sides) < 2:
        raise ValueError("patch size must be at least 2")
    m = spec.margin_width
    if m < 0:
        raise ValueError("margin must be nonnegative")
    cells = []
    for _, simplex in freudenthal_cells(sides):
        cells.append(simplex)
    if spec.kind in ("punctured-grid2", "ball-removed-grid3"):
        if spec.removal is None:
            raise ValueError(f"{spec.kind} needs a removal ball")
        center, radius = spec.removal
        center = np.asarray(center, dtype=float)[: len(sides)]
        if len(center) != len(sides) or radius <= 0:
            raise RemovalOutOfBounds("removal center has the wrong dimension or radius")
        for axis, s in enumerate(sides):
            if not (m < center[axis] - radius and center[axis] + radius < s - m):
                raise RemovalOutOfBounds(
                    f"removal ball {tuple(center)} r={radius} leaves the patch minus margin"
                )
        kept = []
        for simplex in cells:
            pts = np.asarray(simplex, dtype=float)
            if np.min(np.linalg.norm(pts - center, axis=1)) - 1.8 > radius:
                kept.append(simplex)
            elif _point_simplex_distance(pts, center) > radius:
                kept.append(simplex)
        cells = kept
    coords = sorted({p for s in cells for p in s})
    index = {p: i for i, p in enumerate(coords)}
    chambers = [[index[p] for p in s] for s in cells]
    carr = np.asarray(coords, dtype=np.int64)
    X = build_complex(chambers, n_vertices=len(coords), coords=carr, model=PatchInfo(spec, index))
    on_outer = np.zeros(len(coords), dtype=bool)
    for axis, s in enumerate(sides):
        on_outer |= (carr[:, axis] == 0) | (carr[:, axis] == s)
    dist = X.metric.to_set(np.flatnonzero(on_outer).tolist())
    return X, MarginMap(dist.astype(np.float64), m)


def _subdivided_octahedron(spec: ModelSpec) -> tuple[SimplicialComplex, MarginMap]:
    d = int(spec.size)
    if d < 0:
        raise ValueError("subdivision depth must be nonnegative")
    pts = [np.array(p, dtype=float) for p in
           [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]]
    tris = []
    for sx, sy, sz in itertools.product((0, 1), repeat=3):
        tris.append((sx, 2 + sy, 4 + sz))
    for _ in range(d):
        mid: dict[tuple[int, int], int] = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in mid:
                p = pts[a] + pts[b]
                pts.append(p / np.linalg.norm(p))
                mid[key] = len(pts) - 1
            return mid[key]

        new = []
        for a, b, c in tris:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        tris = new
    X = build_complex(tris, n_vertices=len(pts), coords=np.asarray(pts), model=None)
    return X, MarginMap(np.full(X.n_vertices, np.inf), 0)


# ------------------------------------------------------------ test loops

def _require_margin(vertices, margin: MarginMap | None) -> None:
    if margin is None:
        return
    bad = [v for v in vertices if not margin.inside(v)]
    if bad:
        raise EscapesMargin(f"{len(bad)} vertices fall inside the margin band")


def cycle_complex(n: int) -> SimplicialComplex:
    return build_complex([(i, (i + 1) % n) for i in range(n)], n_vertices=n)


def loop_hypersurface(X: SimplicialComplex, path: Sequence[int]) -> Hypersurface:
    """Closed walk through consecutive adjacent (or equal) ambient vertices."""
    n = len(path)
    if n < 3:
        raise DegenerateInput("a simplicial circle needs at least 3 vertices")
    h = Hypersurface(cycle_complex(n), np.asarray(path), X, kind="sphere")
    if not h.check_simplicial():
        raise ValueError("consecutive loop vertices must be adjacent or equal")
    return h


def rectangle_path(X: SimplicialComplex, corner: int, w: int, hgt: int) -> list[int]:
    x0, y0 = X.coords[corner][:2]
    pts = [(x0 + i, y0) for i in range(w)]
    pts += [(x0 + w, y0 + j) for j in range(hgt)]
    pts += [(x0 + w - i, y0 + hgt) for i in range(w)]
    pts += [(x0, y0 + hgt - j) for j in range(hgt)]
    try:
        return [vertex_at(X, *p) for p in pts]
    except KeyError as exc:
        raise EscapesMargin(f"loop vertex {exc} is outside the patch") from exc


def square_loop(X: SimplicialComplex, corner: int, side: int, margin: MarginMap | None = None) -> Hypersurface:
    """Boundary of an axis-parallel square of the given side, length 4s."""
    return rectangle_loop(X, corner, side, side, margin)


def rectangle_loop(X: SimplicialComplex, corner: int, w: int, hgt: int,
                   margin: MarginMap | None = None) -> Hypersurface:
    if w < 1 or hgt < 1:
        raise DegenerateInput("rectangle sides must be positive")
    path = rectangle_path(X, corner, w, hgt)
    _require_margin(path, margin)
    return loop_hypersurface(X, path)


# ------------------------------------------------------- polycube spheres

def polycube_surface(X: SimplicialComplex, cubes: set[tuple[int, int, int]],
                     margin: MarginMap | None = None) -> Hypersurface:
    """Triangulated boundary of a union of unit cubes, mapped by inclusion.

    Each exposed unit square is split along the diagonal present in the
    ambient Kuhn triangulation.  Raises DegenerateInput if the boundary is
    not a closed surface.
    """
    cubes = {tuple(int(c) for c in q) for q in cubes}
    tris = []
    for q in sorted(cubes):
        for axis in range(3):
            for side in (0, 1):
                nb = list(q)
                nb[axis] += 1 if side else -1
                if tuple(nb) in cubes:
                    continue
                b, c = [a for a in range(3) if a != axis]
                base = list(q)
                base[axis] += side
                p0 = tuple(base)
                pb = list(base)
                pb[b] += 1
                pc = list(base)
                pc[c] += 1
                pbc = list(base)
                pbc[b] += 1
                pbc[c] += 1
                tris.append((p0, tuple(pb), tuple(pbc)))
                tris.append((p0, tuple(pc), tuple(pbc)))
    try:
        amb = [[vertex_at(X, *p) for p in t] for t in tris]
    except KeyError as exc:
        raise EscapesMargin(f"surface vertex {exc} is outside the patch") from exc
    verts = sorted({v for t in amb for v in t})
    _require_margin(verts, margin)
    relabel = {v: i for i, v in enumerate(verts)}
    D = build_complex([[relabel[v] for v in t] for t in amb], n_vertices=len(verts))
    h = Hypersurface(D, np.asarray(verts), X, kind="sphere")
    if not h.is_closed_manifold() or not link_is_sphere_like(D):
        raise DegenerateInput("polycube boundary is not a closed surface")
    chi = euler_characteristic(D)
    if chi != 2:
        h.kind = "surface"
        h.genus = (2 - chi) // 2
    return h


def box_cubes(corner: Sequence[int], sides: Sequence[int]) -> set[tuple[int, int, int]]:
    return set(itertools.product(*[range(c, c + s) for c, s in zip(corner, sides)]))


def boundary_sphere(X: SimplicialComplex, corner: int, side: int,
                    margin: MarginMap | None = None) -> Hypersurface:
    """Boundary of an s x s x s box: 12 s^2 triangles."""
    if side < 1:
        raise DegenerateInput("box side must be positive")
    c = X.coords[corner]
    return polycube_surface(X, box_cubes(c, (side,) * 3), margin)


def perturbed_sphere(X: SimplicialComplex, corner: int, side: int, rng: np.random.Generator,
                     bumps: int = 4, margin: MarginMap | None = None) -> tuple[Hypersurface, set]:
    """Box boundary with random unit bumps and dents.

    Each bump adds a cube on an exposed face; each dent removes an exposed
    cube.  Moves that break the surface or the margin are discarded and
    redrawn, so the result is always a closed sphere.
    """
    cubes = box_cubes(X.coords[corner], (side,) * 3)
    done = 0
    attempts = 0
    while done < bumps and attempts < 50 * bumps:
        attempts += 1
        q = sorted(cubes)[int(rng.integers(len(cubes)))]
        trial = set(cubes)
        if rng.random() < 0.5:
            axis = int(rng.integers(3))
            step = 1 if rng.random() < 0.5 else -1
            nb = list(q)
            nb[axis] += step
            nb = tuple(nb)
            if nb in cubes:
                continue
            trial.add(nb)
        else:
            if len(cubes) <= 1:
                continue
            trial.discard(q)
        try:
            h = polycube_surface(X, trial, margin)
        except (DegenerateInput, EscapesMargin):
            continue
        if h.kind != "sphere":
            continue
        cubes = trial
        done += 1
    return polycube_surface(X, cubes, margin), cubes


# ------------------------------------------------------------ dumbbell

@dataclass
class DumbbellInfo:
    bulb_cubes: tuple[set, set]
    neck_path: list[int]
    band_vertices: list[int]


def dumbbell_sphere(X: SimplicialComplex, origin: Sequence[int], neck: int,
                    bulb: Sequence[int] = (2, 2, 1), margin: MarginMap | None = None,
                    collapse_all: bool = False) -> tuple[Hypersurface, DumbbellInfo]:
    """Two box-boundary bulbs joined by a tube whose image is a path.

    The tube rings all map to single vertices of a straight x-axis path of
    the given length, so every tube chamber is collapsed and the volume is
    the sum of the two bulb areas.  ``collapse_all`` maps the whole domain
    to one vertex instead.
    """
    ox, oy, oz = (int(c) for c in origin)
    bx, by, bz = (int(c) for c in bulb)
    cubes_a = box_cubes((ox, oy, oz), (bx, by, bz))
    xb = ox + bx + neck
    cubes_b = box_cubes((xb, oy, oz), (bx, by, bz))
    ha = polycube_surface(X, cubes_a, margin)
    hb = polycube_surface(X, cubes_b, margin)
    xa_face = ox + bx
    a1 = vertex_at(X, xa_face, oy, oz)
    a0 = vertex_at(X, xa_face, oy + 1, oz)
    a2 = vertex_at(X, xa_face, oy + 1, oz + 1)
    b1 = vertex_at(X, xb, oy, oz)
    b0 = vertex_at(X, xb, oy + 1, oz)
    b2 = vertex_at(X, xb, oy + 1, oz + 1)
    path = [vertex_at(X, xa_face + i, oy, oz) for i in range(neck + 1)]
    _require_margin(path, margin)

    # global labels: ambient-vertex based for bulb vertices, fresh ids for
    # the rest.  Bulb A uses keys ("a", v), bulb B ("b", v).
    labels: dict = {}
    image: list[int] = []

    def vid(key, img):
        if key not in labels:
            labels[key] = len(image)
            image.append(int(img))
        return labels[key]

    tris = []
    for tag, h, (t0, t1, t2) in (("a", ha, (a0, a1, a2)), ("b", hb, (b0, b1, b2))):
        target = tuple(sorted((t0, t1, t2)))
        for ch in h.chamber_images.tolist():
            tri = tuple(sorted(ch))
            if tri == target:
                continue
            tris.append([vid((tag, v), v) for v in tri])
        p = vid((tag, "p"), t0)
        v0, v1, v2 = vid((tag, t0), t0), vid((tag, t1), t1), vid((tag, t2), t2)
        tris.append([p, v1, v2])
        tris.append([p, v2, v0])
    ring_a = [labels[("a", "p")], labels[("a", a0)], labels[("a", a1)]]
    ring_b = [labels[("b", "p")], labels[("b", b0)], labels[("b", b1)]]
    rings = [ring_a]
    band = []
    for j, pv in enumerate(path):
        ring = [vid(("ring", j, i), pv) for i in range(3)]
        band += ring
        rings.append(ring)

    def tube(rings_seq):
        out = []
        for r0, r1 in zip(rings_seq, rings_seq[1:]):
            for i in range(3):
                out.append([r0[i], r0[(i + 1) % 3], r1[i]])
                out.append([r0[(i + 1) % 3], r1[(i + 1) % 3], r1[i]])
        return out

    best = None
    for order in (ring_b, ring_b[::-1]):
        cand = tris + tube(rings + [order])
        D = build_complex(cand, n_vertices=len(image))
        if orient(D) is not None:
            best = D
            break
    if best is None:
        raise DegenerateInput("could not orient dumbbell tube")
    img = np.asarray(image, dtype=np.int64)
    if collapse_all:
        img = np.full_like(img, img[0])
    hs = Hypersurface(best, img, X, kind="sphere")
    return hs, DumbbellInfo((cubes_a, cubes_b), path, band)


def bulb_chain_sphere(X: SimplicialComplex, origin: Sequence[int], necks: Sequence[int],
                      bulb: Sequence[int] = (2, 2, 1), margin: MarginMap | None = None) -> Hypersurface:
    """Several bulbs in a row joined by collapsed tubes (a longer dumbbell)."""
    ox, oy, oz = (int(c) for c in origin)
    bx, by, bz = (int(c) for c in bulb)
    starts = [ox]
    for nk in necks:
        starts.append(starts[-1] + bx + nk)
    labels: dict = {}
    image: list[int] = []

    def vid(key, img):
        if key not in labels:
            labels[key] = len(image)
            image.append(int(img))
        return labels[key]

    tris = []
    holes: dict[tuple[int, str], list[int]] = {}
    for i, xs in enumerate(starts):
        h = polycube_surface(X, box_cubes((xs, oy, oz), (bx, by, bz)), margin)
        removed = []
        if i + 1 < len(starts):  # hole on the +x face
            f = xs + bx
            removed.append(("r", (vertex_at(X, f, oy + 1, oz), vertex_at(X, f, oy, oz),
                                  vertex_at(X, f, oy + 1, oz + 1))))
        if i > 0:  # hole on the -x face
            f = xs
            removed.append(("l", (vertex_at(X, f, oy + 1, oz), vertex_at(X, f, oy, oz),
                                  vertex_at(X, f, oy + 1, oz + 1))))
        targets = {tuple(sorted(t)): (side, t) for side, t in removed}
        for ch in h.chamber_images.tolist():
            tri = tuple(sorted(ch))
            if tri in targets:
                continue
            tris.append([vid((i, v), v) for v in tri])
        for side, (t0, t1, t2) in removed:
            p = vid((i, side, "p"), t0)
            v0, v1, v2 = vid((i, t0), t0), vid((i, t1), t1), vid((i, t2), t2)
            tris.append([p, v1, v2])
            tris.append([p, v2, v0])
            holes[(i, side)] = [p, v0, v1]
    for i, nk in enumerate(necks):
        f = starts[i] + bx
        path = [vertex_at(X, f + j, oy, oz) for j in range(nk + 1)]
        _require_margin(path, margin)
        rings = [holes[(i, "r")]]
        for j, pv in enumerate(path):
            rings.append([vid(("ring", i, j, q), pv) for q in range(3)])
        end = holes[(i + 1, "l")]
        for order in (end, end[::-1]):
            seg = []
            rs = rings + [order]
            for r0, r1 in zip(rs, rs[1:]):
                for q in range(3):
                    seg.append([r0[q], r0[(q + 1) % 3], r1[q]])
                    seg.append([r0[(q + 1) % 3], r1[(q + 1) % 3], r1[q]])
            D = build_complex(tris + seg, n_vertices=len(image)) if len(labels) == len(image) else None
            if D is not None and orient(D) is not None:
                tris = tris + seg
                break
        else:
            raise DegenerateInput("could not orient bulb chain")
    D = build_complex(tris, n_vertices=len(image))
    return Hypersurface(D, np.asarray(image), X, kind="sphere")


def box_patch(shape: Sequence[int], margin: int = 0) -> tuple[SimplicialComplex, MarginMap]:
    spec = ModelSpec("grid3" if len(shape) == 3 else "grid2", max(shape), margin=margin,
                     shape=tuple(shape))
    return generate(spec)


def disjoint_union(parts: Sequence[Hypersurface]) -> Hypersurface:
    """One map whose domain is the disjoint union of the parts' domains."""
    if not parts:
        raise DegenerateInput("disjoint union of nothing")
    X = parts[0].ambient
    chs, image, off = [], [], 0
    for p in parts:
        if p.ambient is not X:
            raise DegenerateInput("parts live in different ambient complexes")
        chs += [[v + off for v in ch] for ch in p.domain.chambers]
        image += p.image.tolist()
        off += p.domain.n_vertices
    D = build_complex(chs, n_vertices=off)
    h = Hypersurface(D, np.asarray(image, dtype=np.int64), X, kind="surface")
    h.genus = 0
    return h


MODEL_HEADER = "# fillab-model "


def write_model(X: SimplicialComplex) -> str:
    """Complex text with a header that lets ``read_model`` rebuild the patch."""
    spec = getattr(X.model, "spec", None)
    body = write_scx(X)
    if spec is None:
        return body
    doc = {"kind": spec.kind, "size": spec.size, "margin": spec.margin,
           "removal": spec.removal, "shape": spec.shape}
    return MODEL_HEADER + json.dumps(doc, sort_keys=True) + "\n" + body


def read_model(text: str) -> tuple[SimplicialComplex, MarginMap | None]:
    """Inverse of ``write_model``; plain complex files load without a model."""
    first = text.split("\n", 1)[0]
    if not first.startswith(MODEL_HEADER):
        return read_scx(text), None
    try:
        doc = json.loads(first[len(MODEL_HEADER):])
        removal = doc.get("removal")
        if removal is not None:
            removal = (tuple(removal[0]), float(removal[1]))
        shape = tuple(doc["shape"]) if doc.get("shape") else None
        spec = ModelSpec(doc["kind"], int(doc["size"]), doc.get("margin"), removal, shape)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad model header: {first!r}") from exc
    X, M = generate(spec)
    if read_scx(text).chambers != X.chambers:
        raise FormatError("complex body does not match its model header")
    return X, M
