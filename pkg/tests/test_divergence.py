import functools
import math
from collections import deque

import numpy as np
import pytest

from fillab.complex import INF
from fillab.errors import DegenerateInput, EmptyFamily
from fillab.divergence import (
    DivergenceQuery,
    div0,
    div_profile,
    divk,
    divround_transfer,
    dist_to_image,
    forbidden_chambers,
)
from fillab.filling import oracle_fill
from fillab.models import (
    ModelSpec,
    boundary_sphere,
    generate,
    perturbed_sphere,
    rectangle_loop,
    square_loop,
    vertex_at,
)

from conftest import patch


@functools.lru_cache(maxsize=None)
def strip():
    return generate(ModelSpec("grid2", 0, margin=0, shape=(140, 60)))[0]


@functools.lru_cache(maxsize=None)
def removed_ball():
    X, _ = generate(ModelSpec("ball-removed-grid3", 7, margin=1, removal=((3.5, 3.5, 3.5), 0.9)))
    return X, boundary_sphere(X, vertex_at(X, 0, 0, 0), 2)


def bfs_avoiding(X, a, b, c, delta):
    """Plain BFS on explicit coordinates, independent of the library metric."""
    coords = {v: tuple(int(t) for t in X.coords[v]) for v in range(X.n_vertices)}

    def d(u, v):
        dx = [q - p for p, q in zip(coords[u], coords[v])]
        return max([0] + dx) - min([0] + dx)

    radius = delta * min(d(c, a), d(c, b))
    nbrs = {v: [int(w) for w in X.neighbors[v]] for v in range(X.n_vertices)}
    seen = {a: 0}
    dq = deque([a])
    while dq:
        u = dq.popleft()
        for w in nbrs[u]:
            if w not in seen and d(c, w) >= radius:
                seen[w] = seen[u] + 1
                dq.append(w)
    return seen.get(b, INF)


@pytest.mark.parametrize("n, expect", [(8, 18), (16, 36), (32, 72), (64, 144)])
def test_div0_line_family(n, expect):
    X = strip()
    a, b, c = vertex_at(X, 70 - n, 30), vertex_at(X, 70 + n, 30), vertex_at(X, 70, 30)
    val = div0(X, a, b, c, 0.25)
    assert val == expect == bfs_avoiding(X, a, b, c, 0.25)
    assert val >= 2 * n


def test_div0_unobstructed_and_degenerate():
    X = strip()
    a, b, c = vertex_at(X, 10, 10), vertex_at(X, 30, 10), vertex_at(X, 20, 50)
    assert div0(X, a, b, c, 0.25) == X.metric.dist(a, b)
    with pytest.raises(DegenerateInput):
        div0(X, a, b, a, 0.25)
    with pytest.raises(ValueError):
        div0(X, a, b, c, 1.0)


def test_divk_disjoint_ball_equals_fill_volume():
    X, M = patch("grid2", 24, 2)
    h = square_loop(X, vertex_at(X, 3, 3), 4, M)
    c = vertex_at(X, 20, 20)
    q = DivergenceQuery(h, c, dist_to_image(h, c), 0.5)
    assert divk(q).value == oracle_fill(h).volume == 32


def test_divk_winding_loop_is_infinite():
    X, M = patch("grid2", 24, 2)
    h = square_loop(X, vertex_at(X, 4, 4), 4, M)
    c = vertex_at(X, 6, 6)
    r = dist_to_image(h, c)
    assert 0.5 * r >= 1
    assert math.isinf(divk(DivergenceQuery(h, c, r, 0.5)).value)


def test_divk_rejects_radius_beyond_distance():
    X, M = patch("grid2", 24, 2)
    h = square_loop(X, vertex_at(X, 4, 4), 4, M)
    with pytest.raises(DegenerateInput):
        DivergenceQuery(h, vertex_at(X, 6, 6), 5, 0.5).validate()


@pytest.mark.parametrize("centre, delta", [((5, 5, 5), 0.25), ((5, 5, 5), 0.9), ((4, 2, 2), 0.5)])
def test_divk_methods_agree_on_removed_ball(centre, delta):
    X, h = removed_ball()
    c = vertex_at(X, *centre)
    q = DivergenceQuery(h, c, dist_to_image(h, c), delta)
    vals = [divk(q, m).value for m in ("oracle", "bnb", "exhaustive")]
    assert vals == [48, 48, 48]
    assert divk(q, certify=True).value == 48


def test_divk_methods_agree_when_ball_blocks():
    X, h = removed_ball()
    q = DivergenceQuery(h, vertex_at(X, 1, 1, 1), 1, 0.9)
    assert len(forbidden_chambers(X, q.c, 0.9)) > 0
    for m in ("oracle", "bnb", "exhaustive"):
        assert math.isinf(divk(q, m).value)


def test_div_profile_k0_exponent():
    X = strip()
    fam = [(n, [(vertex_at(X, 70 - n, 30), vertex_at(X, 70 + n, 30), vertex_at(X, 70, 30))])
           for n in (8, 16, 32, 64)]
    prof = div_profile(X, fam, 0.25)
    assert prof.k == 0 and [p.value for p in prof.points] == [18, 36, 72, 144]
    assert abs(prof.fit.slope - 1.0) <= 0.1
    with pytest.raises(EmptyFamily):
        div_profile(X, [], 0.25)


def test_restricted_profile_below_unrestricted():
    X, M = patch("grid2", 80, 2)
    c = vertex_at(X, 4, 4)

    def family():
        for r in (2, 4, 8):
            corner = vertex_at(X, 4 + r, 4 + r)
            yield r, [(rectangle_loop(X, corner, w, r, M), c) for w in (r, 2 * r, 4 * r)]

    full = div_profile(X, family(), 0.25)
    rest = div_profile(X, family(), 0.25, restricted=(1.0, 4.0))
    assert [p.value for p in full.points] == [32, 128, 512]
    assert [p.value for p in rest.points] == [16, 64, 256]
    assert all(a.value <= b.value for a, b in zip(rest.points, full.points))


def test_transfer_on_round_sphere_reduces_to_divk():
    X, h = removed_ball()
    c = vertex_at(X, 5, 5, 5)
    r = dist_to_image(h, c)
    tr = divround_transfer(h, c, r, 0.5, 0.5)
    exact = divk(DivergenceQuery(h, c, r, 0.5), "bnb").value
    assert tr.pieces == 1 and tr.valid and tr.avoids_ball
    assert tr.value == exact == 48


def test_transfer_small_piece_radius_bound():
    X, M = patch("grid3", 30, 1)
    h = boundary_sphere(X, vertex_at(X, 2, 2, 2), 1, M)
    c = vertex_at(X, 14, 2, 2)
    r = dist_to_image(h, c)
    tr = divround_transfer(h, c, r, 0.5, 0.5)
    assert tr.small_pieces == tr.pieces == 1
    assert tr.radius_ratio <= 1.0
    assert tr.valid and tr.value == 6


def test_transfer_on_perturbed_sphere():
    X, M = patch("grid3", 30, 1)
    h, _ = perturbed_sphere(X, vertex_at(X, 3, 3, 3), 5, np.random.default_rng(1), margin=M)
    c = vertex_at(X, 20, 20, 20)
    r = dist_to_image(h, c)
    tr = divround_transfer(h, c, r, 0.5, 0.5)
    assert tr.valid and tr.avoids_ball
    assert tr.value >= divk(DivergenceQuery(h, c, r, 0.5)).value
