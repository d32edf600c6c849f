import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fillab.complex import build_complex
from fillab.errors import DegenerateInput, EmptyFamily
from fillab.filling import (
    build_combing,
    chain_to_domain,
    cone_fill,
    exhaustive_fill,
    filling_radius,
    growth_inequality_failures,
    growth_inequality_holds,
    heuristic_fill,
    iso_profile,
    oracle_fill,
    radius_growth_profile,
)
from fillab.hypersurface import Hypersurface, normalize_domain
from fillab.models import (
    ModelSpec,
    boundary_sphere,
    generate,
    loop_hypersurface,
    rectangle_loop,
    square_loop,
    vertex_at,
)

from conftest import patch


def test_combing_on_grid_is_geodesic_and_fellow_travels():
    X, _ = patch("grid2", 16, 2)
    comb = build_combing(X, vertex_at(X, 0, 0), sample=None)
    assert comb.measured_L <= 2
    assert comb.measured_C == 0
    y = vertex_at(X, 5, 9)
    path = comb.path(y)
    assert path[0] == vertex_at(X, 0, 0) and path[-1] == y
    assert len(path) - 1 == X.metric.dist(path[0], y)


def test_combing_single_triangle_and_disconnected():
    X = build_complex([(0, 1, 2)])
    comb = build_combing(X, 0, sample=None)
    assert comb.measured_L == 1
    assert max(comb.depth) <= 1
    with pytest.raises(DegenerateInput):
        build_combing(build_complex([(0, 1, 2), (3, 4, 5)]), 0)


def test_constant_loop_fills_with_zero():
    X, M = patch("grid2", 16, 2)
    v = vertex_at(X, 5, 5)
    h = loop_hypersurface(X, [v, v, v])
    assert cone_fill(h).volume == 0
    assert oracle_fill(h).volume == 0


def test_cone_fill_square_loop():
    X, M = patch("grid2", 16, 2)
    corner = vertex_at(X, 4, 4)
    h = square_loop(X, corner, 4, M)
    res = cone_fill(h, apex=corner)
    assert res.domain.boundary_matches()
    assert res.volume >= 32
    assert res.volume <= res.cone_constant * 17 * 9 + 1e-9


def test_cone_fill_sphere_boundary_matches():
    X, M = patch("grid3", 7, 1)
    h = boundary_sphere(X, vertex_at(X, 2, 2, 2), 2, M)
    res = cone_fill(h)
    assert res.domain.k == 3
    assert res.domain.boundary_matches()
    assert res.volume >= 48


@pytest.mark.parametrize("s", [1, 2, 4, 8])
def test_oracle_square_loops(s):
    X, M = patch("grid2", 16, 2)
    res = oracle_fill(square_loop(X, vertex_at(X, 3, 3), s, M))
    assert res.volume == 2 * s * s and res.certificate


@pytest.mark.parametrize("s", [1, 2])
def test_oracle_matches_exhaustive(s):
    X, M = patch("grid2", 16, 2)
    h = square_loop(X, vertex_at(X, 3, 3), s, M)
    cost, coeffs, _ = exhaustive_fill(h, pad=1)
    assert cost == oracle_fill(h).volume == 2 * s * s


@pytest.mark.parametrize("s", [1, 2, 3, 4])
def test_oracle_boundary_spheres(s):
    X, M = patch("grid3", 7, 1)
    res = oracle_fill(boundary_sphere(X, vertex_at(X, 1, 1, 1), s, M))
    assert res.volume == 6 * s**3
    assert res.domain.is_valid()


def test_winding_loop_in_punctured_grid_is_infinite():
    X, M = generate(ModelSpec("punctured-grid2", 8, margin=1, removal=((4.0, 4.0), 0.5)))
    h = square_loop(X, vertex_at(X, 2, 2), 4, M)
    assert math.isinf(oracle_fill(h).volume)
    g = square_loop(X, vertex_at(X, 5, 5), 1, M)
    assert oracle_fill(g).volume == 2


def test_filling_radius_examples():
    X, M = patch("grid2", 24, 2)
    h = square_loop(X, vertex_at(X, 2, 2), 8, M)
    orc = oracle_fill(h)
    assert orc.radius <= 8 / 2 + 1
    cone = cone_fill(h, apex=vertex_at(X, 20, 20))
    assert filling_radius(cone, h) > orc.radius
    v = vertex_at(X, 5, 5)
    const = loop_hypersurface(X, [v, v, v])
    assert filling_radius(oracle_fill(const), const) == 0


def test_radius_growth_profile_sphere_centre():
    X, M = patch("grid3", 7, 1)
    h = boundary_sphere(X, vertex_at(X, 1, 1, 1), 4, M)
    d = chain_to_domain(oracle_fill(h).domain)
    centre = int(np.flatnonzero(d.image == vertex_at(X, 3, 3, 3))[0])
    prof = radius_growth_profile(d, centre)
    # nothing non-collapsed fits in a radius-0 ball; at radius 1 the vertex
    # star (24 tetrahedra, bounded by its 24-triangle link) enters
    assert prof == [(0, 0, 0), (1, 24, 24), (2, 192, 48)]
    assert len(X.vertex_star[vertex_at(X, 3, 3, 3)]) == 24
    assert growth_inequality_holds(prof, 2)
    assert growth_inequality_failures(d) == []


def test_radius_growth_profile_constant_fill():
    X, M = patch("grid3", 7, 1)
    h = boundary_sphere(X, vertex_at(X, 1, 1, 1), 2, M)
    d = chain_to_domain(oracle_fill(h).domain)
    flat = type(d)(d.domain, np.full(d.domain.n_vertices, d.image[0]), X, surface=h)
    assert all(a == 0 and b == 0 for _, a, b in radius_growth_profile(flat, 0, 3))


def test_iso_profiles():
    X, M = patch("grid2", 72, 2)
    fam = [(s, square_loop(X, vertex_at(X, 3, 3), s, M)) for s in (4, 8, 16, 32)]
    records, fit, gaps = iso_profile(X, fam)
    assert [r.value for r in records] == [32, 128, 512, 2048]
    assert abs(fit.slope - 2.0) <= 0.05 and gaps == []
    with pytest.raises(EmptyFamily):
        iso_profile(X, [])


def test_iso_profile_records_margin_gaps():
    X, M = patch("grid2", 16, 2)
    fam = [(4, lambda: square_loop(X, vertex_at(X, 3, 3), 4, M)),
           (20, lambda: square_loop(X, vertex_at(X, 3, 3), 20, M))]
    records, fit, gaps = iso_profile(X, fam)
    assert gaps == [20] and len(records) == 1


def test_heuristic_is_an_upper_bound():
    X, M = patch("grid2", 16, 2)
    h = rectangle_loop(X, vertex_at(X, 3, 3), 5, 3, M)
    heur = heuristic_fill(h)
    assert heur.volume >= oracle_fill(h).volume
    assert heur.domain.boundary_matches()


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(2, 5), st.integers(2, 5))
def test_rectangle_oracle_matches_area(w, hgt, x, y):
    X, M = patch("grid2", 16, 2)
    h = rectangle_loop(X, vertex_at(X, x, y), w, hgt, M)
    assert oracle_fill(h).volume == 2 * w * hgt
    cone = cone_fill(h)
    assert cone.volume >= 2 * w * hgt


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6))
def test_normalized_cone_fill_keeps_volume(w, hgt):
    X, M = patch("grid2", 16, 2)
    h = rectangle_loop(X, vertex_at(X, 3, 3), w, hgt, M)
    d = cone_fill(h).domain
    n = normalize_domain(d)
    assert n.volume == d.volume and n.boundary_matches()
