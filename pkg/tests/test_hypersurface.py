import functools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fillab.complex import build_complex
from fillab.errors import FormatError, UnsupportedDimension
from fillab.filling import cone_fill
from fillab.hypersurface import (
    Hypersurface,
    cut,
    cut_chambers,
    diameter,
    euler_characteristic,
    folded_constant,
    folded_set,
    growth_profile,
    is_round,
    normal_dichotomy,
    normalize_domain,
    orient,
    read_hsf,
    restrict,
    write_hsf,
)
from fillab.models import (
    ModelSpec,
    boundary_sphere,
    dumbbell_sphere,
    generate,
    loop_hypersurface,
    rectangle_path,
    square_loop,
    vertex_at,
)

from conftest import patch

OCTAHEDRON = [(a, b, c) for a in (0, 1) for b in (2, 3) for c in (4, 5)]


@pytest.fixture(scope="module")
def octa():
    X = build_complex(OCTAHEDRON)
    return Hypersurface(X, np.arange(6), X)


@functools.lru_cache(maxsize=None)
def _dumbbell():
    X, M = generate(ModelSpec("grid3", 0, margin=1, shape=(28, 5, 4)))
    return dumbbell_sphere(X, (1, 1, 1), 20, margin=M)


@pytest.fixture
def dumbbell():
    return _dumbbell()


def test_volume_examples(octa, dumbbell):
    assert octa.volume == 8
    const = Hypersurface(octa.domain, np.zeros(6, dtype=int), octa.ambient)
    assert const.volume == 0 and diameter(const) == 0
    assert dumbbell[0].volume == 64


def test_diameter_examples():
    X, M = patch("grid2", 16, 2)
    assert diameter(square_loop(X, vertex_at(X, 4, 4), 4, M)) == 8
    Y, N = patch("grid3", 7, 1)
    assert diameter(boundary_sphere(Y, vertex_at(Y, 2, 2, 2), 2, N)) == 4


def test_roundness(octa, dumbbell):
    X, M = patch("grid2", 16, 2)
    for s in (1, 2, 5):
        assert is_round(square_loop(X, vertex_at(X, 3, 3), s, M), 1.0)
    assert is_round(octa, 0.71)
    assert not is_round(octa, 0.70)
    assert not is_round(dumbbell[0], 1.0)
    const = Hypersurface(octa.domain, np.zeros(6, dtype=int), octa.ambient)
    assert is_round(const, 0.1)


def test_restrict_square_loop_corner():
    X, M = patch("grid2", 16, 2)
    h = square_loop(X, vertex_at(X, 4, 4), 4, M)
    v = int(np.flatnonzero(h.image == vertex_at(X, 4, 4))[0])
    sub = restrict(h, v, 2)
    assert len(sub.chambers) == 4
    assert len(sub.boundary) == 2
    whole = restrict(h, v, diameter(h))
    assert len(whole.chambers) == h.domain.n_chambers and whole.boundary == []
    assert len(restrict(h, v, -1).chambers) == 0


def test_restrict_in_collapsed_band(dumbbell):
    h, info = dumbbell
    nc = h.noncollapsed
    band = info.band_vertices
    v = band[len(band) // 2]
    sub = restrict(h, v, 1)
    assert len(sub.chambers) > 0
    assert sub.volume == 0
    assert not nc[list(sub.chambers)].any()


def test_cut_identity_on_manifold(octa):
    res = cut_chambers(octa.domain, range(8), octa.image)
    assert res.complex.n_vertices == 6
    assert np.array_equal(res.gluing, np.arange(6))


def test_cut_separates_pinch():
    D = build_complex([(0, 1, 2), (2, 3, 4)])
    res = cut_chambers(D, [0, 1], np.arange(5))
    assert res.complex.n_vertices == 6
    assert sorted(res.gluing.tolist()) == [0, 1, 2, 2, 3, 4]
    assert np.array_equal(res.image, res.gluing)


def test_cut_wedge_of_arcs():
    D = build_complex([(0, 1), (0, 2), (0, 3), (0, 4)])
    res = cut_chambers(D, [0, 1, 2, 3], np.arange(5))
    assert res.complex.n_vertices > 5
    assert sorted(set(res.gluing.tolist())) == [0, 1, 2, 3, 4]


def test_cut_rejects_dimension_three():
    X, _ = patch("grid3", 2, 0)
    with pytest.raises(UnsupportedDimension):
        cut_chambers(X, [0], np.arange(X.n_vertices))


def test_cut_of_restriction_reproduces_map():
    X, M = patch("grid3", 12, 1)
    h = boundary_sphere(X, vertex_at(X, 2, 2, 2), 8, M)
    sub = restrict(h, 0, 3)
    res = cut(sub)
    assert np.array_equal(res.image, h.image[res.gluing])
    assert res.as_map(X).volume == sub.volume


def test_folded_constant():
    assert folded_constant(2) == 288


def test_folded_set_examples(octa):
    X, M = patch("grid3", 12, 1)
    h = boundary_sphere(X, vertex_at(X, 2, 2, 2), 8, M)
    assert len(folded_set(h, 0.5, 4)) == 0
    const = Hypersurface(octa.domain, np.zeros(6, dtype=int), octa.ambient)
    assert len(folded_set(const, 0.5, 10)) == 0
    with pytest.raises(ValueError):
        folded_set(h, 1.5, 4)


def test_dumbbell_folded_at_large_scale(dumbbell):
    h, _ = dumbbell
    F = folded_set(h, 0.5, 200)
    assert len(F) > 0
    for v, r in F.witness.items():
        assert growth_profile(h, v, r).V(r) <= 0.5 * r * r / 288


@settings(max_examples=12, deadline=None)
@given(st.floats(0.05, 0.9), st.floats(0.05, 0.9), st.integers(20, 200), st.integers(20, 200))
def test_folded_set_monotone(e1, e2, r1, r2):
    h, _ = _dumbbell()
    (e1, e2), (r1, r2) = sorted((e1, e2)), sorted((r1, r2))
    assert folded_set(h, e1, r1).vertices <= folded_set(h, e2, r2).vertices


def test_orientation(octa):
    signs = orient(octa.domain)
    assert signs is not None and set(np.abs(signs)) == {1}
    moebius = build_complex([(0, 1, 2), (1, 2, 3), (2, 3, 4), (3, 4, 0), (4, 0, 1)])
    assert orient(moebius) is None
    assert euler_characteristic(octa.domain) == 2


def test_normalize_drops_constant_edges():
    X, M = patch("grid2", 16, 2)
    p = rectangle_path(X, vertex_at(X, 4, 4), 3, 2)
    h = loop_hypersurface(X, [p[0]] * 3 + p)
    d = cone_fill(h).domain
    n = normalize_domain(d)
    assert n.domain.n_chambers < d.domain.n_chambers
    assert n.volume == d.volume
    assert set(n.image.tolist()) <= set(d.image.tolist())
    assert normal_dichotomy(n) and n.boundary_matches()
    again = normalize_domain(n)
    assert again.domain.n_chambers == n.domain.n_chambers


def test_hsf_round_trip():
    X, M = patch("grid2", 16, 2)
    h = square_loop(X, vertex_at(X, 4, 4), 3, M)
    g = read_hsf(write_hsf(h), X)
    assert g.domain.chambers == h.domain.chambers and np.array_equal(g.image, h.image)
    with pytest.raises(FormatError):
        read_hsf("1 2\n", X)
