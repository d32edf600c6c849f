import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fillab.complex import (
    INF,
    ChamberSet,
    build_complex,
    gallery_component,
    metric_ball,
    read_scx,
    skeleton_distance,
    write_scx,
)
from fillab.errors import DanglingVertex, FormatError, NonPureComplex, SeedNotAllowed
from fillab.models import vertex_at

from conftest import patch

OCTAHEDRON = [(a, b, c) for a in (0, 1) for b in (2, 3) for c in (4, 5)]


def test_single_triangle():
    X = build_complex([(0, 1, 2)])
    assert X.dim == 2 and X.n_chambers == 1
    assert len(X.edges) == 3
    assert len(X.free_facets()) == 3


def test_octahedron_counts_and_metric():
    X = build_complex(OCTAHEDRON)
    assert X.n_chambers == 8 and len(X.edges) == 12
    assert all(len(a) == 3 for a in X.adjacency)
    assert X.free_facets() == []
    assert skeleton_distance(X, 0, 1) == 2
    assert skeleton_distance(X, 0, 2) == 1


def test_mixed_sizes_rejected():
    with pytest.raises(NonPureComplex):
        build_complex([(0, 1, 2), (2, 3)])


def test_dangling_vertex_rejected():
    with pytest.raises(DanglingVertex):
        build_complex([(0, 1, 2)], n_vertices=4)


def test_grid_diagonal_distance():
    X, _ = patch("grid2", 8, 0)
    assert skeleton_distance(X, vertex_at(X, 0, 0), vertex_at(X, 8, 8)) == 8
    # the anti-diagonal has no shortcut edges
    assert skeleton_distance(X, vertex_at(X, 8, 0), vertex_at(X, 0, 8)) == 16


def test_disconnected_distance_is_infinite():
    X = build_complex([(0, 1, 2), (3, 4, 5)])
    assert skeleton_distance(X, 0, 4) == INF


def test_gallery_component():
    X = build_complex(OCTAHEDRON)
    assert len(gallery_component(X, 0, range(8))) == 8
    assert gallery_component(X, 0, [0]) == ChamberSet(8, [0])
    with pytest.raises(SeedNotAllowed):
        gallery_component(X, 0, [1, 2])
    # chambers meeting only at a vertex are not gallery connected
    Y = build_complex([(0, 1, 2), (2, 3, 4)])
    assert len(gallery_component(Y, 0, [0, 1])) == 1


def test_metric_ball_sizes():
    X, _ = patch("grid2", 8, 0)
    c = vertex_at(X, 4, 4)
    assert metric_ball(X, c, 0) == {c}
    assert len(metric_ball(X, c, 1)) == 7
    assert len(metric_ball(X, c, 2)) == 19
    assert metric_ball(X, c, -1) == set()


def test_scx_round_trip():
    X = build_complex(OCTAHEDRON)
    Y = read_scx(write_scx(X))
    assert Y.chambers == X.chambers and Y.n_vertices == X.n_vertices


def test_scx_rejects_garbage():
    with pytest.raises(FormatError):
        read_scx("not a complex\n1 2 x\n")


def test_metric_cache_round_trip(tmp_path):
    X, _ = patch("grid2", 8, 0)
    X.metric.row(0)
    X.metric.row(5)
    X.metric.save(tmp_path / "rows.npz")
    Y, _ = patch("grid2", 6, 0)
    with pytest.raises(FormatError):
        Y.metric.load(tmp_path / "rows.npz")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 80), st.integers(0, 80), st.integers(0, 80))
def test_triangle_inequality(a, b, c):
    X, _ = patch("grid2", 8, 0)
    d = X.metric
    assert d.dist(a, c) <= d.dist(a, b) + d.dist(b, c)
    assert d.dist(a, b) == d.dist(b, a)


@settings(max_examples=40, deadline=None)
@given(st.tuples(st.integers(-8, 8), st.integers(-8, 8)))
def test_grid_distance_formula(disp):
    # Freudenthal edges are the unit vectors and (1, 1): distance is max - min of (0, dx, dy)
    X, _ = patch("grid2", 8, 0)
    dx, dy = disp
    x0, y0 = max(0, -dx), max(0, -dy)
    if x0 + dx > 8 or y0 + dy > 8:
        return
    u, v = vertex_at(X, x0, y0), vertex_at(X, x0 + dx, y0 + dy)
    expect = max(0, dx, dy) - min(0, dx, dy)
    assert skeleton_distance(X, u, v) == expect


def test_chamber_set_algebra():
    a, b = ChamberSet(10, [1, 2, 3]), ChamberSet(10, [3, 4])
    assert list(a | b) == [1, 2, 3, 4]
    assert list(a & b) == [3]
    assert ChamberSet(10, [3]) <= a
    assert np.all(ChamberSet.full(4).mask)
