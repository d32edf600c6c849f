import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fillab.errors import DegenerateInput, EscapesMargin, FormatError, RemovalOutOfBounds
from fillab.filling import oracle_fill
from fillab.hypersurface import folded_set
from fillab.models import (
    ModelSpec,
    boundary_sphere,
    disjoint_union,
    dumbbell_sphere,
    generate,
    perturbed_sphere,
    read_model,
    square_loop,
    vertex_at,
    write_model,
)

from conftest import patch


def test_grid2_counts():
    X, M = generate(ModelSpec("grid2", 4))
    assert X.n_chambers == 32 and X.n_vertices == 25


def test_grid3_counts():
    X, _ = generate(ModelSpec("grid3", 2))
    assert X.n_chambers == 48 and X.n_vertices == 27


@pytest.mark.parametrize("d", [0, 1, 2])
def test_subdivided_octahedron(d):
    X, _ = generate(ModelSpec("sphere2-subdiv", d))
    assert X.n_chambers == 8 * 4**d
    assert X.free_facets() == []
    assert X.n_vertices - len(X.edges) + X.n_chambers == 2


def test_size_below_two_rejected():
    with pytest.raises(ValueError):
        generate(ModelSpec("grid2", 1))


def test_removal_must_clear_margin():
    with pytest.raises(RemovalOutOfBounds):
        generate(ModelSpec("punctured-grid2", 8, margin=2, removal=((2.5, 4.0), 1.0)))


def test_punctured_grid_drops_chambers():
    X, _ = generate(ModelSpec("punctured-grid2", 8, margin=1, removal=((4.0, 4.0), 0.5)))
    assert X.n_chambers < 128
    c = vertex_at(X, 3, 3)
    assert len(X.coords) == X.n_vertices and c >= 0


def test_square_loops():
    X, M = patch("grid2", 16, 2)
    h1 = square_loop(X, vertex_at(X, 4, 4), 1, M)
    assert h1.volume == 4 and oracle_fill(h1).volume == 2
    h4 = square_loop(X, vertex_at(X, 4, 4), 4, M)
    assert h4.volume == 16 and oracle_fill(h4).volume == 32
    with pytest.raises(DegenerateInput):
        square_loop(X, vertex_at(X, 4, 4), 0, M)
    with pytest.raises(EscapesMargin):
        square_loop(X, vertex_at(X, 1, 1), 4, M)


@pytest.mark.parametrize("s, vol, fill", [(1, 12, 6), (2, 48, 48), (3, 108, 162)])
def test_boundary_sphere_volumes(s, vol, fill):
    X, M = patch("grid3", 7, 1)
    h = boundary_sphere(X, vertex_at(X, 2, 2, 2), s, M)
    assert h.volume == vol and h.is_closed_manifold()
    assert oracle_fill(h).volume == fill


def test_dumbbell_volume_and_collapse():
    X, M = generate(ModelSpec("grid3", 0, margin=1, shape=(28, 5, 4)))
    h, info = dumbbell_sphere(X, (1, 1, 1), 20, margin=M)
    assert h.volume == 64
    assert h.is_closed_manifold()
    z, _ = dumbbell_sphere(X, (1, 1, 1), 20, collapse_all=True)
    assert z.volume == 0 and len(folded_set(z, 0.5, 10)) == 0


def test_neck_zero_unfolded_at_small_scale():
    X, M = generate(ModelSpec("grid3", 0, margin=1, shape=(8, 5, 4)))
    h, _ = dumbbell_sphere(X, (1, 1, 1), 0, margin=M)
    assert len(folded_set(h, 0.1, 2)) == 0


def test_perturbed_sphere_is_closed_and_deterministic():
    X, M = patch("grid3", 12, 1)
    a, _ = perturbed_sphere(X, vertex_at(X, 2, 2, 2), 8, np.random.default_rng(3), margin=M)
    b, _ = perturbed_sphere(X, vertex_at(X, 2, 2, 2), 8, np.random.default_rng(3), margin=M)
    assert a.is_closed_manifold()
    assert a.domain.chambers == b.domain.chambers and np.array_equal(a.image, b.image)


def test_disjoint_union_adds_volumes():
    X, M = patch("grid3", 7, 1)
    a = boundary_sphere(X, vertex_at(X, 1, 1, 1), 1)
    b = boundary_sphere(X, vertex_at(X, 4, 4, 4), 2)
    u = disjoint_union([a, b])
    assert u.volume == 60 and u.kind == "surface"


def test_model_file_round_trip():
    X, _ = generate(ModelSpec("grid2", 5, margin=1))
    Y, M = read_model(write_model(X))
    assert Y.chambers == X.chambers and M.width == 1
    text = write_model(X).replace('"size": 5', '"size": 6')
    with pytest.raises(FormatError):
        read_model(text)


@pytest.mark.parametrize("kind, size", [("grid2", 9), ("grid3", 4)])
def test_margin_map_lipschitz(kind, size):
    X, M = patch(kind, size, None)
    assert M.is_lipschitz(X)
    outer = [v for v in range(X.n_vertices) if 0 in X.coords[v] or size in X.coords[v]]
    assert np.all(M.dist[outer] == 0)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2))
def test_grid2_closed_form(s, m):
    X, _ = generate(ModelSpec("grid2", s, margin=m))
    assert X.n_chambers == 2 * s * s and X.n_vertices == (s + 1) ** 2
