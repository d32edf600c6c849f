import functools

import pytest

from fillab.models import ModelSpec, generate


@functools.lru_cache(maxsize=None)
def patch(kind: str, size: int, margin: int | None = None, removal=None):
    return generate(ModelSpec(kind, size, margin=margin, removal=removal))


@pytest.fixture
def grid2_16():
    return patch("grid2", 16, 2)
