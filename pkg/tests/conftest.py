import numpy as np
import pytest

from jtoric.polytope import build_polytope


def trapezoid(top):
    """{y >= 0, 1 <= y1 + y2 <= top} as a Delzant polytope."""
    return build_polytope([(1, 0), (0, 1), (1, 1), (-1, -1)],
                          [0, 0, -1, top])


def unit_square():
    return build_polytope([(1, 0), (0, 1), (-1, 0), (0, -1)],
                          [0, 0, 1, 1])


def segment():
    return build_polytope([(1,), (-1,)], [0, 1])


@pytest.fixture
def trap2():
    return trapezoid(2)


@pytest.fixture
def square():
    return unit_square()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def interior_points(P, m, rng, margin=1e-3):
    """Rejection-sample m points with all facet distances > margin."""
    lo = P.vertices.min(axis=0)
    hi = P.vertices.max(axis=0)
    out = []
    while len(out) < m:
        y = lo + (hi - lo) * rng.random(P.dim)
        if P.facet_distances(y[None, :]).min() > margin:
            out.append(y)
    return np.array(out)
