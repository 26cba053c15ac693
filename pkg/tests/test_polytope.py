"""Combinatorial layer: construction, faces, volumes, mixed slopes,
stability verdicts."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jtoric.errors import (EmptyInterior, NonPrimitiveNormal, NormalMismatch,
                           NotDelzant, Unbounded)
from jtoric.polytope import (build_polytope, check_face_stability, compute_nc,
                             enumerate_faces, lattice_volume,
                             minkowski_sum_offsets, polytope_volume,
                             trace_class_integral)

from conftest import trapezoid, unit_square, segment


# ---------------------------------------------------------------------------
# build_polytope
# ---------------------------------------------------------------------------

class TestBuild:
    def test_trapezoid_vertices(self, trap2):
        got = sorted(map(tuple, np.round(trap2.vertices, 12)))
        assert got == [(0.0, 1.0), (0.0, 2.0), (1.0, 0.0), (2.0, 0.0)]

    def test_unit_square(self, square):
        got = sorted(map(tuple, np.round(square.vertices, 12)))
        assert got == [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]

    def test_not_delzant(self):
        with pytest.raises(NotDelzant):
            build_polytope([(1, 0), (0, 1), (-2, -1)], [0, 0, 2])

    def test_non_primitive_normal(self):
        with pytest.raises(NonPrimitiveNormal):
            build_polytope([(2, 0), (0, 1), (-1, -1)], [0, 0, 2])

    def test_unbounded(self):
        with pytest.raises(Unbounded):
            build_polytope([(1, 0), (0, 1)], [0, 0])

    def test_empty_interior(self):
        with pytest.raises(EmptyInterior):
            build_polytope([(1, 0), (0, 1), (-1, 0), (0, -1)],
                           [0, 0, -1, 1])

    def test_rational_offsets_exact(self):
        P = build_polytope([(1,), (-1,)], [0, "1/3"])
        assert float(P.offsets_exact[1]) == pytest.approx(1 / 3, abs=0)


# ---------------------------------------------------------------------------
# faces and volumes
# ---------------------------------------------------------------------------

def _face_counts(P):
    faces = enumerate_faces(P)
    counts = {}
    for f in faces:
        counts[f.dim] = counts.get(f.dim, 0) + 1
    return counts


class TestFaces:
    def test_trapezoid_face_counts(self, trap2):
        assert _face_counts(trap2) == {0: 4, 1: 4, 2: 1}

    def test_square_face_counts(self, square):
        assert _face_counts(square) == {0: 4, 1: 4, 2: 1}

    def test_cube_face_counts(self):
        normals = []
        offsets = []
        for ax in range(3):
            e = [0, 0, 0]
            e[ax] = 1
            normals.append(tuple(e))
            offsets.append(0)
            e2 = [0, 0, 0]
            e2[ax] = -1
            normals.append(tuple(e2))
            offsets.append(1)
        C = build_polytope(normals, offsets)
        assert _face_counts(C) == {0: 8, 1: 12, 2: 6, 3: 1}

    def test_trapezoid_volume(self, trap2):
        assert lattice_volume(trap2) == pytest.approx(1.5, rel=1e-12)

    def test_edge_lattice_length(self, trap2):
        faces = enumerate_faces(trap2)
        # the inner edge {y1 + y2 = 1} has lattice length 1
        inner = [f for f in faces if f.dim == 1
                 and np.allclose(f.vertices.sum(axis=1), 1.0)]
        assert len(inner) == 1
        assert lattice_volume(inner[0]) == pytest.approx(1.0, rel=1e-12)
        # the outer edge {y1 + y2 = 2} has lattice length 2
        outer = [f for f in faces if f.dim == 1
                 and np.allclose(f.vertices.sum(axis=1), 2.0)]
        assert lattice_volume(outer[0]) == pytest.approx(2.0, rel=1e-12)

    def test_vertex_volume_convention(self, trap2):
        v = [f for f in enumerate_faces(trap2) if f.dim == 0][0]
        assert lattice_volume(v) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Minkowski sums and the trace-class slope
# ---------------------------------------------------------------------------

class TestMixed:
    def test_sum_offsets(self, trap2):
        Q = trapezoid(1.1)
        S = minkowski_sum_offsets(trap2, Q, 1.0)
        assert [float(b) for b in S.offsets_exact] == pytest.approx(
            [0.0, 0.0, -2.0, 3.1])

    def test_sum_t0_identity(self, trap2):
        S = minkowski_sum_offsets(trap2, trapezoid(1.1), 0.0)
        assert [float(b) for b in S.offsets_exact] == pytest.approx(
            [float(b) for b in trap2.offsets_exact])

    def test_sum_doubles(self, trap2):
        S = minkowski_sum_offsets(trap2, trap2, 1.0)
        assert [float(b) for b in S.offsets_exact] == pytest.approx(
            [0.0, 0.0, -2.0, 4.0])

    def test_mismatched_fans(self, trap2, square):
        with pytest.raises(NormalMismatch):
            minkowski_sum_offsets(trap2, square, 1.0)

    def test_trace_class_self(self, trap2):
        assert trace_class_integral(trap2, trap2) == pytest.approx(
            3.0, rel=1e-10)

    def test_trace_class_trapezoid_pair(self, trap2):
        assert trace_class_integral(trap2, trapezoid(1.1)) == pytest.approx(
            1.2, rel=1e-10)

    def test_trace_class_squares(self):
        P = unit_square()
        Q = build_polytope([(1, 0), (0, 1), (-1, 0), (0, -1)], [0, 0, 2, 2])
        assert trace_class_integral(P, Q) == pytest.approx(4.0, rel=1e-10)

    def test_volume_polynomial_consistency(self, trap2):
        # vol(P + tQ) must lie on the quadratic fitted from the slope data
        Q = trapezoid(1.1)
        ts = [0.35, 0.85, 1.7]
        vols = [lattice_volume(minkowski_sum_offsets(trap2, Q, t))
                for t in ts]
        oracle = [((2 + 1.1 * t) ** 2 - (1 + t) ** 2) / 2 for t in ts]
        assert vols == pytest.approx(oracle, rel=1e-10)

    def test_linearity_in_q_offsets(self, trap2):
        Q = trapezoid(1.1)
        Q2 = minkowski_sum_offsets(Q, Q, 1.0)      # offsets doubled
        s1 = trace_class_integral(trap2, Q)
        s2 = trace_class_integral(trap2, Q2)
        assert s2 == pytest.approx(2 * s1, rel=1e-10)


class TestNc:
    def test_identity_pair(self, trap2):
        assert compute_nc(trap2, trap2) == pytest.approx(2.0, rel=1e-12)

    def test_a11(self, trap2):
        assert compute_nc(trap2, trapezoid(1.1)) == pytest.approx(
            0.8, rel=1e-12)

    def test_threshold_exact(self, trap2):
        # 2 * (1.25*2 - 1) / (2^2 - 1) = 1 exactly
        assert compute_nc(trap2, trapezoid(1.25)) == pytest.approx(
            1.0, abs=5e-16)

    @settings(max_examples=30, deadline=None)
    @given(a=st.floats(1.05, 3.0), b=st.floats(1.05, 3.0))
    def test_nc_formula(self, a, b):
        P = trapezoid(b)
        Q = trapezoid(a)
        oracle = 2 * (a * b - 1) / (b ** 2 - 1)
        assert compute_nc(P, Q) == pytest.approx(oracle, rel=1e-9)


# ---------------------------------------------------------------------------
# face stability
# ---------------------------------------------------------------------------

class TestStability:
    def test_violated_case(self, trap2):
        rep = check_face_stability(trap2, trapezoid(1.1))
        assert rep.nc == pytest.approx(0.8, rel=1e-12)
        assert rep.verdict == "violated"
        bad = [f for f in rep.per_face if f.verdict == "violated"]
        assert len(bad) == 1
        # the violated face is the inner edge {y1 + y2 = 1}
        assert np.allclose(bad[0].face.vertices.sum(axis=1), 1.0)
        assert bad[0].lhs == pytest.approx(1.0, abs=1e-9)
        others = sorted(f.lhs for f in rep.per_face if f.verdict == "pass")
        assert others == pytest.approx([0.1, 0.1, 0.55], abs=1e-9)

    def test_pass_case(self, trap2):
        rep = check_face_stability(trap2, trap2)
        assert rep.verdict == "pass"
        assert sorted(f.lhs for f in rep.per_face) == pytest.approx(
            [1.0, 1.0, 1.0, 1.0], abs=1e-9)

    def test_marginal_case(self, trap2):
        rep = check_face_stability(trap2, trapezoid(1.25))
        assert rep.verdict == "marginal"
        marg = [f for f in rep.per_face if f.verdict == "marginal"]
        assert len(marg) == 1
        assert np.allclose(marg[0].face.vertices.sum(axis=1), 1.0)

    def test_identity_pair_faces_are_dimension(self, square):
        # for P = Q each proper face has lhs = dim(F) < n = nc
        rep = check_face_stability(square, square)
        for f in rep.per_face:
            assert f.lhs == pytest.approx(f.p, abs=1e-9)
            assert f.verdict == "pass"


def test_polytope_volume_matches_lattice_volume(trap2):
    assert polytope_volume(trap2) == pytest.approx(lattice_volume(trap2))
