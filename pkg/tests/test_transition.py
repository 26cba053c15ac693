"""Moment-map transition between polytopes: pointwise samples, spectral
invariants, compatibility residuals, class-invariant integrals."""
import numpy as np
import pytest

from jtoric.errors import NormalMismatch
from jtoric.polytope import compute_nc, enumerate_faces, polytope_volume
from jtoric.potential import canonical_potential, potential_from_expression
from jtoric.transition import (GeometryPair, characteristic_check,
                               compatibility_residual,
                               compatibility_residual_fd, energy,
                               face_trace_integral, inverse_point,
                               matching_vertex, trace_integral_quadrature,
                               transition_at, transition_batch)

from conftest import interior_points, trapezoid, unit_square


@pytest.fixture
def ident_pair(trap2):
    u = canonical_potential(trap2)
    return GeometryPair(u, u)


@pytest.fixture
def calabi_pair(trap2):
    Q = trapezoid(1.1)
    return GeometryPair(canonical_potential(trap2), canonical_potential(Q))


class TestIdentityPair:
    def test_map_is_identity(self, ident_pair, trap2, rng):
        pts = interior_points(trap2, 12, rng, margin=0.02)
        U, DU, _ = transition_batch(ident_pair, pts)
        assert np.abs(U - pts).max() < 1e-10
        assert np.abs(DU - np.eye(2)).max() < 1e-9

    def test_identity_on_boundary(self, ident_pair):
        for y in ([0.5, 0.5], [1.5, 0.0], [0.0, 1.7], [1.0, 0.0]):
            s = transition_at(ident_pair, np.array(y))
            assert np.abs(s.U - y).max() < 1e-9
            assert s.trace == pytest.approx(2.0, abs=1e-9)
            assert s.det == pytest.approx(1.0, abs=1e-9)

    def test_energy_closed_form(self, ident_pair, trap2):
        # constant trace n gives E = n^2 vol / 2
        E = energy(ident_pair, quad_order=48)
        assert E == pytest.approx(2.0 * polytope_volume(trap2), rel=1e-10)

    def test_trace_integral_closed_form(self, ident_pair, trap2):
        val = trace_integral_quadrature(ident_pair, quad_order=48)
        assert val == pytest.approx(2.0 * polytope_volume(trap2), rel=1e-10)


class TestSamples:
    def test_sample_consistency(self, calabi_pair, trap2, rng):
        pts = interior_points(trap2, 8, rng, margin=0.03)
        for y in pts:
            s = transition_at(calabi_pair, y)
            assert s.trace == pytest.approx(np.trace(s.DU), rel=1e-12)
            assert s.det == pytest.approx(np.linalg.det(s.DU), rel=1e-10)
            # eigenvalues of the pencil reproduce trace and det
            assert s.eigenvalues.sum() == pytest.approx(s.trace, rel=1e-7)
            assert s.eigenvalues.prod() == pytest.approx(s.det, rel=1e-7)

    def test_spectral_inequalities(self, calabi_pair, trap2, rng):
        pts = interior_points(trap2, 60, rng, margin=0.01)
        U, DU, _ = transition_batch(calabi_pair, pts)
        tr = np.trace(DU, axis1=-2, axis2=-1)
        det = np.linalg.det(DU)
        assert det.min() > 0
        # arithmetic-geometric mean inequality for the positive spectrum
        assert np.all(det <= (tr / 2) ** 2 * (1 + 1e-12))

    def test_compat_residual_small(self, calabi_pair, trap2, rng):
        pts = interior_points(trap2, 10, rng, margin=0.03)
        for y in pts:
            assert compatibility_residual(calabi_pair, y) < 1e-8

    def test_compat_fd_second_order(self, calabi_pair):
        y = np.array([0.9, 0.5])
        r1 = compatibility_residual_fd(calabi_pair, y, 2e-2)
        r2 = compatibility_residual_fd(calabi_pair, y, 1e-2)
        # one halving: the residual drops by about 4 (second order)
        assert r2 < r1 / 2.5 or r1 < 1e-10

    def test_characteristic_positive_logconcave(self, calabi_pair):
        ts = [0.0, 0.5, 1.0, 1.5, 2.0]
        vals = np.array(characteristic_check(
            calabi_pair, np.array([1.0, 0.4]), ts))
        assert np.all(vals > 0)
        lv = np.log(vals)
        assert np.all(np.diff(lv, 2) <= 1e-12)

    def test_face_preservation(self, calabi_pair, trap2):
        # an on-facet point maps into the corresponding facet of Q
        y = np.array([1.3, 0.0])
        s = transition_at(calabi_pair, y)
        dQ = calabi_pair.Q.facet_distances(s.U)
        assert abs(dQ[np.argmin(np.abs(dQ))]) < 1e-7


class TestClassInvariance:
    CORRECTIONS = [None, "0.03*y1*y1 + 0.02*y2*y2", "0.04*sin(y1+y2)"]

    def _pair(self, expr):
        P, Q = trapezoid(2), trapezoid(1.1)
        u = (canonical_potential(P) if expr is None
             else potential_from_expression(P, expr))
        return GeometryPair(u, canonical_potential(Q))

    def test_trace_integral_invariant(self):
        P, Q = trapezoid(2), trapezoid(1.1)
        target = compute_nc(P, Q) * polytope_volume(P)
        assert target == pytest.approx(1.2, rel=1e-12)
        for expr in self.CORRECTIONS:
            val = trace_integral_quadrature(self._pair(expr), quad_order=64)
            assert val == pytest.approx(target, rel=1e-3)

    def test_face_integral_invariant_between_corrections(self):
        vals = []
        for expr in self.CORRECTIONS:
            pair = self._pair(expr)
            face = next(f for f in enumerate_faces(pair.P) if f.dim == 1)
            vals.append(face_trace_integral(pair, face, quad_order=24))
        assert np.ptp(vals) < 1e-6


class TestInverse:
    def test_roundtrip(self, calabi_pair, trap2, rng):
        pts = interior_points(trap2, 5, rng, margin=0.08)
        U, _, _ = transition_batch(calabi_pair, pts)
        for z, y in zip(U, pts):
            yr = inverse_point(calabi_pair, z)
            assert np.abs(yr - y).max() < 1e-8


class TestVertexMatching:
    def test_same_fan(self, trap2):
        Q = trapezoid(1.1)
        for vi in range(len(trap2.vertices)):
            qi = matching_vertex(trap2, Q, vi)
            assert trap2.vertex_active[vi] == Q.vertex_active[qi]

    def test_fan_mismatch_rejected(self, trap2, square):
        with pytest.raises(NormalMismatch):
            GeometryPair(canonical_potential(trap2),
                         canonical_potential(square))
