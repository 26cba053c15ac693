"""Grid flow: masked stencils, least-squares boundary derivatives, setup
invariants, stepping, classification, and the parabolic residual."""
import numpy as np
import pytest

from jtoric import flow as fl
from jtoric.errors import StepFailure
from jtoric.polytope import polytope_volume
from jtoric.potential import canonical_potential, potential_from_expression
from jtoric.transition import GeometryPair

from conftest import trapezoid


@pytest.fixture
def ident_state(trap2):
    u = canonical_potential(trap2)
    return fl.init_flow(trap2, trap2, u, u, 2.0 / 24)


@pytest.fixture
def shrink_state(trap2):
    Q = trapezoid(1.5)
    return fl.init_flow(trap2, Q, canonical_potential(trap2),
                        canonical_potential(Q), 2.0 / 24)


def _quad_field(nodes):
    x, y = nodes[:, 0], nodes[:, 1]
    return 0.7 + 0.3 * x - 0.2 * y + 0.5 * x * x + 0.25 * x * y - 0.4 * y * y


class TestStencils:
    def test_quadratic_exact(self, ident_state):
        # stencil-complete nodes are exact on quadratics; the deficient
        # remainder is handled by the least-squares fit (next test)
        st = ident_state
        V = st.full(_quad_field(st.nodes))
        g = st.gather(fl.grid_gradient(V, st.mask, st.h))
        H = st.gather(fl.grid_hessian(V, st.mask, st.h))
        if st.mls is None:
            st.mls = fl._build_mls(st)
        ok = np.ones(len(st.nodes), dtype=bool)
        ok[st.mls[0]] = False
        # the mixed-derivative composition additionally consumes first
        # derivatives one node away, so require a full 2-wide band
        band = st.mask.copy()
        for ax in range(2):
            for s in (-2, -1, 1, 2):
                band &= fl._nbm(st.mask, ax, s)
        ok &= st.gather(band)
        x, y = st.nodes[ok, 0], st.nodes[ok, 1]
        g, H = g[ok], H[ok]
        assert np.abs(g[:, 0] - (0.3 + 1.0 * x + 0.25 * y)).max() < 1e-9
        assert np.abs(g[:, 1] - (-0.2 + 0.25 * x - 0.8 * y)).max() < 1e-9
        assert np.abs(H[:, 0, 0] - 1.0).max() < 1e-8
        assert np.abs(H[:, 0, 1] - 0.25).max() < 1e-8
        assert np.abs(H[:, 1, 1] + 0.8).max() < 1e-8

    def test_mls_quadratic_exact(self, ident_state):
        # the least-squares fit reproduces quadratics at deficient nodes
        st = ident_state
        v = _quad_field(st.nodes)
        vg = np.zeros_like(st.nodes)
        vh = np.zeros(st.nodes.shape + (2,))
        fl._apply_mls(st, v, vg, vh)
        idx, _ = st.mls
        assert len(idx) > 0
        x, y = st.nodes[idx, 0], st.nodes[idx, 1]
        assert np.abs(vg[idx, 0] - (0.3 + 1.0 * x + 0.25 * y)).max() < 1e-8
        assert np.abs(vh[idx, 0, 0] - 1.0).max() < 1e-7
        assert np.abs(vh[idx, 0, 1] - 0.25).max() < 1e-7
        assert np.abs(vh[idx, 1, 1] + 0.8).max() < 1e-7

    def test_deficient_set_is_near_boundary(self, ident_state):
        st = ident_state
        if st.mls is None:
            st.mls = fl._build_mls(st)
        idx, _ = st.mls
        din = st.P.facet_distances(st.nodes[idx]).min(axis=1)
        assert din.max() < 2.5 * st.h


class TestSetup:
    def test_weights_sum_to_volume(self, ident_state, trap2):
        assert ident_state.weights.sum() == pytest.approx(
            polytope_volume(trap2), rel=1e-10)
        assert ident_state.weights.min() > 0

    def test_too_coarse_rejected(self, trap2):
        u = canonical_potential(trap2)
        with pytest.raises(ValueError):
            fl.init_flow(trap2, trap2, u, u, 1.0)

    def test_nonconvex_initial_rejected(self, trap2):
        u0 = potential_from_expression(trap2, "-5*(y1-1)*(y1-1)")
        with pytest.raises(StepFailure):
            fl.init_flow(trap2, trap2, u0, canonical_potential(trap2),
                         2.0 / 24)

    def test_initial_rhs_vanishes_for_identity(self, ident_state):
        r = fl.rhs(ident_state)
        assert np.abs(r).max() < 1e-9


class TestStepping:
    def test_step_advances_time(self, shrink_state):
        st = shrink_state
        fl.step(st)
        assert st.t > 0
        assert st.dt > 0

    def test_time_cap_respected(self, shrink_state):
        st = shrink_state
        fl.step(st, t_cap=1e-5)
        assert st.t == pytest.approx(1e-5, abs=1e-15)

    def test_energy_decreases(self, shrink_state):
        st = shrink_state
        _, DU, _, _, _ = fl._eval_fields(st, st.v)
        tr0 = np.trace(DU, axis1=-2, axis2=-1)
        e0 = fl.flow_energy(st, tr0)
        for _ in range(20):
            fl.step(st)
        _, DU, _, _, _ = fl._eval_fields(st, st.v)
        tr1 = np.trace(DU, axis1=-2, axis2=-1)
        assert fl.flow_energy(st, tr1) < e0

    def test_identity_energy_closed_form(self, ident_state, trap2):
        _, DU, _, _, _ = fl._eval_fields(ident_state, ident_state.v)
        tr = np.trace(DU, axis1=-2, axis2=-1)
        e = fl.flow_energy(ident_state, tr)
        assert e == pytest.approx(2.0 * polytope_volume(trap2), rel=1e-9)


class TestRunAndClassify:
    def test_identity_converged_at_t0(self, ident_state):
        st, trace, outcome = fl.run(ident_state, 1.0, diag_every=0.1)
        assert outcome.tag == "Converged"
        assert st.t == 0.0
        assert outcome.static_residual < 1e-9

    def test_run_produces_monotone_energy(self, shrink_state):
        st, trace, outcome = fl.run(shrink_state, 0.05, diag_every=0.01)
        E = np.array(trace.energy)
        assert np.all(np.diff(E) <= 1e-10)
        assert len(trace.t) == len(trace.dissipation)

    def test_parabolic_residual_available_after_two_records(
            self, shrink_state):
        st, trace, outcome = fl.run(shrink_state, 0.02, diag_every=0.01)
        vals = [r for r in trace.parabolic_residual if np.isfinite(r)]
        assert len(vals) >= 1
        assert vals[-1] < 0.1


class TestAgainstRadial:
    def test_coarse_grid_matches_radial(self):
        from jtoric import calabi as cal
        n, a, b = 2, 1.5, 2.0
        P = cal.calabi_polytope(n, b)
        Q = cal.calabi_polytope(n, a)
        st = fl.init_flow(P, Q, canonical_potential(P),
                          canonical_potential(Q), 2.0 / 24)
        while st.t < 0.1 - 1e-12:
            fl.step(st, t_cap=0.1)
        prof = cal.canonical_initial_profile(n, a, b, num_nodes=1025)
        prof, _ = cal.radial_run(prof, 0.1, num_records=1)
        U, _, _, _, _ = fl._eval_fields(st, st.v)
        fld = cal.embed_radial(prof)
        assert np.abs(U - fld.U(st.nodes)).max() < 2e-2
