"""Time evolution of the flow in polytope coordinates.

The evolving unknown is the smooth correction v_t on a cell-centered grid
clipped to P; the singular part of the potential stays closed-form, so the
right-hand side tr DU - nc extends continuously to the boundary and the
update never differentiates anything singular.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientHistory, StepFailure
from .polytope import compute_nc, polytope_volume
from .potential import SymplecticPotential, ZeroCorrection, canonical_potential
from .transition import GeometryPair, _clip_cell, _core

__all__ = [
    "GridFlowState",
    "DiagnosticsTrace",
    "Outcome",
    "init_flow",
    "rhs",
    "step",
    "run",
    "parabolic_residual",
    "flow_energy",
]

_TOL_STATIC = 1e-4
_TOL_IMMEDIATE = 1e-9
_DELTA_CONV = 1e-2
_DELTA_DEG = 1e-3
_CONV_WINDOW = 50
_DEG_WINDOW = 100


# ---------------------------------------------------------------------------
# masked finite differences on the full rectangular array
# ---------------------------------------------------------------------------

def _nb(A, axis, s, fill=np.nan):
    """Array of neighbor values at offset s along an axis."""
    if s == 0:
        return A
    out = np.full_like(A, fill)
    io = [slice(None)] * A.ndim
    ii = [slice(None)] * A.ndim
    if s > 0:
        io[axis] = slice(None, -s)
        ii[axis] = slice(s, None)
    else:
        io[axis] = slice(-s, None)
        ii[axis] = slice(None, s)
    out[tuple(io)] = A[tuple(ii)]
    return out


def _nbm(mask, axis, s):
    return _nb(mask.astype(bool), axis, s, fill=False).astype(bool)


def _d1(A, mask, axis, h):
    """First derivative: centered where possible, one-sided otherwise."""
    Ap1, Am1 = _nb(A, axis, 1), _nb(A, axis, -1)
    Ap2, Am2 = _nb(A, axis, 2), _nb(A, axis, -2)
    mp1, mm1 = _nbm(mask, axis, 1), _nbm(mask, axis, -1)
    mp2, mm2 = _nbm(mask, axis, 2), _nbm(mask, axis, -2)
    out = np.zeros_like(A)
    c = mp1 & mm1
    f3 = ~c & mp1 & mp2
    b3 = ~c & ~f3 & mm1 & mm2
    f2 = ~c & ~f3 & ~b3 & mp1
    b2 = ~c & ~f3 & ~b3 & ~f2 & mm1
    np.copyto(out, (Ap1 - Am1) / (2 * h), where=c)
    np.copyto(out, (-3 * A + 4 * Ap1 - Ap2) / (2 * h), where=f3)
    np.copyto(out, (3 * A - 4 * Am1 + Am2) / (2 * h), where=b3)
    np.copyto(out, (Ap1 - A) / h, where=f2)
    np.copyto(out, (A - Am1) / h, where=b2)
    out[~mask] = np.nan
    return out


def _d2(A, mask, axis, h):
    """Second derivative: centered, else one-sided 4-point, else 3-point."""
    Ap1, Am1 = _nb(A, axis, 1), _nb(A, axis, -1)
    Ap2, Am2 = _nb(A, axis, 2), _nb(A, axis, -2)
    Ap3, Am3 = _nb(A, axis, 3), _nb(A, axis, -3)
    mp1, mm1 = _nbm(mask, axis, 1), _nbm(mask, axis, -1)
    mp2, mm2 = _nbm(mask, axis, 2), _nbm(mask, axis, -2)
    mp3, mm3 = _nbm(mask, axis, 3), _nbm(mask, axis, -3)
    h2 = h * h
    out = np.zeros_like(A)
    c = mp1 & mm1
    f4 = ~c & mp1 & mp2 & mp3
    b4 = ~c & ~f4 & mm1 & mm2 & mm3
    f3 = ~c & ~f4 & ~b4 & mp1 & mp2
    b3 = ~c & ~f4 & ~b4 & ~f3 & mm1 & mm2
    np.copyto(out, (Ap1 - 2 * A + Am1) / h2, where=c)
    np.copyto(out, (2 * A - 5 * Ap1 + 4 * Ap2 - Ap3) / h2, where=f4)
    np.copyto(out, (2 * A - 5 * Am1 + 4 * Am2 - Am3) / h2, where=b4)
    np.copyto(out, (A - 2 * Ap1 + Ap2) / h2, where=f3)
    np.copyto(out, (A - 2 * Am1 + Am2) / h2, where=b3)
    out[~mask] = np.nan
    return out


def grid_gradient(A, mask, h):
    """Gradient of a node field, stacked on the last axis."""
    n = A.ndim
    return np.stack([_d1(A, mask, ax, h) for ax in range(n)], axis=-1)


def grid_hessian(A, mask, h):
    """Hessian of a node field: direct stencils on the diagonal,
    symmetrized first-derivative composition off the diagonal."""
    n = A.ndim
    G = [_d1(A, mask, ax, h) for ax in range(n)]
    H = np.empty(A.shape + (n, n))
    for i in range(n):
        H[..., i, i] = _d2(A, mask, i, h)
        for j in range(i + 1, n):
            Gi = np.where(mask, G[i], 0.0)
            Gj = np.where(mask, G[j], 0.0)
            mix = 0.5 * (_d1(Gi, mask, j, h) + _d1(Gj, mask, i, h))
            H[..., i, j] = mix
            H[..., j, i] = mix
    return H


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------

@dataclass
class GridFlowState:
    base: SymplecticPotential      # canonical potential on P
    g: SymplecticPotential         # fixed target potential on Q
    origin: np.ndarray
    h: float
    counts: tuple
    mask: np.ndarray               # (counts) bool: node inside closed P
    nodes: np.ndarray              # (m, n) node coordinates
    weights: np.ndarray            # (m,) quadrature weights, sum = vol(P)
    v: np.ndarray                  # (m,) correction values
    nc: float
    t: float = 0.0
    dt: float = 0.0
    cfl: float = 0.2
    U_cache: np.ndarray = None
    mls: tuple = field(default=None, repr=False)
    _static: dict = field(default=None, repr=False)
    snapshots: list = field(default_factory=list)   # [(t, U field), ...]

    @property
    def pair(self):
        return GeometryPair(self.base, self.g)

    @property
    def P(self):
        return self.base.polytope

    def full(self, values):
        """Scatter node values into the rectangular array (NaN outside)."""
        out = np.full(self.counts, np.nan)
        out[self.mask] = values
        return out

    def gather(self, A):
        return A[self.mask]

    def static_data(self):
        """Quantities fixed by the node layout: interior flags and the
        canonical grad/Hessian at safely interior nodes."""
        if self._static is None:
            din = self.P.facet_distances(self.nodes).min(axis=1)
            interior = din > self.base.h_switch
            self._static = {
                "din": din,
                "interior": interior,
                "base_grad": self.base.grad(self.nodes[interior])
                if interior.any() else None,
                "base_hess": self.base.hess(self.nodes[interior])
                if interior.any() else None,
            }
        return self._static


@dataclass
class DiagnosticsTrace:
    t: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    max_trace: list = field(default_factory=list)
    min_trace: list = field(default_factory=list)
    min_det: list = field(default_factory=list)
    max_det: list = field(default_factory=list)
    max_compat: list = field(default_factory=list)
    max_partial: list = field(default_factory=list)
    static_residual: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)
    parabolic_residual: list = field(default_factory=list)
    tracked_distance: list = field(default_factory=list)

    def as_rows(self):
        keys = ["t", "energy", "max_trace", "min_trace", "min_det",
                "max_det", "max_compat", "max_partial", "static_residual",
                "dissipation", "parabolic_residual"]
        cols = [getattr(self, k) for k in keys]
        return keys, list(zip(*cols))


@dataclass
class Outcome:
    tag: str                       # Converged | Degenerating | Undecided
    static_residual: float = None
    degenerate_nodes: np.ndarray = None
    sigma_range: tuple = None      # (min, max) of sum(y) over that node set


# ---------------------------------------------------------------------------
# setup
# ---------------------------------------------------------------------------

def _node_weights(P, origin, h, counts, mask, nodes):
    """Clipped-cell volumes per node; outside-center slivers are merged
    into the nearest inside node so the weights sum to vol(P)."""
    from scipy.spatial import cKDTree
    n = P.dim
    corner_idx = np.stack(np.meshgrid(
        *[np.arange(c + 1) for c in counts], indexing="ij"), axis=-1)
    corners = origin + corner_idx * h
    dc = P.facet_distances(corners)                       # (c+1..., k)
    # per-cell min/max of each facet distance over its 2^n corners
    dmin = dc
    dmax = dc
    for ax in range(n):
        lo = [slice(None)] * (n + 1)
        hi = [slice(None)] * (n + 1)
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        dmin = np.minimum(dmin[tuple(lo)], dmin[tuple(hi)])
        dmax = np.maximum(dmax[tuple(lo)], dmax[tuple(hi)])
    fully_inside = (dmin.min(axis=-1) >= 0)
    fully_outside = (dmax <= 0).any(axis=-1)
    boundary = ~fully_inside & ~fully_outside

    flat_node_id = np.full(counts, -1, dtype=int)
    flat_node_id[mask] = np.arange(mask.sum())
    weights = np.zeros(mask.sum())
    weights[flat_node_id[fully_inside & mask]] = h ** n

    tree = cKDTree(nodes)
    for idx in np.argwhere(boundary):
        clo = origin + idx * h
        vol, cent = _clip_cell(P, clo, clo + h)
        if vol <= 0 or cent is None:
            continue
        tidx = tuple(idx)
        if mask[tidx]:
            weights[flat_node_id[tidx]] += vol
        else:
            _, j = tree.query(cent)
            weights[j] += vol
    return weights


def init_flow(P, Q, u0, g, h):
    """Discretize u0 = u_canonical + v on a cell-centered grid of spacing h."""
    if u0.polytope is not P and u0.polytope != P:
        raise ValueError("u0 must live on P")
    if g.polytope is not Q and g.polytope != Q:
        raise ValueError("g must live on Q")
    n = P.dim
    lo = P.vertices.min(axis=0)
    hi = P.vertices.max(axis=0)
    counts = tuple(int(np.ceil((hi[k] - lo[k]) / h - 1e-12))
                   for k in range(n))
    if min(counts) < 8:
        raise ValueError("grid too coarse: need >= 8 cells per edge")
    grids = np.meshgrid(*[lo[k] + (np.arange(counts[k]) + 0.5) * h
                          for k in range(n)], indexing="ij")
    pts = np.stack(grids, axis=-1)
    d = P.facet_distances(pts)
    mask = d.min(axis=-1) >= -1e-12
    nodes = pts[mask]

    v = u0.correction.value(nodes)
    # validate convexity of the initial potential at safely interior nodes
    din = P.facet_distances(nodes).min(axis=1)
    safe = din > 1e-9
    hess0 = u0.hess(nodes[safe])
    if np.linalg.eigvalsh(hess0).min() <= 0:
        raise StepFailure("initial potential is not convex on the grid")

    weights = _node_weights(P, lo, h, counts, mask, nodes)
    base = canonical_potential(P)
    return GridFlowState(base=base, g=g, origin=lo, h=h, counts=counts,
                         mask=mask, nodes=nodes, weights=weights,
                         v=np.asarray(v, dtype=float),
                         nc=compute_nc(P, Q))


# ---------------------------------------------------------------------------
# boundary-adapted derivatives
# ---------------------------------------------------------------------------
#
# Nodes that lack a centered +/-1 neighbor pair in some axis would need
# one-sided stencils; on diagonal facets those stencils couple into a
# growing semi-discrete mode.  For such nodes the gradient and Hessian are
# instead read off a weighted least-squares quadratic fit over the nearby
# in-mask nodes, which keeps second-order accuracy without the one-sided
# amplification.

def _build_mls(state, radius=2.5):
    """Sparse operator mapping node values to quadratic-fit coefficients
    at every stencil-deficient node."""
    from scipy.sparse import csr_matrix
    from scipy.spatial import cKDTree
    mask, h, nodes = state.mask, state.h, state.nodes
    n = nodes.shape[1]
    cent = mask.copy()
    for ax in range(n):
        cent &= _nbm(mask, ax, 1) & _nbm(mask, ax, -1)
    defic = np.nonzero(~state.gather(cent))[0]
    nb_count = 1 + n + n * (n + 1) // 2 + 2      # fit dof plus slack
    tree = cKDTree(nodes)
    rows, cols, vals = [], [], []
    for r, i in enumerate(defic):
        rad = radius
        while True:
            nb = tree.query_ball_point(nodes[i], rad * h)
            if len(nb) >= nb_count:
                break
            rad *= 1.3
        nb = np.asarray(nb)
        X = (nodes[nb] - nodes[i]) / h
        w = np.exp(-(X ** 2).sum(axis=1))
        basis = [np.ones(len(nb))]
        basis += [X[:, ax] for ax in range(n)]
        for a in range(n):
            for b in range(a, n):
                fac = 0.5 if a == b else 1.0
                basis.append(fac * X[:, a] * X[:, b])
        Phi = np.stack(basis, axis=1)
        WPhi = w[:, None] * Phi
        sol = np.linalg.solve(Phi.T @ WPhi, WPhi.T)   # (dof, m)
        dof = sol.shape[0]
        rows.append((r * dof + np.arange(dof)[:, None]
                     + np.zeros(len(nb), int)).ravel())
        cols.append(np.tile(nb, dof))
        vals.append(sol.ravel())
    dof = 1 + n + n * (n + 1) // 2
    A = csr_matrix((np.concatenate(vals) if len(defic) else [],
                    (np.concatenate(rows) if len(defic) else [],
                     np.concatenate(cols) if len(defic) else [])),
                   shape=(len(defic) * dof, len(nodes)))
    return defic, A


def _apply_mls(state, v, vg, vh):
    """Overwrite vg/vh rows at stencil-deficient nodes with the fit values."""
    if state.mls is None:
        state.mls = _build_mls(state)
    idx, A = state.mls
    if len(idx) == 0:
        return
    n = state.nodes.shape[1]
    dof = 1 + n + n * (n + 1) // 2
    c = (A @ v).reshape(len(idx), dof)
    h = state.h
    k = 1
    for ax in range(n):
        vg[idx, ax] = c[:, k] / h
        k += 1
    for a in range(n):
        for b in range(a, n):
            vh[idx, a, b] = vh[idx, b, a] = c[:, k] / h ** 2
            k += 1


# ---------------------------------------------------------------------------
# right-hand side
# ---------------------------------------------------------------------------

def _eval_fields(state, v):
    """U, DU, Ginv and the FD Hessian of v at the nodes for given v values."""
    V = state.full(v)
    vg = state.gather(grid_gradient(V, state.mask, state.h))
    vh = state.gather(grid_hessian(V, state.mask, state.h))
    _apply_mls(state, v, vg, vh)
    nodes = state.nodes
    sd = state.static_data()
    interior = sd["interior"]
    grad_u = np.zeros_like(nodes)
    hess_u = np.zeros(nodes.shape + (nodes.shape[1],))
    if interior.any():
        grad_u[interior] = sd["base_grad"] + vg[interior]
        hess_u[interior] = sd["base_hess"] + vh[interior]
    U, DU, interior, Ginv = _core(state.base, state.g, nodes,
                                  grad_u, hess_u, vgrad=vg, vhess=vh,
                                  warm_U=state.U_cache)
    return U, DU, Ginv, hess_u, interior


def rhs(state, v=None):
    """tr DU - nc at the nodes (also refreshes the cached image field)."""
    U, DU, Ginv, _, _ = _eval_fields(state, state.v if v is None else v)
    state.U_cache = U
    return np.trace(DU, axis1=-2, axis2=-1) - state.nc


def _convex_after(state, v):
    """SPD check of Hess u at interior nodes for candidate v values."""
    V = state.full(v)
    vg = state.gather(grid_gradient(V, state.mask, state.h))
    vh = state.gather(grid_hessian(V, state.mask, state.h))
    _apply_mls(state, v, vg, vh)
    sd = state.static_data()
    H = sd["base_hess"] + vh[sd["interior"]]
    if H.shape[-1] == 2:
        # SPD iff positive corner entry and determinant (Sylvester)
        return bool(H[..., 0, 0].min() > 0 and np.linalg.det(H).min() > 0)
    return bool(np.linalg.eigvalsh(H).min() > 0)


def step(state, dt=None, max_halvings=10, t_cap=None):
    """One adaptive midpoint step; mutates and returns the state."""
    U1, DU1, Ginv1, _, _ = _eval_fields(state, state.v)
    state.U_cache = U1
    k1 = np.trace(DU1, axis1=-2, axis2=-1) - state.nc
    if dt is None:
        specrad = float(np.linalg.eigvalsh(Ginv1).max())
        dt = state.cfl * state.h ** 2 / specrad
    if t_cap is not None and state.t + dt > t_cap:
        dt = t_cap - state.t
    for _ in range(max_halvings + 1):
        vmid = state.v + 0.5 * dt * k1
        try:
            U2, DU2, _, _, _ = _eval_fields(state, vmid)
            k2 = np.trace(DU2, axis1=-2, axis2=-1) - state.nc
            vnew = state.v + dt * k2
            if _convex_after(state, vnew):
                state.v = vnew
                state.t += dt
                state.dt = dt
                state.U_cache = U2
                return state
        except Exception:
            pass
        dt *= 0.5
    raise StepFailure(
        f"convexity lost at t = {state.t:.6g} after {max_halvings} halvings")


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def flow_energy(state, trace_field):
    """0.5 integral of (tr DU)^2, split as deviation plus invariant part.

    Expanding around nc gives 0.5 |tr - nc|^2 + nc * int tr - 0.5 nc^2 vol,
    and the middle integral is a class invariant equal to nc * vol(P).  The
    time-dependent part is therefore the deviation term alone; evaluating
    the invariant part in closed form keeps the discrete energy free of the
    quadrature drift that the raw square accumulates.
    """
    dev = 0.5 * (state.weights * (trace_field - state.nc) ** 2).sum()
    return float(dev + 0.5 * state.nc ** 2 * polytope_volume(state.P))


def _dissipation(state, trace_field, U, Ginv):
    """integral of g^{kl}(U) d_k(trDU) d_l(trDU) over P (node quadrature)."""
    T = state.full(trace_field)
    gr = state.gather(grid_gradient(T, state.mask, state.h))
    q = np.einsum("mk,mkl,ml->m", gr, Ginv, gr)
    return float((state.weights * q).sum())


def _record(state, trace_obj, tracked_z):
    U, DU, Ginv, _, interior = _eval_fields(state, state.v)
    state.U_cache = U
    tr = np.trace(DU, axis1=-2, axis2=-1)
    det = np.linalg.det(DU)
    M = Ginv @ np.swapaxes(DU, -1, -2)
    compat = np.abs(M - np.swapaxes(M, -1, -2)).max()
    # norm bound: tr(DU Ginv DU^T G) in the interior, tr(DU^2) elsewhere
    partial = np.einsum("mij,mji->m", DU, DU)
    if interior.any():
        G = np.linalg.inv(Ginv[interior])
        partial_int = np.einsum("mij,mjk,mlk,mli->m",
                                DU[interior], Ginv[interior],
                                DU[interior], G)
        partial[interior] = partial_int
    tro = trace_obj
    tro.t.append(state.t)
    tro.energy.append(flow_energy(state, tr))
    tro.max_trace.append(float(tr.max()))
    tro.min_trace.append(float(tr.min()))
    tro.min_det.append(float(det.min()))
    tro.max_det.append(float(det.max()))
    tro.max_compat.append(float(compat))
    tro.max_partial.append(float(partial.max()))
    tro.static_residual.append(float(np.abs(tr - state.nc).max()))
    tro.dissipation.append(_dissipation(state, tr, U, Ginv))
    state.snapshots.append((state.t, U.copy()))
    if len(state.snapshots) > 2:
        state.snapshots.pop(0)
    try:
        tro.parabolic_residual.append(parabolic_residual(state))
    except InsufficientHistory:
        tro.parabolic_residual.append(np.nan)
    if tracked_z:
        dists = []
        for z in tracked_z:
            j = int(np.argmin(((U - np.asarray(z)) ** 2).sum(axis=1)))
            dists.append(float(
                state.P.facet_distances(state.nodes[j]).min()))
        tro.tracked_distance.append(dists)
    return det


def _classify(trace_obj, det, state):
    sr = trace_obj.static_residual
    md = trace_obj.min_det
    if sr[-1] < _TOL_IMMEDIATE:
        return Outcome("Converged", static_residual=sr[-1])
    if (len(sr) >= _CONV_WINDOW
            and all(r < _TOL_STATIC for r in sr[-_CONV_WINDOW:])
            and min(md[-_CONV_WINDOW:]) > _DELTA_CONV):
        return Outcome("Converged", static_residual=sr[-1])
    if (len(md) >= _DEG_WINDOW
            and all(m < _DELTA_DEG for m in md[-_DEG_WINDOW:])
            and md[-1] < md[-_DEG_WINDOW]):
        nodes_deg = np.nonzero(det < _DELTA_DEG)[0]
        s = state.nodes[nodes_deg].sum(axis=1)
        return Outcome("Degenerating", degenerate_nodes=nodes_deg,
                       sigma_range=(float(s.min()), float(s.max()))
                       if len(s) else None)
    return None


def run(state, t_end, diag_every, tracked_z=None):
    """Advance to t_end with periodic diagnostics and classification."""
    trace_obj = DiagnosticsTrace()
    det = _record(state, trace_obj, tracked_z)
    outcome = _classify(trace_obj, det, state)
    if outcome is not None and outcome.tag == "Converged":
        return state, trace_obj, outcome
    next_diag = state.t + diag_every
    while state.t < t_end - 1e-14:
        step(state, t_cap=min(next_diag, t_end))
        if state.t >= next_diag - 1e-14 or state.t >= t_end - 1e-14:
            det = _record(state, trace_obj, tracked_z)
            next_diag = state.t + diag_every
            outcome = _classify(trace_obj, det, state)
            if outcome is not None and outcome.tag == "Converged":
                return state, trace_obj, outcome
    if outcome is not None:
        return state, trace_obj, outcome
    # final classification with whatever history exists
    nodes_deg = np.nonzero(det < _DELTA_DEG)[0]
    md = trace_obj.min_det
    if (trace_obj.static_residual[-1] < _TOL_STATIC
            and md[-1] > _DELTA_CONV):
        outcome = Outcome("Converged",
                          static_residual=trace_obj.static_residual[-1])
    elif len(nodes_deg) and len(md) >= 2 and md[-1] < md[0]:
        s = state.nodes[nodes_deg].sum(axis=1)
        outcome = Outcome("Degenerating", degenerate_nodes=nodes_deg,
                          sigma_range=(float(s.min()), float(s.max())))
    else:
        outcome = Outcome("Undecided")
    return state, trace_obj, outcome


# ---------------------------------------------------------------------------
# parabolic residual of the image field
# ---------------------------------------------------------------------------

def parabolic_residual(state):
    """Defect of the divergence-form image evolution between the last two
    recorded snapshots, max over safely interior nodes."""
    if len(state.snapshots) < 2:
        raise InsufficientHistory("need two recorded image fields")
    (t1, U1), (t2, U2) = state.snapshots[-2:]
    if t2 <= t1:
        raise InsufficientHistory("snapshots must be at distinct times")
    g = state.g
    mask, h, n = state.mask, state.h, state.P.dim
    Ut = (U2 - U1) / (t2 - t1)
    Um = 0.5 * (U1 + U2)

    # interior nodes: full centered stencils and image well inside Q
    full_c = mask.copy()
    for ax in range(n):
        full_c &= _nbm(mask, ax, 1) & _nbm(mask, ax, -1)
    good = state.gather(full_c)
    dq = g.polytope.facet_distances(Um).min(axis=1)
    good &= dq > g.h_switch
    din = state.P.facet_distances(state.nodes).min(axis=1)
    good &= din > 2 * h
    if not good.any():
        raise InsufficientHistory("no interior nodes for the residual")

    Ginv = g.inverse_hess_batch(Um)                       # (m, n, n)
    DUfd = np.stack(
        [state.gather(grid_gradient(state.full(Um[:, i]), mask, h))
         for i in range(n)], axis=1)                      # (m, i, k)
    # divergence of W^{ik} = g^{kj}(U) dU^i/dy^j
    W = np.einsum("mkj,mij->mik", Ginv, DUfd)
    div = np.zeros((len(Um), n))
    for kax in range(n):
        for i in range(n):
            Wf = state.full(W[:, i, kax])
            div[:, i] += state.gather(_d1(Wf, mask, kax, h))
    # correction term (g^{ij})_l (U) dU^l/dy^k dU^k/dy^j with
    # (g^{ij})_l = -(Ginv d_lG Ginv)_{ij}
    corr = np.zeros((len(Um), n))
    gd = good
    T3 = g.third(Um[gd])                                  # d_l G (m, i, j, l)
    dGinv = -np.einsum("mia,mabl,mbj->mijl", Ginv[gd], T3, Ginv[gd])
    corr[gd] = np.einsum("mijl,mlk,mkj->mi", dGinv, DUfd[gd], DUfd[gd])
    res = Ut - (div - corr)
    return float(np.abs(res[gd]).max())
