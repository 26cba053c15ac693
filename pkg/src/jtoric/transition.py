"""The moment-map transition U = grad f o grad u between polytopes.

Interior points go through the Legendre-dual Newton solve; points near the
boundary go through the vertex chart, where both the map and its Jacobian
are smooth.  DU is always assembled as (extended inverse Hessian of g at U)
times (Hessian of u at y), never by differencing U near the boundary.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (BoundaryEvaluation, FaceMismatch, NewtonDivergence,
                     NormalMismatch)
from .polytope import DelzantPolytope, Face, polytope_volume
from .potential import SymplecticPotential, legendre_dual_grad_batch

__all__ = [
    "GeometryPair",
    "TransitionSample",
    "transition_at",
    "transition_batch",
    "compatibility_residual",
    "compatibility_residual_fd",
    "characteristic_check",
    "face_trace_integral",
    "energy",
    "trace_integral_quadrature",
    "inverse_point",
    "cell_decomposition",
]

_FACE_TOL = 1e-9        # a point this close to a facet counts as on it
_FACE_IMAGE_TOL = 1e-7  # how far U may leave the corresponding face


@dataclass(frozen=True)
class GeometryPair:
    """Source potential (P, u) and target potential (Q, g), same fan."""
    u: SymplecticPotential
    g: SymplecticPotential

    def __post_init__(self):
        if self.u.polytope.normals != self.g.polytope.normals:
            raise NormalMismatch("pair polytopes must share the normal fan")

    @property
    def P(self):
        return self.u.polytope

    @property
    def Q(self):
        return self.g.polytope


@dataclass(frozen=True)
class TransitionSample:
    y: np.ndarray
    U: np.ndarray
    DU: np.ndarray
    eigenvalues: np.ndarray
    trace: float
    det: float
    compat_residual: float
    partial_bound: float

    def to_dict(self):
        return {
            "y": self.y.tolist(),
            "U": self.U.tolist(),
            "trace": self.trace,
            "det": self.det,
            "eigenvalues": self.eigenvalues.tolist(),
            "compat_residual": self.compat_residual,
            "partial_bound": self.partial_bound,
        }


# ---------------------------------------------------------------------------
# vertex correspondence
# ---------------------------------------------------------------------------

def matching_vertex(P, Q, vi):
    """Index of the Q vertex with the same active facet set as P vertex vi."""
    act = P.vertex_active[vi]
    for w, aw in enumerate(Q.vertex_active):
        if aw == act:
            return w
    raise NormalMismatch("no matching vertex in Q (fans differ)")


# ---------------------------------------------------------------------------
# chart-route transition (smooth through the boundary)
# ---------------------------------------------------------------------------

def _chart_transition(u, g, y, vgrad=None, vhess=None, vi=None,
                      tol_scale=1e-13, max_iter=100):
    """Transition and Jacobian at a point via the nearest vertex chart.

    Solves exp(grad g_q)(U) = exp(grad u_q)(y) in chart coordinates; both
    sides factor smoothly through the faces at the vertex.  Returns
    (U, DU, DU_chart, chart).
    """
    P, Q = u.polytope, g.polytope
    if vi is None:
        vi = P.nearest_vertex(y)
    qi = matching_vertex(P, Q, vi)
    a, DAu, _ = u.chart_moment(vi, y[None, :], vgrad=vgrad, vhess=vhess)
    a, DAu = a[0], DAu[0]

    ch = Q.vertex_chart(qi)
    qv, E, Einv = ch["vertex"], ch["E"], ch["Einv"]

    def eval_g(yh):
        pt = qv + E @ yh
        ag, DAg, _ = g.chart_moment(qi, pt[None, :])
        return ag[0], DAg[0]

    yh = np.zeros(len(a))
    ag, DAg = eval_g(yh)
    # first-order guess from the diagonal linearization at the vertex,
    # shrunk toward the vertex until it lands inside the chart
    yh = np.linalg.solve(DAg, a - ag)
    for _ in range(80):
        try:
            ag, DAg = eval_g(yh)
            break
        except BoundaryEvaluation:
            yh = 0.5 * yh
    else:
        raise NewtonDivergence("chart initial guess left the chart")
    r = ag - a
    rn = np.linalg.norm(r)
    target = tol_scale * (1.0 + np.abs(a).max())
    for _ in range(max_iter):
        if rn <= target:
            break
        step = np.linalg.solve(DAg, -r)
        alpha = 1.0
        for _ in range(60):
            trial = yh + alpha * step
            try:
                ag_t, DAg_t = eval_g(trial)
            except Exception:
                alpha *= 0.5
                continue
            nn = np.linalg.norm(ag_t - a)
            if nn < rn or nn <= target:
                yh, ag, DAg = trial, ag_t, DAg_t
                r, rn = ag - a, nn
                break
            alpha *= 0.5
        else:
            raise NewtonDivergence("chart Newton line search stalled")
    else:
        raise NewtonDivergence("chart Newton did not converge")

    U = qv + E @ yh
    DU_chart = np.linalg.solve(DAg, DAu)
    DU = E @ DU_chart @ Einv
    return U, DU, DU_chart, ch


def _chart_group(u, g, vi, Y, vgrad=None, vhess=None, warm_U=None,
                 tol_scale=1e-13, max_iter=100):
    """Vectorized chart transition for points sharing a nearest vertex.

    Returns (U, DU, Ginv) with Ginv the extended inverse Hessian of g at
    the image points (a free byproduct of the chart solve).
    """
    P, Q = u.polytope, g.polytope
    Y = np.atleast_2d(Y)
    m, n = Y.shape
    qi = matching_vertex(P, Q, vi)
    a, DAu, _ = u.chart_moment(vi, Y, vgrad=vgrad, vhess=vhess)

    ch = Q.vertex_chart(qi)
    qv, E, Einv, far = ch["vertex"], ch["E"], ch["Einv"], list(ch["far"])

    def eval_rows(yh):
        """(ag, DAg, ok) rows; invalid rows (chart left) get NaN."""
        pts = qv + yh @ E.T
        if far:
            ok = Q.facet_distances(pts)[:, far].min(axis=1) > 0
        else:
            ok = np.ones(len(pts), dtype=bool)
        ag = np.full_like(yh, np.nan)
        DAg = np.full(yh.shape + (n,), np.nan)
        if ok.any():
            ag[ok], DAg[ok], _ = g.chart_moment(qi, pts[ok])
        return ag, DAg, ok

    # initial guess: warm-start chart coordinates from a previous image
    # field, else the diagonal linearization at the vertex
    a0, DA0, _ = g.chart_moment(qi, qv[None, :])
    s0 = np.diagonal(DA0[0]).copy()
    yh = (a - a0) / s0
    if warm_U is not None:
        dw = Q.facet_distances(warm_U)
        cand = dw[:, list(ch["facets"])]
        good = np.isfinite(cand).all(axis=1)
        if far:
            good &= dw[:, far].min(axis=1) > 0
        yh[good] = cand[good]

    ag, DAg, ok = eval_rows(yh)
    if not ok.all():
        bad = ~ok
        yh[bad] = ((a - a0) / s0)[bad]
        ag2, DAg2, ok2 = eval_rows(yh[bad])
        # shrink toward the vertex (always strictly inside the far facets)
        # until every row is inside the chart
        for _ in range(80):
            if ok2.all():
                break
            yh[np.nonzero(bad)[0][~ok2]] *= 0.5
            ag2, DAg2, ok2 = eval_rows(yh[bad])
        if not ok2.all():
            raise NewtonDivergence("chart initial guess left the chart")
        ag[bad], DAg[bad] = ag2, DAg2

    R = ag - a
    Rn = np.linalg.norm(R, axis=1)
    target = tol_scale * (1.0 + np.abs(a).max(axis=1))
    active = Rn > target
    for _ in range(max_iter):
        if not active.any():
            break
        ia = np.nonzero(active)[0]
        step = np.linalg.solve(DAg[ia], -R[ia][..., None])[..., 0]
        alpha = np.ones(len(ia))
        done = np.zeros(len(ia), dtype=bool)
        for _ in range(60):
            trial = yh[ia] + alpha[:, None] * step
            ag_t, DAg_t, ok_t = eval_rows(trial)
            nt = np.linalg.norm(ag_t - a[ia], axis=1)
            accept = ok_t & ~done & ((nt < Rn[ia]) | (nt <= target[ia]))
            if accept.any():
                sel = ia[accept]
                yh[sel] = trial[accept]
                ag[sel], DAg[sel] = ag_t[accept], DAg_t[accept]
                R[sel] = ag[sel] - a[sel]
                Rn[sel] = nt[accept]
                done |= accept
            if done.all():
                break
            alpha[~done] *= 0.5
        if not done.all():
            raise NewtonDivergence("chart line search stalled on a point")
        active = Rn > target
    else:
        raise NewtonDivergence("batched chart Newton did not converge")

    U = qv + yh @ E.T
    DU_chart = np.linalg.solve(DAg, DAu)
    DU = E @ DU_chart @ Einv
    # extended inverse Hessian of g at U, in the same chart
    Mg = np.linalg.solve(DAg, ag[:, :, None] * np.eye(n))
    Mg = 0.5 * (Mg + np.swapaxes(Mg, -1, -2))
    Ginv = E @ Mg @ E.T
    return U, DU, Ginv


# ---------------------------------------------------------------------------
# batch evaluation
# ---------------------------------------------------------------------------

def _core(u, g, Y, grad_u, hess_u, vgrad=None, vhess=None, warm_U=None):
    """Route rows of Y through the interior or chart path.

    grad_u/hess_u are consumed on interior rows, vgrad/vhess (correction
    derivatives) on boundary rows; either may be None when a caller knows
    no row of that kind occurs.  Returns (U, DU, interior, Ginv) with Ginv
    the extended inverse Hessian of g at the image points.
    """
    P = u.polytope
    Y = np.atleast_2d(Y)
    m, n = Y.shape
    dmin = P.facet_distances(Y).min(axis=1)
    interior = dmin > u.h_switch
    U = np.empty((m, n))
    DU = np.empty((m, n, n))
    Ginv = np.empty((m, n, n))
    if interior.any():
        warm = warm_U[interior] if warm_U is not None else None
        Z = legendre_dual_grad_batch(g, grad_u[interior], warm)
        Gi = g.inverse_hess_batch(Z)
        U[interior] = Z
        DU[interior] = Gi @ hess_u[interior]
        Ginv[interior] = Gi
    bidx = np.nonzero(~interior)[0]
    if len(bidx):
        # chart anchor: nearest vertex among those incident to every facet
        # the point is close to (a mid-edge point must get a chart on that
        # edge's facet, not the globally nearest corner)
        dist2 = ((Y[bidx][:, None, :] - P.vertices[None, :, :]) ** 2).sum(-1)
        near = P.facet_distances(Y[bidx]) <= u.h_switch
        incid = np.zeros((len(P.vertices), P.num_facets), dtype=bool)
        for vi, act in enumerate(P.vertex_active):
            incid[vi, list(act)] = True
        eligible = ~(near[:, None, :] & ~incid[None, :, :]).any(axis=-1)
        dist2 = np.where(eligible, dist2, np.inf)
        vis = np.argmin(dist2, axis=1)
        warm = warm_U[bidx] if warm_U is not None else None
        for vi in np.unique(vis):
            msk = vis == vi
            sel = bidx[msk]
            Us, DUs, Gs = _chart_group(
                u, g, int(vi), Y[sel],
                vgrad=vgrad[sel] if vgrad is not None else None,
                vhess=vhess[sel] if vhess is not None else None,
                warm_U=warm[msk] if warm is not None else None)
            U[sel], DU[sel], Ginv[sel] = Us, DUs, Gs
    return U, DU, interior, Ginv


def transition_batch(pair, Y, warm_U=None):
    """U(y) and DU(y) for rows of Y (both routes); returns (U, DU, interior)."""
    u = pair.u
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    dmin = pair.P.facet_distances(Y).min(axis=1)
    interior = dmin > u.h_switch
    grad_u = np.zeros_like(Y)
    hess_u = np.zeros(Y.shape + (Y.shape[1],))
    if interior.any():
        grad_u[interior] = u.grad(Y[interior])
        hess_u[interior] = u.hess(Y[interior])
    vg = vh = None
    if not interior.all():
        corr = u.correction
        vg = corr.grad(Y)
        vh = corr.hess(Y)
    U, DU, interior, _ = _core(u, pair.g, Y, grad_u, hess_u,
                               vgrad=vg, vhess=vh, warm_U=warm_U)
    return U, DU, interior


def transition_at(pair, y):
    """Full TransitionSample at one point of the closed polytope."""
    u, g = pair.u, pair.g
    y = np.asarray(y, dtype=float)
    U, DU, interior = transition_batch(pair, y[None, :])
    U, DU = U[0], DU[0]

    # face preservation check
    dP = pair.P.facet_distances(y)
    dQ = pair.Q.facet_distances(U)
    on = np.abs(dP) < _FACE_TOL
    if on.any() and np.abs(dQ[on]).max() > _FACE_IMAGE_TOL:
        raise FaceMismatch(
            f"U left the corresponding face by {np.abs(dQ[on]).max():.3e}")

    Ginv = g.inverse_hess_batch(U[None, :])[0]
    M = Ginv @ DU.T
    compat = float(np.abs(M - M.T).max())

    if interior[0] and dQ.min() > 1e-10:
        G = g.hess(U)
        partial = float(np.trace(DU @ Ginv @ DU.T @ G))
        try:
            eig = scipy.linalg.eigh(u.hess(y), G, eigvals_only=True)
        except (np.linalg.LinAlgError, ValueError):
            eig = np.sort(np.linalg.eigvals(DU).real)
    else:
        # on the boundary the norm identity collapses to tr(DU^2)
        partial = float(np.trace(DU @ DU))
        eig = np.sort(np.linalg.eigvals(DU).real)

    return TransitionSample(
        y=y, U=U, DU=DU, eigenvalues=np.asarray(eig, dtype=float),
        trace=float(np.trace(DU)), det=float(np.linalg.det(DU)),
        compat_residual=compat, partial_bound=partial)


# ---------------------------------------------------------------------------
# compatibility and characteristic diagnostics
# ---------------------------------------------------------------------------

def compatibility_residual(pair, y):
    """max_ij asymmetry of g^{ik}(U) dU^j/dy^k (zero analytically)."""
    return transition_at(pair, y).compat_residual


def compatibility_residual_fd(pair, y, h):
    """Same residual but with DU from a central-difference Jacobian of U."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    DU = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        Up, _, _ = transition_batch(pair, (y + e)[None, :])
        Um, _, _ = transition_batch(pair, (y - e)[None, :])
        DU[:, j] = (Up[0] - Um[0]) / (2 * h)
    U, _, _ = transition_batch(pair, y[None, :])
    Ginv = pair.g.inverse_hess_batch(U)[0]
    M = Ginv @ DU.T
    return float(np.abs(M - M.T).max())


def characteristic_check(pair, y, t_values):
    """det(I + t DU) for each t (positive, log-concave for t >= 0)."""
    s = transition_at(pair, y)
    n = len(s.y)
    return [float(np.linalg.det(np.eye(n) + t * s.DU)) for t in t_values]


# ---------------------------------------------------------------------------
# quadrature support
# ---------------------------------------------------------------------------

def _polygon_clip(poly, normal, offset):
    """Sutherland-Hodgman clip of a 2-D polygon against <u,y>+b >= 0."""
    out = []
    k = len(poly)
    for i in range(k):
        a, b = poly[i], poly[(i + 1) % k]
        da = normal @ a + offset
        db = normal @ b + offset
        if da >= 0:
            out.append(a)
            if db < 0:
                out.append(a + (b - a) * (da / (da - db)))
        elif db >= 0:
            out.append(a + (b - a) * (da / (da - db)))
    return out


def _polygon_area_centroid(poly):
    pts = np.asarray(poly)
    x, y = pts[:, 0], pts[:, 1]
    xs, ys = np.roll(x, -1), np.roll(y, -1)
    cross = x * ys - xs * y
    area = 0.5 * cross.sum()
    if abs(area) < 1e-300:
        return 0.0, pts.mean(axis=0)
    cx = ((x + xs) * cross).sum() / (6 * area)
    cy = ((y + ys) * cross).sum() / (6 * area)
    return abs(area), np.array([cx, cy])


def _hull_volume_centroid(points, n):
    """Volume and centroid of the hull of float points in R^n (n >= 2)."""
    from scipy.spatial import ConvexHull
    try:
        hull = ConvexHull(points)
    except Exception:
        return 0.0, points.mean(axis=0)
    c0 = points[hull.vertices].mean(axis=0)
    vol = 0.0
    cent = np.zeros(n)
    from math import factorial
    for simp in hull.simplices:
        vs = points[simp]
        mat = vs - c0
        v = abs(np.linalg.det(mat)) / factorial(n)
        vol += v
        cent += v * (vs.sum(axis=0) + c0) / (n + 1)
    if vol == 0.0:
        return 0.0, c0
    return vol, cent / vol


def _clip_cell(P, lo, hi):
    """Clipped volume and centroid of the box [lo, hi] inside P (floats)."""
    n = P.dim
    if n == 2:
        poly = [np.array([lo[0], lo[1]]), np.array([hi[0], lo[1]]),
                np.array([hi[0], hi[1]]), np.array([lo[0], hi[1]])]
        for u, b in zip(P.normals_arr, P.offsets_arr):
            poly = _polygon_clip(poly, u, b)
            if len(poly) < 3:
                return 0.0, None
        area, cent = _polygon_area_centroid(poly)
        return area, cent
    # generic n: brute-force vertex enumeration of box-facet system
    import itertools
    rows = list(P.normals_arr) + [e for e in np.eye(n)] \
        + [-e for e in np.eye(n)]
    offs = list(P.offsets_arr) + list(-lo) + list(hi)
    rows = np.array(rows)
    offs = np.array(offs)
    verts = []
    for subset in itertools.combinations(range(len(rows)), n):
        A = rows[list(subset)]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        x = np.linalg.solve(A, -offs[list(subset)])
        if np.min(rows @ x + offs) >= -1e-10:
            verts.append(x)
    if len(verts) <= n:
        return 0.0, None
    pts = np.unique(np.round(np.array(verts), 12), axis=0)
    if len(pts) <= n:
        return 0.0, None
    return _hull_volume_centroid(pts, n)


def cell_decomposition(P, cells_across):
    """Quadrature points (clipped-cell centroids) and weights covering P.

    Interior cells use their exact box volume and center; boundary cells
    use the exact clipped volume and its centroid.  Weights sum to vol(P).
    """
    n = P.dim
    lo = P.vertices.min(axis=0)
    hi = P.vertices.max(axis=0)
    h = (hi - lo).max() / cells_across
    counts = np.maximum(1, np.ceil((hi - lo) / h - 1e-12).astype(int))
    pts, wts = [], []
    for idx in np.ndindex(*counts):
        clo = lo + np.array(idx) * h
        chi = np.minimum(clo + h, hi)
        corners = np.array(list(np.ndindex(*(2,) * n))) * (chi - clo) + clo
        d = P.facet_distances(corners)
        if d.min() >= 0:
            pts.append((clo + chi) / 2)
            wts.append(np.prod(chi - clo))
            continue
        if (d.max(axis=0) <= 0).any():
            continue
        vol, cent = _clip_cell(P, clo, chi)
        if vol > 0 and cent is not None:
            pts.append(cent)
            wts.append(vol)
    return np.array(pts), np.array(wts)


def _simplex_quad(verts, order):
    """Duffy-mapped tensor Gauss points/weights on a p-simplex."""
    verts = np.asarray(verts, dtype=float)
    p = verts.shape[0] - 1
    x, w = np.polynomial.legendre.leggauss(order)
    x = (x + 1) / 2
    w = w / 2
    grids = np.meshgrid(*([x] * p), indexing="ij")
    wgrids = np.meshgrid(*([w] * p), indexing="ij")
    z = np.stack([gr.ravel() for gr in grids], axis=1)       # (m, p)
    wq = np.prod(np.stack([wg.ravel() for wg in wgrids], axis=1), axis=1)
    # collapsed coordinates: u_i = z_i * prod_{j<i} (1 - z_j), with
    # jacobian prod_{i<p} (1 - z_i)^{p-1-i} relative to the unit cube
    u = np.empty_like(z)
    jac = np.ones(len(z))
    rem = np.ones(len(z))
    for i in range(p):
        u[:, i] = z[:, i] * rem
        if i < p - 1:
            rem = rem * (1 - z[:, i])
            jac *= rem
    mat = verts[1:] - verts[0]
    det = abs(np.linalg.det(mat))
    pts = verts[0] + u @ mat
    return pts, wq * det * jac


def _face_quadrature_scoords(face, order):
    """Quadrature in tangent coordinates over a proper face."""
    from .polytope import _face_scoords_exact
    sverts = np.array([[float(c) for c in s]
                       for s in _face_scoords_exact(face)])
    p = face.dim
    if p == 1:
        lo, hi = sverts.min(), sverts.max()
        x, w = np.polynomial.legendre.leggauss(order)
        pts = ((x + 1) / 2 * (hi - lo) + lo)[:, None]
        wts = w / 2 * (hi - lo)
        return pts, wts
    from scipy.spatial import ConvexHull
    hull = ConvexHull(sverts)
    c0 = sverts[hull.vertices].mean(axis=0)
    pts, wts = [], []
    for simp in hull.simplices:
        sp, sw = _simplex_quad(np.vstack([c0[None, :], sverts[simp]]), order)
        pts.append(sp)
        wts.append(sw)
    return np.vstack(pts), np.concatenate(wts)


def face_trace_integral(pair, face, quad_order=24):
    """Quadrature of tr(DU|_TF) over a face in the canonical measure.

    For the top face this is the plain integral of tr DU over P.  The value
    is a class invariant: it must match the mixed-volume slope from the
    polytope module for any valid potentials.
    """
    u, g = pair.u, pair.g
    P = pair.P
    n = P.dim
    if face.dim == n:
        return trace_integral_quadrature(pair, quad_order)
    if face.dim < 1:
        raise ValueError("face must have dimension >= 1")
    spts, wts = _face_quadrature_scoords(face, quad_order)
    T = face.tangent_matrix()
    v0 = P.vertices[face.anchor_id]
    ypts = v0 + spts @ T.T
    total = 0.0
    fverts = np.array(face.vertex_ids)
    for yp, w in zip(ypts, wts):
        dv = ((P.vertices[fverts] - yp) ** 2).sum(axis=1)
        vi = int(fverts[np.argmin(dv)])
        _, _, DU_chart, ch = _chart_transition(u, g, yp, vi=vi)
        tang = [pos for pos, fid in enumerate(ch["facets"])
                if fid not in face.facet_ids]
        total += w * DU_chart[tang, tang].sum()
    return float(total)


def trace_integral_quadrature(pair, quad_order=64):
    """Integral of tr DU over P by clipped-cell centroid quadrature."""
    pts, wts = cell_decomposition(pair.P, quad_order)
    _, DU, _ = transition_batch(pair, pts)
    tr = np.trace(DU, axis1=-2, axis2=-1)
    return float((wts * tr).sum())


def energy(pair, quad_order=64):
    """E = 1/2 integral over P of (tr DU)^2 in the lattice measure."""
    pts, wts = cell_decomposition(pair.P, quad_order)
    _, DU, _ = transition_batch(pair, pts)
    tr = np.trace(DU, axis1=-2, axis2=-1)
    return float(0.5 * (wts * tr ** 2).sum())


# ---------------------------------------------------------------------------
# inverse transition
# ---------------------------------------------------------------------------

def inverse_point(pair, z, y0=None, tol=1e-11, max_iter=200):
    """The unique y with U(y) = z, by damped Newton using DU."""
    z = np.asarray(z, dtype=float)
    P = pair.P
    y = np.array(y0, dtype=float) if y0 is not None else P.interior_point()
    target = tol * (1.0 + np.linalg.norm(z))
    U, DU, _ = transition_batch(pair, y[None, :])
    r = U[0] - z
    rn = np.linalg.norm(r)
    for _ in range(max_iter):
        if rn < target:
            return y
        step = np.linalg.solve(DU[0], -r)
        alpha = 1.0
        for _ in range(60):
            trial = y + alpha * step
            if np.min(P.facet_distances(trial)) > 0:
                Ut, DUt, _ = transition_batch(pair, trial[None, :])
                nn = np.linalg.norm(Ut[0] - z)
                if nn < rn:
                    y, U, DU = trial, Ut, DUt
                    r, rn = U[0] - z, nn
                    break
            alpha *= 0.5
        else:
            raise NewtonDivergence("inverse_point line search stalled")
    raise NewtonDivergence("inverse_point did not converge")
