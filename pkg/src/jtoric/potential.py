"""Symplectic potentials with Guillemin boundary behavior.

A potential is u(y) = sum_i d_i(y) log d_i(y) + v(y) with d_i the facet
distances and v a smooth correction on the closed polytope (normalized
without the conventional 1/2 factor).  The inverse Hessian
extends smoothly to the boundary and is evaluated there through vertex
charts; interior evaluation is a plain matrix inverse.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .errors import BoundaryEvaluation, NewtonDivergence, NoVertexChart
from .polytope import DelzantPolytope

__all__ = [
    "SymplecticPotential",
    "ZeroCorrection",
    "ExprCorrection",
    "GridCorrection",
    "canonical_potential",
    "potential_from_expression",
    "eval_potential",
    "grad",
    "hess",
    "inverse_hess_extended",
    "legendre_dual_grad",
]

_INTERIOR_FLOOR = 1e-12
_H_SWITCH_FACTOR = 1e-3


# ---------------------------------------------------------------------------
# smooth corrections
# ---------------------------------------------------------------------------

class ZeroCorrection:
    """The canonical potential: v identically zero."""

    smooth_on_closure = True

    def value(self, y):
        y = np.asarray(y, dtype=float)
        return np.zeros(y.shape[:-1])

    def grad(self, y):
        y = np.asarray(y, dtype=float)
        return np.zeros(y.shape)

    def hess(self, y):
        y = np.asarray(y, dtype=float)
        n = y.shape[-1]
        return np.zeros(y.shape[:-1] + (n, n))

    def third(self, y):
        y = np.asarray(y, dtype=float)
        n = y.shape[-1]
        return np.zeros(y.shape[:-1] + (n, n, n))

    def describe(self):
        return {"canonical": True}


class ExprCorrection:
    """Closed-form correction parsed from an expression in y1..yn.

    Allowed operators: + - * / pow exp log sin cos.  Derivatives up to
    third order are generated symbolically and vectorized with numpy.
    """

    smooth_on_closure = True

    def __init__(self, expression, n):
        self.expression = str(expression)
        self.n = n
        syms = sp.symbols(f"y1:{n + 1}")
        local = {f"y{i + 1}": syms[i] for i in range(n)}
        local.update({"exp": sp.exp, "log": sp.log, "sin": sp.sin,
                      "cos": sp.cos, "pow": sp.Pow})
        expr = sp.sympify(self.expression, locals=local)
        bad = expr.free_symbols - set(syms)
        if bad:
            raise ValueError(f"unknown symbols in correction: {bad}")
        self._f = sp.lambdify(syms, expr, "numpy")
        g = [sp.diff(expr, s) for s in syms]
        h = [[sp.diff(gi, s) for s in syms] for gi in g]
        t = [[[sp.diff(hij, s) for s in syms] for hij in hi] for hi in h]
        self._g = [sp.lambdify(syms, gi, "numpy") for gi in g]
        self._h = [[sp.lambdify(syms, e, "numpy") for e in row] for row in h]
        self._t = [[[sp.lambdify(syms, e, "numpy") for e in row]
                    for row in plane] for plane in t]

    def _args(self, y):
        y = np.asarray(y, dtype=float)
        return [y[..., i] for i in range(self.n)], y.shape[:-1]

    @staticmethod
    def _bc(val, shape):
        return np.broadcast_to(np.asarray(val, dtype=float), shape).copy()

    def value(self, y):
        args, shape = self._args(y)
        return self._bc(self._f(*args), shape)

    def grad(self, y):
        args, shape = self._args(y)
        out = np.empty(shape + (self.n,))
        for i in range(self.n):
            out[..., i] = self._bc(self._g[i](*args), shape)
        return out

    def hess(self, y):
        args, shape = self._args(y)
        out = np.empty(shape + (self.n, self.n))
        for i in range(self.n):
            for j in range(self.n):
                out[..., i, j] = self._bc(self._h[i][j](*args), shape)
        return out

    def third(self, y):
        args, shape = self._args(y)
        out = np.empty(shape + (self.n, self.n, self.n))
        for i in range(self.n):
            for j in range(self.n):
                for k in range(self.n):
                    out[..., i, j, k] = self._bc(self._t[i][j][k](*args),
                                                 shape)
        return out

    def describe(self):
        return {"v": self.expression}


class GridCorrection:
    """Bicubic spline correction from values on a regular grid (n = 2)."""

    smooth_on_closure = True

    def __init__(self, x_nodes, y_nodes, values):
        from scipy.interpolate import RectBivariateSpline
        self.n = 2
        self._spl = RectBivariateSpline(x_nodes, y_nodes,
                                        np.asarray(values, dtype=float),
                                        kx=3, ky=3)

    def _eval(self, y, dx, dy):
        y = np.asarray(y, dtype=float)
        flat = y.reshape(-1, 2)
        out = self._spl(flat[:, 0], flat[:, 1], dx=dx, dy=dy, grid=False)
        return out.reshape(y.shape[:-1])

    def value(self, y):
        return self._eval(y, 0, 0)

    def grad(self, y):
        return np.stack([self._eval(y, 1, 0), self._eval(y, 0, 1)], axis=-1)

    def hess(self, y):
        xx = self._eval(y, 2, 0)
        xy = self._eval(y, 1, 1)
        yy = self._eval(y, 0, 2)
        h = np.stack([np.stack([xx, xy], axis=-1),
                      np.stack([xy, yy], axis=-1)], axis=-2)
        return h

    def describe(self):
        return {"v": "<grid>"}


# ---------------------------------------------------------------------------
# the potential
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymplecticPotential:
    polytope: DelzantPolytope
    correction: object = field(default_factory=ZeroCorrection)

    @property
    def h_switch(self):
        return _H_SWITCH_FACTOR * self.polytope.diameter

    # -- canonical (log) part, vectorized over leading axes ---------------

    def _dists(self, y, floor=None):
        d = self.polytope.facet_distances(y)
        if floor is not None and np.min(d) <= floor:
            raise BoundaryEvaluation(
                f"point within {floor:g} of the boundary")
        return d

    def value(self, y):
        d = self._dists(y, _INTERIOR_FLOOR)
        return (d * np.log(d)).sum(axis=-1) + self.correction.value(y)

    def grad(self, y):
        d = self._dists(y, _INTERIOR_FLOOR)
        return ((1.0 + np.log(d)) @ self.polytope.normals_arr
                + self.correction.grad(y))

    def hess(self, y):
        d = self._dists(y, _INTERIOR_FLOOR)
        U = self.polytope.normals_arr
        h = np.einsum("...k,ki,kj->...ij", 1.0 / d, U, U)
        return h + self.correction.hess(y)

    def third(self, y):
        """Third derivatives (needed for derivatives of the inverse Hessian)."""
        d = self._dists(y, _INTERIOR_FLOOR)
        U = self.polytope.normals_arr
        t = -np.einsum("...k,ki,kj,kl->...ijl", 1.0 / d ** 2, U, U, U)
        if hasattr(self.correction, "third"):
            t = t + self.correction.third(y)
        return t

    # -- vertex-chart quantities ------------------------------------------

    def chart_moment(self, vi, y, vgrad=None, vhess=None):
        """Smooth chart data at vertex chart vi for points y (m, n).

        Returns (a, DA, yhat):
          a    (m, n)   a_i = exp(du_q/dyhat^i), smooth through the faces at q
          DA   (m, n, n) Jacobian da_i/dyhat^j
          yhat (m, n)   chart coordinates (= the n facet distances at q)

        Valid while the distances to facets away from the vertex stay
        positive.  vgrad/vhess override the correction derivatives when the
        caller holds them in discrete form (grid flows).
        """
        if vgrad is None and not getattr(self.correction,
                                         "smooth_on_closure", False):
            raise NoVertexChart(
                "correction is not defined on the closed polytope")
        P = self.polytope
        ch = P.vertex_chart(vi)
        y = np.atleast_2d(np.asarray(y, dtype=float))
        m, n = y.shape
        d = P.facet_distances(y)                       # (m, k)
        yhat = d[:, ch["facets"]]                      # chart coords
        far = list(ch["far"])
        dfar = d[:, far]                               # (m, kf)
        if far and np.min(dfar) <= 0:
            raise BoundaryEvaluation(
                "point outside the validity region of the vertex chart")
        E = ch["E"]
        vg = vgrad if vgrad is not None else self.correction.grad(y)
        vh = vhess if vhess is not None else self.correction.hess(y)
        # log s_i = 1 + <e_i, grad v> + sum_far expo[k,i] (1 + log d_k)
        logs = 1.0 + vg @ E
        if far:
            logs = logs + (1.0 + np.log(dfar)) @ ch["expo"]
        s = np.exp(logs)                               # (m, n)
        a = yhat * s
        # d(log s_i)/dyhat^j = <e_i, Hess v e_j> + sum_far expo[k,i] <u_k,e_j>/d_k
        dlogs = np.einsum("ri,mrt,tj->mij", E, vh, E)
        if far:
            Ufar = P.normals_arr[far] @ E              # (kf, n): <u_k, e_j>
            dlogs = dlogs + np.einsum("ki,mk,kj->mij", ch["expo"],
                                      1.0 / dfar, Ufar)
        DA = s[:, :, None] * dlogs * yhat[:, :, None]
        DA[:, np.arange(n), np.arange(n)] += s
        return a, DA, yhat

    def inverse_hess_batch(self, y):
        """Extended inverse Hessian at points y (m, n), route per point."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        m, n = y.shape
        out = np.empty((m, n, n))
        d = self.polytope.facet_distances(y)
        interior = d.min(axis=1) > self.h_switch
        if interior.any():
            h = self.hess(y[interior])
            inv = np.linalg.inv(h)
            out[interior] = 0.5 * (inv + np.swapaxes(inv, -1, -2))
        for idx in np.nonzero(~interior)[0]:
            out[idx] = self._inverse_hess_chart(y[idx])
        return out

    def _inverse_hess_chart(self, y):
        P = self.polytope
        # anchor at the nearest vertex incident to every nearby facet, so
        # the far-facet distances of the chart stay positive at y
        near = set(np.nonzero(
            P.facet_distances(y[None, :])[0] <= self.h_switch)[0])
        dist2 = ((P.vertices - y) ** 2).sum(axis=1)
        vi = None
        for cand in np.argsort(dist2):
            if near <= P.vertex_active[cand]:
                vi = int(cand)
                break
        if vi is None:
            vi = P.nearest_vertex(y)
        ch = P.vertex_chart(vi)
        a, DA, _ = self.chart_moment(vi, y[None, :])
        # chart inverse Hessian = DA^{-1} diag(a); transform back with E
        Mc = np.linalg.solve(DA[0], np.diag(a[0]))
        Mc = 0.5 * (Mc + Mc.T)
        E = ch["E"]
        return E @ Mc @ E.T

    # -- convexity sampling -------------------------------------------------

    def is_convex_at(self, y):
        try:
            h = self.hess(y)
        except BoundaryEvaluation:
            return True
        ev = np.linalg.eigvalsh(np.atleast_2d(h.reshape(-1, h.shape[-1],
                                                        h.shape[-1])))
        return bool(ev.min() > 0)

    def describe(self):
        return self.correction.describe()


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------

def canonical_potential(P):
    """Guillemin potential with correction v = 0."""
    return SymplecticPotential(P, ZeroCorrection())


def potential_from_expression(P, expression):
    return SymplecticPotential(P, ExprCorrection(expression, P.dim))


def eval_potential(u, y):
    return float(u.value(np.asarray(y, dtype=float)))


def grad(u, y):
    return u.grad(np.asarray(y, dtype=float))


def hess(u, y):
    return u.hess(np.asarray(y, dtype=float))


def inverse_hess_extended(u, y):
    """Inverse Hessian extended smoothly to the closed polytope."""
    return u.inverse_hess_batch(np.asarray(y, dtype=float)[None, :])[0]


# ---------------------------------------------------------------------------
# Legendre-dual gradient (damped Newton)
# ---------------------------------------------------------------------------

def legendre_dual_grad(g, x, z0=None, tol=1e-10, max_iter=200):
    """The unique interior z with grad g(z) = x.

    Damped Newton: the step is halved until the iterate stays interior and
    the residual norm decreases (the gradient blows up at the boundary, so
    undamped Newton overshoots).
    """
    x = np.asarray(x, dtype=float)
    z = (np.array(z0, dtype=float) if z0 is not None
         else g.polytope.interior_point())
    target = tol * (1.0 + np.linalg.norm(x))
    r = g.grad(z) - x
    rn = np.linalg.norm(r)
    for _ in range(max_iter):
        if rn < target:
            return z
        step = np.linalg.solve(g.hess(z), -r)
        alpha = 1.0
        for _ in range(60):
            znew = z + alpha * step
            if np.min(g.polytope.facet_distances(znew)) > _INTERIOR_FLOOR:
                rnew = g.grad(znew) - x
                nn = np.linalg.norm(rnew)
                if nn < rn:
                    z, r, rn = znew, rnew, nn
                    break
            alpha *= 0.5
        else:
            raise NewtonDivergence("line search failed to reduce residual")
    raise NewtonDivergence(f"no convergence in {max_iter} iterations")


def legendre_dual_grad_batch(g, X, Z0=None, tol=1e-10, max_iter=200):
    """Vectorized legendre_dual_grad over rows of X (m, n)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m, n = X.shape
    if Z0 is None:
        Z = np.tile(g.polytope.interior_point(), (m, 1))
    else:
        Z = np.array(Z0, dtype=float).copy()
        bad = g.polytope.facet_distances(Z).min(axis=1) <= 0
        if bad.any():
            Z[bad] = g.polytope.interior_point()
    target = tol * (1.0 + np.linalg.norm(X, axis=1))
    R = g.grad(Z) - X
    Rn = np.linalg.norm(R, axis=1)
    active = Rn >= target
    for _ in range(max_iter):
        if not active.any():
            return Z
        ia = np.nonzero(active)[0]
        Za = Z[ia]
        step = np.linalg.solve(g.hess(Za), -R[ia][..., None])[..., 0]
        alpha = np.ones(len(ia))
        done = np.zeros(len(ia), dtype=bool)
        for _ in range(60):
            trial = Za + alpha[:, None] * step
            ok = (g.polytope.facet_distances(trial).min(axis=1)
                  > _INTERIOR_FLOOR)
            rtrial = np.full_like(trial, np.nan)
            if ok.any():
                rtrial[ok] = g.grad(trial[ok]) - X[ia[ok]]
            ntrial = np.linalg.norm(rtrial, axis=1)
            accept = ok & (ntrial < Rn[ia]) & ~done
            if accept.any():
                sel = ia[accept]
                Z[sel] = trial[accept]
                R[sel] = rtrial[accept]
                Rn[sel] = ntrial[accept]
                done |= accept
            if done.all():
                break
            alpha[~done] *= 0.5
        if not done.all():
            raise NewtonDivergence("line search failed on a batch point")
        active = Rn >= target
    if active.any():
        raise NewtonDivergence(f"no convergence in {max_iter} iterations")
    return Z
