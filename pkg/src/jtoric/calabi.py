"""Radial reduction on the blowup polytope (simplex shell).

The polytope {y >= 0, 1 <= sum y <= b} carries symmetric potentials that
depend on y only through B = sum y; the transition map reduces to a single
increasing profile f : [1, b] -> [1, a] and the flow to a 1-D parabolic
equation in f.  This module classifies the (a, b) regimes, produces the
closed-form static and limit profiles, runs the 1-D flow, and embeds the
profile back into the full polytope for cross-validation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import JToricError, NoRoot
from .kernels import radial_advance
from .polytope import build_polytope

__all__ = [
    "RadialProfile",
    "CaseTag",
    "RadialField",
    "classify",
    "solve_lambda",
    "static_case1",
    "limit_case3",
    "linear_initial_profile",
    "canonical_initial_profile",
    "radial_run",
    "embed_radial",
    "squeeze_point",
    "radial_energy",
    "calabi_polytope",
]


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

@dataclass
class RadialProfile:
    """Increasing profile f on a uniform grid over [1, b], f(1)=1, f(b)=a."""
    n: int
    a: float
    b: float
    B_grid: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        self.B_grid = np.asarray(self.B_grid, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        if len(self.B_grid) != len(self.f):
            raise ValueError("grid/value length mismatch")
        if not (self.a > 1 and self.b > 1):
            raise ValueError("need a > 1 and b > 1")

    @property
    def h(self):
        return float(self.B_grid[1] - self.B_grid[0])

    def fprime(self):
        """Second-order finite-difference derivative on the grid."""
        f, h = self.f, self.h
        out = np.empty_like(f)
        out[1:-1] = (f[2:] - f[:-2]) / (2 * h)
        out[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
        out[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
        return out

    def trace(self):
        """tr DU on the grid: f' + (n-1) f / B."""
        return self.fprime() + (self.n - 1) * self.f / self.B_grid

    def det(self):
        """det DU on the grid: f' (f/B)^{n-1}."""
        return self.fprime() * (self.f / self.B_grid) ** (self.n - 1)

    def is_monotone(self, slack=1e-12):
        return bool(np.min(np.diff(self.f)) >= -slack)

    def copy(self):
        return RadialProfile(self.n, self.a, self.b,
                             self.B_grid.copy(), self.f.copy())


@dataclass(frozen=True)
class CaseTag:
    tag: str                 # Case1 | Case2 | Case3
    nc: float
    lam: float = None
    nc_prime: float = None


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def compute_nc_radial(n, a, b):
    """nc = n (a b^{n-1} - 1) / (b^n - 1)."""
    return n * (a * b ** (n - 1) - 1.0) / (b ** n - 1.0)


def classify(n, a, b, tol=1e-12):
    """Case1 (nc > n-1), Case2 (nc = n-1), Case3 (nc < n-1, with lambda)."""
    if n < 2 or a <= 1 or b <= 1:
        raise ValueError("need n >= 2, a > 1, b > 1")
    nc = compute_nc_radial(n, a, b)
    if nc > (n - 1) + tol:
        return CaseTag("Case1", nc)
    if nc < (n - 1) - tol:
        lam = solve_lambda(n, a, b)
        return CaseTag("Case3", nc, lam=lam, nc_prime=(n - 1) / lam)
    return CaseTag("Case2", nc)


def solve_lambda(n, a, b):
    """Root lambda in (1, b) of (n-1) b / x + x^{n-1} / b^{n-1} = n a.

    Exists only in the strictly unstable regime; the returned root is also
    checked against the equivalent slope expression for nc'.
    """
    def phi(x):
        return (n - 1) * b / x + x ** (n - 1) / b ** (n - 1) - n * a

    lo, hi = 1.0, b
    flo, fhi = phi(lo), phi(hi)
    if not (flo > 1e-14 and fhi < 0):
        raise NoRoot(
            f"no interior root for n={n}, a={a}, b={b} "
            f"(endpoint signs {flo:.3e}, {fhi:.3e})")
    lam = brentq(phi, lo, hi, xtol=1e-14, rtol=8.9e-16)
    if abs(phi(lam)) > 1e-12:
        raise NoRoot(f"root residual {phi(lam):.3e} too large")
    nc_p = (n - 1) / lam
    nc_p_alt = n * (a * b ** (n - 1) - lam ** (n - 1)) / (b ** n - lam ** n)
    if abs(nc_p - nc_p_alt) > 1e-10:
        raise JToricError(
            f"slope identity violated: {nc_p!r} vs {nc_p_alt!r}")
    return lam


# ---------------------------------------------------------------------------
# closed-form profiles
# ---------------------------------------------------------------------------

def _grid(b, num_nodes):
    return np.linspace(1.0, b, num_nodes)


def static_case1(n, a, b, num_nodes=2048):
    """Stationary profile f(B) = c B + (1-c) B^{1-n} (trace identically nc)."""
    tag = classify(n, a, b)
    if tag.tag != "Case1":
        raise ValueError(f"static profile requires Case1, got {tag.tag}")
    c = (a * b ** (n - 1) - 1.0) / (b ** n - 1.0)
    B = _grid(b, num_nodes)
    f = c * B + (1.0 - c) * B ** (1 - n)
    if abs(f[-1] - a) > 1e-12:
        raise JToricError(f"endpoint identity failed: f(b) = {f[-1]!r}")
    return RadialProfile(n, a, b, B, f)


def limit_case3(n, a, b, num_nodes=2048):
    """Limit profile: f = 1 on [1, lam], then the linear-trace solution.

    On [lam, b] the profile solves f' + (n-1) f / B = nc' with f(lam) = 1;
    the matching at lam is C^1 (both one-sided derivatives vanish) and the
    endpoint value f(b) = a is recovered by the lambda equation.
    """
    tag = classify(n, a, b)
    if tag.tag != "Case3":
        raise ValueError(f"limit profile requires Case3, got {tag.tag}")
    lam, nc_p = tag.lam, tag.nc_prime
    B = _grid(b, num_nodes)
    C = lam ** (n - 1) / n
    f = np.where(B <= lam, 1.0, (nc_p / n) * B + C * B ** (1 - n))
    if abs(f[-1] - a) > 1e-10:
        raise JToricError(f"endpoint identity failed: f(b) = {f[-1]!r}")
    return RadialProfile(n, a, b, B, f)


def linear_initial_profile(n, a, b, num_nodes=2048):
    """Straight-line initial data f0(B) = 1 + (a-1)(B-1)/(b-1)."""
    B = _grid(b, num_nodes)
    return RadialProfile(n, a, b, B, 1.0 + (a - 1.0) * (B - 1.0) / (b - 1.0))


def canonical_initial_profile(n, a, b, num_nodes=2048):
    """Initial profile matching the canonical potentials on the shell pair.

    Matching the symmetric gradients gives theta'(f) = h'(B), i.e.
    f (f-1) / (a-f) = B (B-1) / (b-B) =: R; solving the quadratic in f and
    taking the increasing branch yields f on (1, b) with f(1)=1, f(b)=a.
    """
    B = _grid(b, num_nodes)
    with np.errstate(divide="ignore", invalid="ignore"):
        R = B * (B - 1.0) / (b - B)
        f = 0.5 * ((1.0 - R) + np.sqrt((1.0 - R) ** 2 + 4.0 * a * R))
    f[0], f[-1] = 1.0, a
    return RadialProfile(n, a, b, B, f)


# ---------------------------------------------------------------------------
# 1-D flow
# ---------------------------------------------------------------------------

def radial_run(profile, t_end, cfl=0.2, num_records=200,
               max_steps=2_000_000_000):
    """Evolve the profile to t_end; returns (final profile, residual trace).

    The trace is a list of (t, sup |f' + (n-1) f / B - nc|) sampled at
    num_records evenly spaced times (plus t = 0).  Endpoints are pinned and
    monotonicity is checked every step (StepFailure on loss).
    """
    prof = profile.copy()
    n, a, b = prof.n, prof.a, prof.b
    nc = compute_nc_radial(n, a, b)
    h = prof.h
    f = np.ascontiguousarray(prof.f)
    B = np.ascontiguousarray(prof.B_grid)

    def resid():
        tmp = RadialProfile(n, a, b, B, f)
        return float(np.abs(tmp.trace() - nc).max())

    trace = [(0.0, resid())]
    t = 0.0
    checkpoints = np.linspace(0.0, t_end, num_records + 1)[1:]
    for tk in checkpoints:
        f, t, _ = radial_advance(f, B, h, a, n, cfl, t, tk,
                                 max_steps=max_steps)
        trace.append((t, resid()))
    prof.f = f
    return prof, trace


# ---------------------------------------------------------------------------
# embedding back into the polytope
# ---------------------------------------------------------------------------

@dataclass
class RadialField:
    """Transition field U(y) = f(sum y) y / sum y built from a profile."""
    profile: RadialProfile
    _spline: CubicSpline = field(repr=False, default=None)

    def __post_init__(self):
        if self._spline is None:
            self._spline = CubicSpline(self.profile.B_grid, self.profile.f)

    def f_at(self, B):
        return self._spline(np.clip(B, 1.0, self.profile.b))

    def fprime_at(self, B):
        return self._spline(np.clip(B, 1.0, self.profile.b), 1)

    def U(self, Y):
        Y = np.asarray(Y, dtype=float)
        B = Y.sum(axis=-1)
        return self.f_at(B)[..., None] * Y / B[..., None]

    def trace_at(self, B):
        return self.fprime_at(B) + (self.profile.n - 1) * self.f_at(B) / B

    def det_at(self, B):
        n = self.profile.n
        return self.fprime_at(B) * (self.f_at(B) / B) ** (n - 1)


def embed_radial(profile):
    return RadialField(profile)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def squeeze_point(profile, nc_prime, tol=1e-2):
    """Leftmost B where |trace - nc'| drops below tol (linear interpolation).

    Returns None when the residual never enters the band.
    """
    r = np.abs(profile.trace() - nc_prime)
    below = np.nonzero(r < tol)[0]
    if len(below) == 0:
        return None
    i = int(below[0])
    if i == 0:
        return float(profile.B_grid[0])
    B0, B1 = profile.B_grid[i - 1], profile.B_grid[i]
    r0, r1 = r[i - 1], r[i]
    w = (r0 - tol) / (r0 - r1)
    return float(B0 + w * (B1 - B0))


def radial_energy(profile):
    """E = 1/2 int trace(B)^2 B^{n-1}/(n-1)! dB (the polytope energy)."""
    n = profile.n
    tr = profile.trace()
    w = profile.B_grid ** (n - 1) / factorial(n - 1)
    return float(0.5 * np.trapezoid(tr ** 2 * w, profile.B_grid))


def calabi_polytope(n, b):
    """The shell {y >= 0 componentwise, 1 <= sum y <= b} as a Delzant polytope."""
    normals = [tuple(int(i == j) for j in range(n)) for i in range(n)]
    normals.append(tuple([1] * n))
    normals.append(tuple([-1] * n))
    offsets = [0] * n + [-1, b]
    return build_polytope(normals, offsets)
