"""Delzant polytopes: exact combinatorics, lattice measures, mixed volumes.

All combinatorial validation (vertex enumeration, Delzant condition) is done
in exact rational arithmetic; volumes and mixed-volume slopes are floats.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import factorial, gcd

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from .errors import (
    EmptyInterior,
    NonPrimitiveNormal,
    NormalMismatch,
    NotDelzant,
    Unbounded,
)

__all__ = [
    "DelzantPolytope",
    "Face",
    "FaceStability",
    "StabilityReport",
    "build_polytope",
    "enumerate_faces",
    "lattice_volume",
    "polytope_volume",
    "minkowski_sum_offsets",
    "trace_class_integral",
    "compute_nc",
    "check_face_stability",
]


# ---------------------------------------------------------------------------
# exact linear algebra helpers (small systems, Fraction arithmetic)
# ---------------------------------------------------------------------------

def _solve_exact(rows, rhs):
    """Solve the square rational system ``rows @ x = rhs``.

    Returns a tuple of Fractions, or None if the matrix is singular.
    """
    n = len(rhs)
    aug = [[Fraction(rows[i][j]) for j in range(n)] + [Fraction(rhs[i])]
           for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if piv is None:
            return None
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = 1 / aug[col][col]
        aug[col] = [a * inv for a in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return tuple(aug[r][n] for r in range(n))


def _det_exact(rows):
    """Exact determinant of a square integer/rational matrix."""
    n = len(rows)
    m = [[Fraction(rows[i][j]) for j in range(n)] for i in range(n)]
    det = Fraction(1)
    for col in range(n):
        piv = next((r for r in range(col, n) if m[r][col] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
            det = -det
        det *= m[col][col]
        inv = 1 / m[col][col]
        for r in range(col + 1, n):
            if m[r][col] != 0:
                f = m[r][col] * inv
                m[r] = [a - f * b for a, b in zip(m[r], m[col])]
    return det


def _rank_exact(rows, n):
    """Rank of a list of rational n-vectors."""
    m = [[Fraction(x) for x in row] for row in rows]
    rank = 0
    for col in range(n):
        piv = next((r for r in range(rank, len(m)) if m[r][col] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        inv = 1 / m[rank][col]
        m[rank] = [a * inv for a in m[rank]]
        for r in range(len(m)):
            if r != rank and m[r][col] != 0:
                f = m[r][col]
                m[r] = [a - f * b for a, b in zip(m[r], m[rank])]
        rank += 1
    return rank


def _inverse_unimodular(rows):
    """Inverse of an integer matrix with determinant +-1 (integer output)."""
    n = len(rows)
    det = _det_exact(rows)
    if abs(det) != 1:
        raise ValueError("matrix is not unimodular")
    inv = []
    for j in range(n):
        e = [Fraction(int(i == j)) for i in range(n)]
        col = _solve_exact(rows, e)
        inv.append(col)
    # inv currently holds columns of rows^{-1}; transpose into row-major ints
    return tuple(tuple(int(inv[j][i]) for j in range(n)) for i in range(n))


def _to_fraction(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)  # exact binary expansion
    if isinstance(x, np.integer):
        return Fraction(int(x))
    if isinstance(x, np.floating):
        return Fraction(float(x))
    raise TypeError(f"cannot interpret offset {x!r} as a rational number")


# ---------------------------------------------------------------------------
# core types
# ---------------------------------------------------------------------------

class DelzantPolytope:
    """A Delzant polytope {y : <u_i, y> + b_i >= 0} with derived vertex data.

    Instances are built by :func:`build_polytope` and must be treated as
    immutable; all methods are pure.
    """

    def __init__(self, normals, offsets_exact, vertices_exact, vertex_active):
        self.normals = tuple(tuple(int(c) for c in u) for u in normals)
        self.offsets_exact = tuple(offsets_exact)
        self.dim = len(self.normals[0])
        self.normals_arr = np.array(self.normals, dtype=float)
        self.offsets_arr = np.array([float(b) for b in offsets_exact])
        self.vertices_exact = tuple(vertices_exact)
        self.vertices = np.array(
            [[float(c) for c in v] for v in vertices_exact])
        self.vertex_active = tuple(frozenset(a) for a in vertex_active)
        self._charts = {}

    @property
    def num_facets(self):
        return len(self.normals)

    @property
    def diameter(self):
        d = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    def facet_distances(self, y):
        """d_i(y) = <u_i, y> + b_i, vectorized over points (..., n)."""
        y = np.asarray(y, dtype=float)
        return y @ self.normals_arr.T + self.offsets_arr

    def contains(self, y, tol=0.0):
        return bool(np.min(self.facet_distances(y)) >= -tol)

    def interior_point(self):
        return self.vertices.mean(axis=0)

    def nearest_vertex(self, y):
        """Index of the vertex closest to y (Euclidean)."""
        d = ((self.vertices - np.asarray(y, dtype=float)) ** 2).sum(axis=1)
        return int(np.argmin(d))

    def vertex_chart(self, vi):
        """Chart data at vertex vi (cached).

        Returns a dict with
          facets:   ordered tuple of the n facets active at the vertex
          E:        integer matrix whose columns are the primitive edge
                    vectors (dual basis to the active normals)
          far:      tuple of the remaining facet indices
          expo:     (len(far), n) integer matrix, expo[k, i] = <u_far_k, e_i>
        """
        if vi in self._charts:
            return self._charts[vi]
        facets = tuple(sorted(self.vertex_active[vi]))
        nmat = [self.normals[i] for i in facets]
        einv = _inverse_unimodular(nmat)  # rows of N^{-1}; columns are e_i
        E = np.array(einv, dtype=float)  # E[:, i] = e_i  (einv row-major)
        # _inverse_unimodular returns N^{-1} row-major, so column i of it is e_i
        far = tuple(i for i in range(self.num_facets) if i not in facets)
        expo = np.array(
            [[sum(self.normals[k][r] * einv[r][i] for r in range(self.dim))
              for i in range(self.dim)] for k in far], dtype=float)
        chart = {
            "vertex": self.vertices[vi],
            "facets": facets,
            "E": E,
            "Einv": np.array(nmat, dtype=float),  # E^{-1} = normal matrix
            "far": far,
            "expo": expo,
        }
        self._charts[vi] = chart
        return chart

    def __eq__(self, other):
        return (isinstance(other, DelzantPolytope)
                and self.normals == other.normals
                and self.offsets_exact == other.offsets_exact)

    def __hash__(self):
        return hash((self.normals, self.offsets_exact))

    def __repr__(self):
        return (f"DelzantPolytope(dim={self.dim}, facets={self.num_facets}, "
                f"vertices={len(self.vertices_exact)})")


@dataclass(frozen=True)
class Face:
    """A face of a Delzant polytope with its lattice tangent data."""
    facet_ids: frozenset
    dim: int
    tangent_basis: tuple        # columns as tuples of ints, length = dim
    vertex_ids: tuple
    anchor_id: int
    polytope: DelzantPolytope

    @property
    def vertices(self):
        return self.polytope.vertices[list(self.vertex_ids)]

    @property
    def vertices_exact(self):
        return [self.polytope.vertices_exact[i] for i in self.vertex_ids]

    @property
    def anchor_exact(self):
        return self.polytope.vertices_exact[self.anchor_id]

    def tangent_matrix(self):
        """(n, p) float matrix with tangent basis vectors as columns."""
        n = self.polytope.dim
        return np.array(self.tangent_basis, dtype=float).reshape(-1, n).T


@dataclass(frozen=True)
class FaceStability:
    face: Face
    p: int
    lhs: float
    verdict: str  # pass | marginal | violated


@dataclass(frozen=True)
class StabilityReport:
    nc: float
    per_face: tuple

    @property
    def verdict(self):
        if any(f.verdict == "violated" for f in self.per_face):
            return "violated"
        if any(f.verdict == "marginal" for f in self.per_face):
            return "marginal"
        return "pass"


# ---------------------------------------------------------------------------
# construction and validation
# ---------------------------------------------------------------------------

def _check_bounded(normals_arr):
    k, n = normals_arr.shape
    for j in range(n):
        for sign in (1.0, -1.0):
            c = np.zeros(n)
            c[j] = -sign
            res = linprog(c, A_ub=-normals_arr, b_ub=np.zeros(k),
                          bounds=[(-1, 1)] * n, method="highs")
            if res.status != 0 or -res.fun > 1e-9:
                raise Unbounded(
                    f"recession cone contains direction {sign:+g} e_{j + 1}")


def _check_interior(normals_arr, offsets_arr):
    k, n = normals_arr.shape
    norms = np.sqrt((normals_arr ** 2).sum(axis=1))
    a_ub = np.hstack([-normals_arr, norms[:, None]])
    c = np.zeros(n + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=a_ub, b_ub=offsets_arr,
                  bounds=[(None, None)] * n + [(None, 1.0)], method="highs")
    if res.status != 0 or -res.fun <= 1e-9:
        raise EmptyInterior("no strictly interior point exists")


def build_polytope(normals, offsets):
    """Validate facet data and enumerate vertices exactly.

    normals: iterable of integer inward covectors; offsets: rationals
    (int, Fraction, "p/q" string, or float taken at its exact binary value).
    """
    normals = [tuple(int(c) for c in u) for u in normals]
    if not normals:
        raise ValueError("need at least one facet")
    n = len(normals[0])
    if n < 1 or any(len(u) != n for u in normals):
        raise ValueError("inconsistent normal dimensions")
    for i, u in enumerate(normals):
        if all(c == 0 for c in u):
            raise NonPrimitiveNormal(f"facet {i}: zero normal")
        if gcd(*[abs(c) for c in u]) != 1 if len(u) > 1 else abs(u[0]) != 1:
            raise NonPrimitiveNormal(f"facet {i}: normal {u} is not primitive")
    offsets = [_to_fraction(b) for b in offsets]
    if len(offsets) != len(normals):
        raise ValueError("offsets/normals length mismatch")

    normals_arr = np.array(normals, dtype=float)
    offsets_arr = np.array([float(b) for b in offsets])
    _check_bounded(normals_arr)
    _check_interior(normals_arr, offsets_arr)

    k = len(normals)
    verts = {}
    for subset in itertools.combinations(range(k), n):
        rows = [normals[i] for i in subset]
        rhs = [-offsets[i] for i in subset]
        x = _solve_exact(rows, rhs)
        if x is None:
            continue
        dists = [sum(u[j] * x[j] for j in range(n)) + b
                 for u, b in zip(normals, offsets)]
        if any(d < 0 for d in dists):
            continue
        verts[x] = frozenset(i for i, d in enumerate(dists) if d == 0)

    if not verts:
        raise EmptyInterior("no vertices found")
    vertices = sorted(verts)
    active = [verts[v] for v in vertices]
    touched = set()
    for v, a in zip(vertices, active):
        if len(a) != n:
            raise NotDelzant(
                f"vertex {tuple(map(str, v))} lies on {len(a)} facets "
                f"(expected exactly {n})")
        det = _det_exact([normals[i] for i in sorted(a)])
        if abs(det) != 1:
            raise NotDelzant(
                f"vertex {tuple(map(str, v))}: normal determinant {det} "
                "is not +-1")
        touched |= a
    for i in range(k):
        if i not in touched:
            raise NotDelzant(f"facet {i} does not touch the polytope")
    return DelzantPolytope(normals, offsets, vertices, active)


# ---------------------------------------------------------------------------
# faces
# ---------------------------------------------------------------------------

def enumerate_faces(P):
    """All faces of every dimension 0..n; the polytope itself is the n-face."""
    n = P.dim
    seen = {}
    order = []
    for vi, act in enumerate(P.vertex_active):
        for size in range(n + 1):            # size = n - p facets cut
            for S in itertools.combinations(sorted(act), size):
                sset = set(S)
                vids = tuple(w for w, aw in enumerate(P.vertex_active)
                             if sset <= aw)
                if vids in seen:
                    continue
                maximal = frozenset.intersection(
                    *[P.vertex_active[w] for w in vids]) if size else frozenset()
                rows = [P.normals[i] for i in sorted(maximal)]
                p = n - (_rank_exact(rows, n) if rows else 0)
                anchor = vids[0]
                basis = _face_tangent_basis(P, anchor, maximal)
                face = Face(facet_ids=maximal, dim=p,
                            tangent_basis=basis, vertex_ids=vids,
                            anchor_id=anchor, polytope=P)
                seen[vids] = face
                order.append(face)
    order.sort(key=lambda f: (f.dim, sorted(f.vertex_ids)))
    return order


def _face_tangent_basis(P, anchor, facet_ids):
    """Lattice basis of TF cap M from the dual basis at an anchor vertex."""
    chart = P.vertex_chart(anchor)
    cols = []
    einv = chart["E"]  # columns are dual basis vectors e_i
    for pos, fid in enumerate(chart["facets"]):
        if fid not in facet_ids:
            cols.append(tuple(int(round(c)) for c in einv[:, pos]))
    return tuple(cols)


# ---------------------------------------------------------------------------
# volumes
# ---------------------------------------------------------------------------

def _face_scoords_exact(face):
    """Exact coordinates of the face vertices in its lattice tangent basis."""
    P = face.polytope
    n = P.dim
    p = face.dim
    T = [list(col) for col in face.tangent_basis]   # p rows of length n
    v0 = face.anchor_exact
    # normal-equation solve: (T T^t) s = T (v - v0), all exact
    gram = [[sum(T[a][r] * T[b][r] for r in range(n)) for b in range(p)]
            for a in range(p)]
    out = []
    for vid in face.vertex_ids:
        v = P.vertices_exact[vid]
        rhs = [sum(T[a][r] * (v[r] - v0[r]) for r in range(n))
               for a in range(p)]
        s = _solve_exact(gram, rhs)
        out.append(s)
    return out


def _hull_volume(points, p):
    pts = np.array([[float(c) for c in s] for s in points])
    if p == 0:
        return 1.0
    if p == 1:
        vals = pts[:, 0]
        return float(vals.max() - vals.min())
    return float(ConvexHull(pts).volume)


def lattice_volume(face_or_polytope):
    """p-volume in the lattice-normalized measure sigma_F.

    Accepts a Face or a DelzantPolytope (interpreted as its own top face).
    Vertices are 0-faces with volume 1 by convention.
    """
    if isinstance(face_or_polytope, DelzantPolytope):
        return polytope_volume(face_or_polytope)
    face = face_or_polytope
    if face.dim == 0:
        return 1.0
    return _hull_volume(_face_scoords_exact(face), face.dim)


def polytope_volume(P):
    """Euclidean volume w.r.t. the lattice measure."""
    return float(polytope_volume_exact(P))


def polytope_volume_exact(P):
    """Volume as an exact Fraction (cone over hull facets from a vertex).

    The hull combinatorics come from the float vertices; the determinants
    are evaluated on the exact rational vertices.
    """
    n = P.dim
    verts = P.vertices_exact
    if n == 1:
        vals = [v[0] for v in verts]
        return max(vals) - min(vals)
    hull = ConvexHull(P.vertices)
    c0 = verts[hull.vertices[0]]
    total = Fraction(0)
    nf = Fraction(factorial(n))
    for simp in hull.simplices:
        rows = [[verts[i][j] - c0[j] for j in range(n)] for i in simp]
        total += abs(_det_exact(rows)) / nf
    return total


# ---------------------------------------------------------------------------
# Minkowski sums and mixed-volume slopes
# ---------------------------------------------------------------------------

def _require_same_fan(P, Q):
    if P.normals != Q.normals:
        raise NormalMismatch("polytopes do not share an ordered normal list")


def minkowski_sum_offsets(P, Q, t):
    """P + tQ through offsets b_i + t b'_i (same normal fan required)."""
    _require_same_fan(P, Q)
    tf = _to_fraction(t)
    if tf < 0:
        raise ValueError("t must be nonnegative")
    if tf == 0:
        return P
    offs = [b + tf * bq for b, bq in zip(P.offsets_exact, Q.offsets_exact)]
    return build_polytope(P.normals, offs)


def _volume_polynomial(vol_at, deg, ts=None):
    """Fit the exact degree-`deg` polynomial through samples of vol_at(t)."""
    if ts is None:
        ts = list(range(deg + 1))
    vols = [vol_at(t) for t in ts]
    V = np.vander(np.array(ts, dtype=float), deg + 1, increasing=True)
    return np.linalg.solve(V, np.array(vols))


def _trace_class_integral_exact(P, Q):
    """d/dt|_0 vol(P + tQ) as an exact Fraction, from an exact polynomial
    fit of the Minkowski-sum volumes at t = 0 .. n."""
    _require_same_fan(P, Q)
    n = P.dim
    vols = [polytope_volume_exact(minkowski_sum_offsets(P, Q, t))
            for t in range(n + 1)]
    rows = [[Fraction(t) ** k for k in range(n + 1)] for t in range(n + 1)]
    coeffs = _solve_exact(rows, vols)
    return coeffs[1]


def trace_class_integral(P, Q):
    """d/dt|_0 vol(P + tQ) = n V(P[n-1], Q); equals the class integral
    of tr DU over P for any compatible potentials."""
    return float(_trace_class_integral_exact(P, Q))


def compute_nc(P, Q):
    """Average of tr DU over P; the class constant nc (exact ratio,
    rounded once to float)."""
    return float(_trace_class_integral_exact(P, Q)
                 / polytope_volume_exact(P))


# ---------------------------------------------------------------------------
# face stability check
# ---------------------------------------------------------------------------

def _hpoly_vertices(rows, offs, p):
    """Vertices of {s in R^p : rows_k . s + offs_k >= 0} (exact input)."""
    verts = set()
    for subset in itertools.combinations(range(len(rows)), p):
        sub = [rows[i] for i in subset]
        rhs = [-offs[i] for i in subset]
        s = _solve_exact(sub, rhs)
        if s is None:
            continue
        if all(sum(r[j] * s[j] for j in range(p)) + o >= 0
               for r, o in zip(rows, offs)):
            verts.add(s)
    return list(verts)


def _face_reduced_system(P, Q, face):
    """Facet system of F (and the offsets of F') in tangent coordinates."""
    n = P.dim
    p = face.dim
    T = [list(col) for col in face.tangent_basis]
    v0 = face.anchor_exact
    anchor_active = P.vertex_active[face.anchor_id]
    v0q = None
    for w, aw in enumerate(Q.vertex_active):
        if aw == anchor_active:
            v0q = Q.vertices_exact[w]
            break
    if v0q is None:
        raise NormalMismatch("no Q vertex matches the anchor facet set")
    rows, offs_p, offs_q = [], [], []
    for k in range(P.num_facets):
        if k in face.facet_ids:
            continue
        u = P.normals[k]
        w = tuple(sum(u[r] * T[a][r] for r in range(n)) for a in range(p))
        if all(c == 0 for c in w):
            continue
        rows.append(w)
        offs_p.append(sum(Fraction(u[r]) * v0[r] for r in range(n))
                      + P.offsets_exact[k])
        offs_q.append(sum(Fraction(u[r]) * v0q[r] for r in range(n))
                      + Q.offsets_exact[k])
    return rows, offs_p, offs_q


def _face_mixed_slope(P, Q, face):
    """lhs = p V_TF(F[p-1], F') / vol(F) via Minkowski interpolation in TF."""
    p = face.dim
    rows, offs_p, offs_q = _face_reduced_system(P, Q, face)

    def vol_at(t):
        tf = Fraction(t)
        offs = [a + tf * b for a, b in zip(offs_p, offs_q)]
        return _hull_volume(_hpoly_vertices(rows, offs, p), p)

    coeffs = _volume_polynomial(vol_at, p)
    return float(coeffs[1]) / float(coeffs[0])


def check_face_stability(P, Q, tol=1e-9):
    """Class-level stability inequality on every proper face (strict)."""
    _require_same_fan(P, Q)
    nc = compute_nc(P, Q)
    results = []
    for face in enumerate_faces(P):
        if not 1 <= face.dim <= P.dim - 1:
            continue
        lhs = _face_mixed_slope(P, Q, face)
        if abs(lhs - nc) <= tol:
            verdict = "marginal"
        elif lhs > nc + tol:
            verdict = "violated"
        else:
            verdict = "pass"
        results.append(FaceStability(face=face, p=face.dim,
                                     lhs=lhs, verdict=verdict))
    return StabilityReport(nc=nc, per_face=tuple(results))
