"""Polytopes in halfspace representation and the set arithmetic used by the tube design.

A polytope is stored as {x : Hx <= h} with unit-norm facet rows.  All operations
are pure functions returning new Polytope values; results that are only certified
outer approximations carry ``outer=True`` so callers can pick the conservative side.
"""

from __future__ import annotations

import json

import numpy as np
from scipy.optimize import linprog

from .errors import (
    DimensionMismatch,
    EmptyInput,
    NegativeScale,
    ProjectionBlowup,
    Unbounded,
)

TOL = 1e-7          # set predicates (membership, containment)
LP_TOL = 1e-9       # LP feasibility tolerance
ROW_CAP = 10_000    # Fourier-Motzkin blowup guard


def _lp(c, A_ub, b_ub, A_eq=None, b_eq=None):
    return linprog(
        c,
        A_ub=A_ub if A_ub is not None and len(A_ub) else None,
        b_ub=b_ub if A_ub is not None and len(A_ub) else None,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=(None, None),
        method="highs",
    )


class Polytope:
    """Convex set {x : Hx <= h} in halfspace form."""

    def __init__(self, H, h, outer=False, normalize=True):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        h = np.asarray(h, dtype=float).ravel()
        if H.shape[0] != h.shape[0]:
            raise DimensionMismatch(
                f"{H.shape[0]} facet rows but {h.shape[0]} offsets"
            )
        self._forced_empty = False
        if normalize and H.size:
            norms = np.linalg.norm(H, axis=1)
            zero = norms < 1e-14
            if np.any(zero):
                # 0 <= h is vacuous for h >= 0 and impossible otherwise
                if np.any(h[zero] < -LP_TOL):
                    self._forced_empty = True
                H, h, norms = H[~zero], h[~zero], norms[~zero]
            if H.size:
                H = H / norms[:, None]
                h = h / norms
        self.H = H
        self.h = h
        self.dim = H.shape[1]
        self.outer = bool(outer)
        self._empty = True if self._forced_empty else None
        self._bounded = None
        self._box = "?"  # lazily computed (lo, hi) when axis-aligned box

    # -- basic predicates -------------------------------------------------

    def __repr__(self):
        return f"Polytope(dim={self.dim}, facets={len(self.h)})"

    def is_empty(self):
        if self._empty is None:
            if len(self.h) == 0:
                self._empty = False
            else:
                res = _lp(np.zeros(self.dim), self.H, self.h)
                self._empty = res.status == 2
        return self._empty

    @property
    def empty(self):
        return self.is_empty()

    def is_bounded(self):
        if self._bounded is None:
            if self.is_empty():
                self._bounded = True
            else:
                try:
                    self._bounded = all(
                        np.isfinite(self.support(d))
                        for i in range(self.dim)
                        for d in (np.eye(self.dim)[i], -np.eye(self.dim)[i])
                    )
                except Unbounded:
                    self._bounded = False
        return self._bounded

    @property
    def bounded(self):
        return self.is_bounded()

    def as_box(self):
        """Return (lo, hi) if this set is an axis-aligned box, else None."""
        if self._box == "?":
            self._box = None
            if len(self.h) and not self._forced_empty:
                aligned = True
                lo = np.full(self.dim, -np.inf)
                hi = np.full(self.dim, np.inf)
                for row, b in zip(self.H, self.h):
                    j = int(np.argmax(np.abs(row)))
                    e = np.zeros(self.dim)
                    e[j] = np.sign(row[j])
                    if np.linalg.norm(row - e) > 1e-12:
                        aligned = False
                        break
                    if e[j] > 0:
                        hi[j] = min(hi[j], b)
                    else:
                        lo[j] = max(lo[j], -b)
                if aligned and np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) \
                        and np.all(lo <= hi + TOL):
                    self._box = (lo, hi)
        return self._box

    def contains(self, x, tol=TOL):
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.dim:
            raise DimensionMismatch(f"point dim {x.shape[0]} != {self.dim}")
        if self._forced_empty:
            return False
        if len(self.h) == 0:
            return True
        return bool(np.all(self.H @ x <= self.h + tol))

    def support(self, d):
        """sup {d'x : x in P}.  Returns -inf for empty sets."""
        d = np.asarray(d, dtype=float).ravel()
        if d.shape[0] != self.dim:
            raise DimensionMismatch(f"direction dim {d.shape[0]} != {self.dim}")
        if self._forced_empty:
            return -np.inf
        box = self.as_box()
        if box is not None:
            lo, hi = box
            return float(np.sum(hi * np.maximum(d, 0) + lo * np.minimum(d, 0)))
        res = _lp(-d, self.H, self.h)
        if res.status == 3:
            raise Unbounded(f"support unbounded along {d}")
        if res.status == 2:
            self._empty = True
            return -np.inf
        if res.status != 0:
            raise Unbounded(f"LP failed with status {res.status}")
        return float(-res.fun)

    def chebyshev_center(self):
        """(center, radius) of the largest inscribed ball."""
        if len(self.h) == 0:
            raise Unbounded("chebyshev center of the whole space")
        A = np.hstack([self.H, np.ones((len(self.h), 1))])
        c = np.zeros(self.dim + 1)
        c[-1] = -1.0
        res = _lp(c, A, self.h)
        if res.status == 2:
            raise EmptyInput("empty polytope")
        if res.status != 0:
            raise Unbounded("chebyshev LP unbounded; polytope has no bounded ball order")
        return res.x[:-1], float(res.x[-1])

    def vertices(self):
        """Vertex enumeration via qhull halfspace intersection (bounded, full-dim sets)."""
        from scipy.spatial import HalfspaceIntersection

        if self.dim == 1:
            hi = self.support(np.ones(1))
            lo = -self.support(-np.ones(1))
            return np.array([[lo], [hi]])
        center, radius = self.chebyshev_center()
        if radius < 1e-10:
            raise EmptyInput("degenerate polytope: no interior point for qhull")
        halfspaces = np.hstack([self.H, -self.h[:, None]])
        hs = HalfspaceIntersection(halfspaces, center)
        return hs.intersections

    # -- serialization ----------------------------------------------------

    def to_dict(self):
        return {"H": self.H.tolist(), "h": self.h.tolist()}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["H"]), np.asarray(d["h"]))

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))

    # -- constructors -----------------------------------------------------

    @classmethod
    def box(cls, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape:
            raise DimensionMismatch("box bounds differ in length")
        if np.any(lo > hi):
            raise EmptyInput("box with lo > hi")
        n = lo.shape[0]
        eye = np.eye(n)
        return cls(np.vstack([eye, -eye]), np.concatenate([hi, -lo]))

    @classmethod
    def singleton(cls, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls.box(x, x)

    @classmethod
    def origin(cls, dim):
        return cls.singleton(np.zeros(dim))

    # -- operators --------------------------------------------------------

    def __add__(self, other):
        return minkowski_sum(self, other)

    def __sub__(self, other):
        return pontryagin_diff(self, other)

    def __rmul__(self, s):
        return scale(self, s)

    def __neg__(self):
        return Polytope(-self.H, self.h, outer=self.outer, normalize=False)

    def cross(self, other):
        """Cartesian product of two polytopes."""
        H = np.block([
            [self.H, np.zeros((len(self.h), other.dim))],
            [np.zeros((len(other.h), self.dim)), other.H],
        ])
        return Polytope(H, np.concatenate([self.h, other.h]),
                        outer=self.outer or other.outer, normalize=False)


def _point_of(p):
    """Return the single member of p if it is (numerically) a point, else None."""
    box = p.as_box()
    if box is not None and np.all(box[1] - box[0] < 1e-12):
        return (box[0] + box[1]) / 2.0
    return None


def translate(p, t):
    t = np.asarray(t, dtype=float).ravel()
    if t.shape[0] != p.dim:
        raise DimensionMismatch("translation dim mismatch")
    return Polytope(p.H, p.h + p.H @ t, outer=p.outer, normalize=False)


def intersect(a, b):
    if a.dim != b.dim:
        raise DimensionMismatch(f"{a.dim} vs {b.dim}")
    return Polytope(np.vstack([a.H, b.H]), np.concatenate([a.h, b.h]),
                    normalize=False)


def support(p, d):
    return p.support(d)


def contains(p, x, tol=TOL):
    return p.contains(x, tol=tol)


def subset_of(a, b, tol=TOL):
    """True iff a is contained in b (support check on every facet of b)."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"{a.dim} vs {b.dim}")
    if a.is_empty():
        return True
    for row, off in zip(b.H, b.h):
        try:
            if a.support(row) > off + tol:
                return False
        except Unbounded:
            return False
    return True


def set_equal(a, b, tol=TOL):
    return subset_of(a, b, tol=tol) and subset_of(b, a, tol=tol)


def _dedup_rows(H, h):
    """Merge duplicate facet directions, keeping the tightest offset."""
    if len(h) == 0:
        return H, h
    order = np.lexsort(np.round(H, 9).T)
    keep_H, keep_h = [], []
    for i in order:
        if keep_H and np.linalg.norm(H[i] - keep_H[-1]) < 1e-9:
            keep_h[-1] = min(keep_h[-1], h[i])
        else:
            keep_H.append(H[i])
            keep_h.append(h[i])
    return np.array(keep_H), np.array(keep_h)


def remove_redundancy(p, tol=LP_TOL):
    """Minimal halfspace representation of the same set; removals are LP-certified."""
    if p.is_empty():
        raise EmptyInput("cannot reduce an empty polytope")
    H, h = _dedup_rows(p.H, p.h)
    keep = list(range(len(h)))
    i = 0
    while i < len(keep):
        r = keep[i]
        others = [k for k in keep if k != r]
        if not others:
            break
        A = np.vstack([H[others], H[r][None, :]])
        b = np.concatenate([h[others], [h[r] + 1.0]])
        res = _lp(-H[r], A, b)
        redundant = res.status == 0 and -res.fun <= h[r] + 1e-9
        if redundant:
            keep.pop(i)
        else:
            i += 1
    return Polytope(H[keep], h[keep], outer=p.outer, normalize=False)


def scale(p, s):
    """{s*x : x in p}; requires s >= 0."""
    if s < 0:
        raise NegativeScale(f"scale factor {s} < 0")
    return Polytope(p.H, s * p.h, outer=p.outer, normalize=False)


def minkowski_sum(a, b):
    """{x + y : x in a, y in b} via support evaluation over the union of facet normals.

    Exact for dim <= 2, axis-aligned boxes, and singleton operands; otherwise an
    outer approximation flagged ``outer=True``.
    """
    if a.dim != b.dim:
        raise DimensionMismatch(f"{a.dim} vs {b.dim}")
    pt = _point_of(b)
    if pt is None:
        pt_a = _point_of(a)
        if pt_a is not None:
            return translate(b, pt_a)
    else:
        return translate(a, pt)
    if not a.is_bounded() or not b.is_bounded():
        raise Unbounded("minkowski_sum requires bounded operands")
    dim = a.dim
    eye = np.eye(dim)
    dirs = np.vstack([a.H, b.H, eye, -eye])
    dirs, _ = _dedup_rows(dirs, np.zeros(len(dirs)))
    offsets = np.array([a.support(d) + b.support(d) for d in dirs])
    exact = dim <= 2 or (a.as_box() is not None and b.as_box() is not None)
    out = Polytope(dirs, offsets, outer=not exact, normalize=False)
    return remove_redundancy(out)


def pontryagin_diff(a, b):
    """{x : x + y in a for all y in b}; may be empty (flagged, not an error)."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"{a.dim} vs {b.dim}")
    if not b.is_bounded():
        raise Unbounded("pontryagin_diff requires bounded subtrahend")
    offsets = a.h - np.array([b.support(row) for row in a.H])
    return Polytope(a.H, offsets, outer=a.outer, normalize=False)


def _fm_reduce(H, h, aggressive):
    """Cheap cleanup between elimination steps; LP reduction when aggressive."""
    if len(h) == 0:
        return H, h
    norms = np.linalg.norm(H, axis=1)
    trivial = norms < 1e-12
    if np.any(h[trivial] < -LP_TOL):
        return None, None  # infeasible
    H, h, norms = H[~trivial], h[~trivial], norms[~trivial]
    if len(h):
        H = H / norms[:, None]
        h = h / norms
    H, h = _dedup_rows(H, h)
    if aggressive and len(h) > 3 * H.shape[1] + 8:
        p = Polytope(H, h, normalize=False)
        if not p.is_empty():
            p = remove_redundancy(p)
            H, h = p.H, p.h
    return H, h


def _fm_eliminate(H, h, col):
    """Fourier-Motzkin elimination of one column from Hx <= h."""
    c = H[:, col]
    pos = np.where(c > 1e-12)[0]
    neg = np.where(c < -1e-12)[0]
    zero = np.where(np.abs(c) <= 1e-12)[0]
    rows = [H[zero], ]
    offs = [h[zero], ]
    if len(pos) * len(neg) + len(zero) > ROW_CAP:
        raise ProjectionBlowup(
            f"elimination would create {len(pos) * len(neg) + len(zero)} rows"
        )
    for i in pos:
        # combine with every lower bound so the variable cancels
        wi = H[i] / c[i]
        bi = h[i] / c[i]
        wj = H[neg] / (-c[neg])[:, None]
        bj = h[neg] / (-c[neg])
        rows.append(wi[None, :] + wj)
        offs.append(bi + bj)
    H_new = np.vstack(rows) if rows else np.zeros((0, H.shape[1]))
    h_new = np.concatenate(offs) if offs else np.zeros(0)
    H_new = np.delete(H_new, col, axis=1)
    return H_new, h_new


def fourier_motzkin_project(H, h, keep, A_eq=None, b_eq=None):
    """Project {z : Hz <= h, A_eq z = b_eq} onto the coordinates in ``keep``.

    Equality rows are used for exact Gaussian elimination first; the remaining
    dropped coordinates go through Fourier-Motzkin with per-step reduction.
    Returns a Polytope over the kept coordinates (exact, possibly empty).
    """
    H = np.atleast_2d(np.asarray(H, dtype=float)).astype(float)
    h = np.asarray(h, dtype=float).ravel().copy()
    nz = H.shape[1]
    keep = list(keep)
    cols = list(range(nz))  # original index of each current column

    residual_eq = []  # equalities purely over kept coordinates
    if A_eq is not None and len(A_eq):
        A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float)).astype(float)
        b_eq = np.asarray(b_eq, dtype=float).ravel().copy()
        r = 0
        while r < A_eq.shape[0]:
            row, rhs = A_eq[r], b_eq[r]
            drop_local = [j for j, c in enumerate(cols) if c not in keep]
            piv = None
            if drop_local:
                cand = drop_local[int(np.argmax(np.abs(row[drop_local])))]
                if abs(row[cand]) > 1e-10:
                    piv = cand
            if piv is None:
                if np.max(np.abs(row)) < 1e-12:
                    if abs(rhs) > 1e-9:
                        return Polytope(np.zeros((1, len(keep))), [-1.0])
                else:
                    residual_eq.append((row.copy(), rhs))
                A_eq = np.delete(A_eq, r, axis=0)
                b_eq = np.delete(b_eq, r)
                continue
            coeff = row[piv]
            # substitute z_piv = (rhs - sum_{j != piv} row_j z_j) / coeff
            if len(h):
                factors = H[:, piv] / coeff
                H = H - np.outer(factors, row)
                h = h - factors * rhs
            others = np.delete(np.arange(A_eq.shape[0]), r)
            if len(others):
                f = A_eq[others, piv] / coeff
                A_eq[others] = A_eq[others] - np.outer(f, row)
                b_eq[others] = b_eq[others] - f * rhs
            H = np.delete(H, piv, axis=1)
            A_eq = np.delete(np.delete(A_eq, r, axis=0), piv, axis=1)
            b_eq = np.delete(b_eq, r)
            residual_eq = [(np.delete(w, piv), d) for w, d in residual_eq]
            cols.pop(piv)

    # Fourier-Motzkin for any remaining dropped coordinates
    while True:
        drop_local = [j for j, c in enumerate(cols) if c not in keep]
        if not drop_local:
            break
        j = drop_local[0]
        H, h = _fm_eliminate(H, h, j)
        residual_eq = [(np.delete(w, j), d) for w, d in residual_eq]
        cols.pop(j)
        H, h = _fm_reduce(H, h, aggressive=True)
        if H is None:
            return Polytope(np.zeros((1, len(keep))), [-1.0])
        if len(h) > ROW_CAP:
            raise ProjectionBlowup(f"{len(h)} rows after elimination")

    # reorder columns to match the requested keep order
    perm = [cols.index(k) for k in keep]
    H = H[:, perm] if len(h) else np.zeros((0, len(keep)))
    rows = [H]
    offs = [h]
    for w, d in residual_eq:
        w = w[perm]
        rows.append(w[None, :])
        rows.append(-w[None, :])
        offs.append(np.array([d]))
        offs.append(np.array([-d]))
    return Polytope(np.vstack(rows), np.concatenate(offs))


def affine_map(p, M):
    """{Mx : x in p} as an H-representation (exact via projection)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != p.dim:
        raise DimensionMismatch(f"map has {M.shape[1]} columns, polytope dim {p.dim}")
    k = M.shape[0]
    if k == p.dim:
        # invertible square maps transform the halfspaces directly
        if np.linalg.matrix_rank(M, tol=1e-10) == k:
            cond = np.linalg.cond(M)
            if cond < 1e10:
                return Polytope(p.H @ np.linalg.inv(M), p.h, outer=p.outer)
    # lifted system over (y, x) with y = Mx, projected onto y
    H = np.hstack([np.zeros((len(p.h), k)), p.H])
    A_eq = np.hstack([np.eye(k), -M])
    out = fourier_motzkin_project(H, p.h, keep=list(range(k)),
                                  A_eq=A_eq, b_eq=np.zeros(k))
    out.outer = out.outer or p.outer
    if not out.is_empty():
        out = remove_redundancy(out)
    return out


def interval_hull(p):
    """Smallest axis-aligned box containing p."""
    if not p.is_bounded():
        raise Unbounded("interval hull of an unbounded set")
    eye = np.eye(p.dim)
    hi = np.array([p.support(eye[i]) for i in range(p.dim)])
    lo = np.array([-p.support(-eye[i]) for i in range(p.dim)])
    return Polytope.box(lo, hi)
