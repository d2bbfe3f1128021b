"""Annihilating polynomials p(z) of the exogenous-signal generator.

A filter stores the coefficients p_0..p_{n_p} of p(z) = sum_i p_i z^{-i}; constant
signals correspond to [1, -1], sinusoids of frequency w0 to [1, -2 cos(w0), 1].
The block-companion matrix realizes the recursion v(t) = -sum_{i>=1} p_i v(t-i)
on stacked histories (newest block first).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import polytope as pt
from .errors import (
    BadLeadingCoefficient,
    ConstructionFailed,
    UnstableGenerator,
    WrongHistoryLength,
)
from .polytope import Polytope

ROOT_TOL = 1e-9      # |root| <= 1 + ROOT_TOL accepted
V_ITER_CAP = 500
V_INV_TOL = 1e-4     # relative invariance tolerance of the orbit-hull V
V_ORBIT_CAP = 2000
V_GRID_2D = 512


@dataclass(frozen=True)
class Filter:
    """Validated annihilating polynomial of the signal generator."""

    p: np.ndarray

    @property
    def n_p(self):
        return len(self.p) - 1

    def companion(self, block):
        """Block-companion realization S on histories of `block`-sized vectors.

        S maps [v(t-1); ...; v(t-n_p)] to [v(t); ...; v(t-n_p+1)].
        """
        n_p = self.n_p
        S = np.zeros((n_p * block, n_p * block))
        for i in range(1, n_p + 1):
            S[:block, (i - 1) * block:i * block] = -self.p[i] * np.eye(block)
        for i in range(1, n_p):
            S[i * block:(i + 1) * block, (i - 1) * block:i * block] = np.eye(block)
        return S

    def roots(self):
        return np.roots(self.p)


def make_filter(p):
    """Validate coefficients and return a Filter.

    Raises BadLeadingCoefficient unless p_0 = 1 and p_{n_p} != 0, and
    UnstableGenerator if any root lies outside the unit circle or a
    unit-circle root is repeated.
    """
    p = np.asarray(p, dtype=float).ravel()
    if len(p) < 2:
        raise BadLeadingCoefficient("filter needs at least degree 1")
    if abs(p[0] - 1.0) > 1e-12:
        raise BadLeadingCoefficient(f"p_0 = {p[0]}, expected 1")
    if abs(p[-1]) < 1e-12:
        raise BadLeadingCoefficient("trailing coefficient p_{n_p} must be nonzero")
    roots = np.roots(p)
    if np.any(np.abs(roots) > 1.0 + ROOT_TOL):
        raise UnstableGenerator(f"root outside unit circle: {roots}")
    on_circle = roots[np.abs(roots) > 1.0 - 1e-7]
    for i in range(len(on_circle)):
        for j in range(i + 1, len(on_circle)):
            if abs(on_circle[i] - on_circle[j]) < 1e-7:
                raise UnstableGenerator(
                    f"repeated unit-circle root {on_circle[i]}"
                )
    flt = Filter(p=p)
    flt.p.setflags(write=False)
    return flt


def apply_delta(f, history):
    """sum_i p_i history[i] for a newest-first history of n_p + 1 vectors."""
    history = [np.atleast_1d(np.asarray(x, dtype=float)) for x in history]
    if len(history) != f.n_p + 1:
        raise WrongHistoryLength(f"need {f.n_p + 1} entries, got {len(history)}")
    return sum(pi * x for pi, x in zip(f.p, history))


def invert_delta(f, delta, past):
    """Newest element from its filtered value: delta - sum_{i>=1} p_i past[i-1]."""
    past = [np.atleast_1d(np.asarray(x, dtype=float)) for x in past]
    if len(past) != f.n_p:
        raise WrongHistoryLength(f"need {f.n_p} entries, got {len(past)}")
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    return delta - sum(pi * x for pi, x in zip(f.p[1:], past))


def _box_of(p):
    box = p.as_box()
    if box is not None:
        return box
    eye = np.eye(p.dim)
    hi = np.array([p.support(eye[i]) for i in range(p.dim)])
    lo = np.array([-p.support(-eye[i]) for i in range(p.dim)])
    return lo, hi


def build_v_set(f, W, block):
    """Construct the generator-invariant disturbance-history set.

    Returns (V, V1) with V in R^{n_p * block} satisfying S V subseteq V and
    containing the forward orbit of W^{n_p}, and V1 its newest-block slice.
    Starts from the stacked set itself; if that is not already invariant,
    tries an interval-hull iteration (strictly stable generators), then an
    orbit-hull polytope.  A generator with irrational rotation admits no
    exactly invariant polytope, so the orbit hull is certified to the
    relative tolerance V_INV_TOL and flagged ``outer=True``.
    """
    if not W.is_bounded():
        raise ConstructionFailed("W must be bounded")
    if not W.contains(np.zeros(W.dim)):
        raise ConstructionFailed("W must contain the origin")
    if W.dim != block:
        raise ConstructionFailed(f"W dim {W.dim} != block {block}")
    n_p = f.n_p
    S = f.companion(block)

    V = W
    for _ in range(n_p - 1):
        V = V.cross(W)

    if _s_invariant(V, S):
        return V, _first_block(V, block, n_p)

    lo0, hi0 = _box_of(V)
    width0 = float(np.max(hi0 - lo0))
    lo, hi = lo0, hi0
    for _ in range(V_ITER_CAP):
        # box hull of V union S V, evaluated through support functions
        box = Polytope.box(lo, hi)
        hi_s = np.array([box.support(S.T @ e) for e in np.eye(n_p * block)])
        lo_s = -np.array([box.support(S.T @ -e) for e in np.eye(n_p * block)])
        new_lo = np.minimum(lo, lo_s)
        new_hi = np.maximum(hi, hi_s)
        if np.all(new_lo >= lo - 1e-12) and np.all(new_hi <= hi + 1e-12):
            V_out = Polytope.box(lo, hi)
            V_out.outer = True
            return V_out, _first_block(V_out, block, n_p)
        if np.max(new_hi - new_lo) > 1e3 * width0:
            break       # rotation-like generator: box iteration diverges
        lo, hi = new_lo, new_hi
    V_out = _orbit_hull(V, S)
    return V_out, _first_block(V_out, block, n_p)


def _orbit_hull(V0, S):
    """Invariant polytope containing the S-orbit of V0, via the real
    eigenbasis where S is block diagonal with scaled rotations.

    Per real eigenvalue (|lam| <= 1) a symmetric interval is invariant; per
    complex pair a centered disk is, approximated by a polygon.  The product
    maps back exactly through the eigenbasis and is certified S-invariant
    within V_INV_TOL relative tolerance (exact invariance of a polytope is
    impossible for irrational rotations)."""
    dim = S.shape[0]
    lam, Vc = np.linalg.eig(S)
    cols, blocks = [], []
    used = np.zeros(dim, dtype=bool)
    for i in range(dim):
        if used[i]:
            continue
        if abs(lam[i].imag) < 1e-9:
            cols.append(np.real(Vc[:, i]))
            blocks.append(1)
            used[i] = True
        else:
            j = int(np.argmin(np.abs(lam - np.conj(lam[i]))
                              + 1e6 * used + 1e6 * (np.arange(dim) == i)))
            cols.append(np.real(Vc[:, i]))
            cols.append(np.imag(Vc[:, i]))
            blocks.append(2)
            used[i] = used[j] = True
    T = np.column_stack(cols)
    if np.linalg.cond(T) > 1e8:
        raise ConstructionFailed(
            "generator eigenbasis too ill-conditioned for the orbit hull")
    B = np.linalg.inv(T)

    parts = []
    r = 0
    for bsz in blocks:
        rows = B[r:r + bsz]
        r += bsz
        if bsz == 1:
            a = max(V0.support(rows[0]), V0.support(-rows[0]))
            parts.append(Polytope.box([-a], [a]))
        else:
            # disk radius: max of ||rows @ x|| over V0, by angular sampling
            phis = np.linspace(0.0, np.pi, 128, endpoint=False)
            rad = max(V0.support(np.cos(p) * rows[0] + np.sin(p) * rows[1])
                      for p in phis)
            rad = max(rad, *(V0.support(-(np.cos(p) * rows[0]
                                          + np.sin(p) * rows[1]))
                             for p in phis))
            rad /= np.cos(np.pi / 256)      # sampling gap, stay outer
            ang = np.linspace(0.0, 2 * np.pi, V_GRID_2D, endpoint=False)
            F2 = np.column_stack([np.cos(ang), np.sin(ang)])
            parts.append(Polytope(F2, np.full(V_GRID_2D, rad),
                                  normalize=False))
    P = parts[0]
    for q in parts[1:]:
        P = P.cross(q)
    V_out = Polytope(P.H @ B, P.h, normalize=False)
    V_out.outer = True
    scale = max(float(np.max(np.abs(V_out.h))), 1e-12)
    if not _s_invariant(V_out, S, tol=V_INV_TOL * scale):
        raise ConstructionFailed(
            "orbit hull not invariant within tolerance")
    return V_out


def _s_invariant(V, S, tol=pt.TOL):
    """Check S V subseteq V via facet supports."""
    for row, off in zip(V.H, V.h):
        if V.support(S.T @ row) > off + tol:
            return False
    return True


def _first_block(V, block, n_p):
    box = V.as_box()
    if box is not None:
        return Polytope.box(box[0][:block], box[1][:block])
    if n_p == 1:
        return V
    # coordinate projection through support functions: exact in every
    # stored direction (h_proj(d) = h_V(lift(d)))
    sel = np.hstack([np.eye(block), np.zeros((block, (n_p - 1) * block))])
    eye = np.eye(block)
    dirs = [eye[i] for i in range(block)] + [-eye[i] for i in range(block)]
    if block == 2:
        ang = np.linspace(0.0, 2 * np.pi, V_GRID_2D, endpoint=False)
        dirs.extend(np.column_stack([np.cos(ang), np.sin(ang)]))
    F = pt._dedup_rows(np.array(dirs), np.zeros(len(dirs)))[0]
    g = np.array([V.support(sel.T @ fd) for fd in F])
    out = Polytope(F, g, normalize=False)
    out.outer = block > 2
    return out
