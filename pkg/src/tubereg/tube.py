"""Robust invariant tube sets and the admissible artificial-reference set.

The closed-loop error between the real lifted state and the nominal plan
evolves as (x̂, x̂_c)⁺ = A_cl (x̂, x̂_c) + B_cl d with d drawn from the bounded
set V1 ⊕ (Wx × We).  This module computes an invariant outer approximation S
of the minimal robust positively invariant set of that recursion, projects it
onto state and input tightenings S_x and S_u, and builds the halfspace system
Z_a of admissible initial reference states under σ-tightened constraints.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import polytope as pt
from .errors import (
    CertificationFailed,
    NoConvergence,
    NotSchur,
    TighteningInfeasible,
)
from .polytope import Polytope

RPI_EPS_DEFAULT = 0.05
RPI_K_CAP = 500
RPI_CERT_TOL = 1e-8
CERT_CAP = 200
SIGMA_DEFAULT = 1.05
DENSE_2D = 256


@dataclass(frozen=True)
class TubeSets:
    S: Polytope
    S_x: Polytope
    S_u: Polytope
    V: Polytope
    V1: Polytope
    X_tight: Polytope
    U_tight: Polytope
    epsilon: float

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            **{k: getattr(self, k).to_dict()
               for k in ("S", "S_x", "S_u", "V", "V1", "X_tight", "U_tight")},
        }

    @classmethod
    def from_dict(cls, d):
        return cls(epsilon=d["epsilon"],
                   **{k: Polytope.from_dict(d[k])
                      for k in ("S", "S_x", "S_u", "V", "V1",
                                "X_tight", "U_tight")})

    def save(self, path, config_hash=None):
        payload = {"config_hash": config_hash, "sets": self.to_dict()}
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path, config_hash=None):
        """Returns the cached sets, or None when the config hash differs."""
        try:
            with open(path) as fh:
                payload = json.load(fh)
        except (OSError, ValueError):
            return None
        if config_hash is not None and payload.get("config_hash") != config_hash:
            return None
        return cls.from_dict(payload["sets"])


@dataclass(frozen=True)
class ReferenceSet:
    """Halfspace system over initial reference states ξ_a,0.

    Za_H / Za_h hold every constraint in pure halfspace form (the invariance
    equalities appear as paired rows); n_eq_rows counts those paired-equality
    rows, which sit first.
    """

    Za_H: np.ndarray
    Za_h: np.ndarray
    sigma: float
    horizon_cert: int
    n_eq_rows: int = 0

    def contains(self, xi, tol=1e-7):
        return bool(np.all(self.Za_H @ np.asarray(xi) <= self.Za_h + tol))

    def as_polytope(self):
        return Polytope(self.Za_H, self.Za_h, normalize=False)


def config_hash(*parts):
    """Stable hash of numeric configuration data, for tube-set caching."""
    blob = json.dumps([np.asarray(p, dtype=float).ravel().tolist()
                       for p in parts])
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def closed_loop_error_matrices(design, plant):
    """(A_cl, B_cl) of the plan-tracking error dynamics; the disturbance
    input is d = [w_x + v_x; w_e + v_e] in R^{n+p}."""
    A, B, C = plant.A, plant.B, plant.C
    n, p = plant.n, plant.p
    n_c = design.A_c.shape[0]
    A_cl = np.block([
        [A + B @ (design.K_x + design.D_c @ C), B @ design.C_c],
        [design.B_c @ C, design.A_c],
    ])
    B_cl = np.block([
        [np.eye(n), B @ design.D_c],
        [np.zeros((n_c, n)), design.B_c],
    ])
    return A_cl, B_cl


def _support_fn(sets):
    """Support function of a Minkowski sum given the summand polytopes."""
    def h(f):
        return sum(s.support(f) for s in sets)
    return h


def _direction_set(dim, A_cl_T, depth):
    """Facet-normal candidates: axes, their backward A_cl-orbit, and a dense
    angular grid in two dimensions."""
    dirs = []
    eye = np.eye(dim)
    base = [eye[i] for i in range(dim)] + [-eye[i] for i in range(dim)]
    dirs.extend(base)
    M = np.eye(dim)
    for _ in range(depth):
        M = A_cl_T @ M
        for v in base:
            w = M @ v
            nrm = np.linalg.norm(w)
            if nrm > 1e-12:
                dirs.append(w / nrm)
    if dim == 2:
        ang = np.linspace(0.0, 2 * np.pi, DENSE_2D, endpoint=False)
        dirs.extend(np.column_stack([np.cos(ang), np.sin(ang)]))
    F = pt._dedup_rows(np.array(dirs), np.zeros(len(dirs)))[0]
    return F


def compute_rpi(design, plant, V1, eps=RPI_EPS_DEFAULT):
    """(1+eps)-outer approximation of the minimal RPI set of the error
    dynamics, certified invariant facet-by-facet.

    Builds S from truncated support sums g_i = (1+eps) Σ_k h_D(A_cl'^k f_i)
    over a fixed direction set, then lifts offsets until every facet satisfies
    the invariance inequality h_S(A_cl' f) + h_D(f) <= g.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    A_cl, B_cl = closed_loop_error_matrices(design, plant)
    rho = np.max(np.abs(np.linalg.eigvals(A_cl))) if A_cl.size else 0.0
    if rho >= 1.0:
        raise NotSchur(f"closed-loop error spectral radius {rho:.6f} >= 1")
    dim = A_cl.shape[0]
    W = plant.Wx.cross(plant.We)
    summands = [V1, W]

    def h_D(f):
        g = B_cl.T @ f
        return sum(s.support(g) for s in summands)

    # truncation horizon: tail support below eps/(1+eps) of the base support
    # in every candidate direction
    A_T = A_cl.T
    F = _direction_set(dim, A_T, depth=30)
    base = np.array([h_D(f) for f in F])
    if np.max(base, initial=0.0) <= 1e-14:
        # zero disturbance: S = {0}
        return Polytope(np.vstack([np.eye(dim), -np.eye(dim)]),
                        np.zeros(2 * dim), normalize=False)
    g = base.copy()
    Mk = A_T.copy()
    K = None
    for k in range(1, RPI_K_CAP + 1):
        tail = np.array([h_D(Mk @ f) for f in F])
        ok = np.all(tail <= eps / (1.0 + eps) * np.maximum(base, 1e-14)
                    + 1e-14)
        if ok:
            K = k
            break
        g += tail
        Mk = A_T @ Mk
    if K is None:
        raise NoConvergence(f"no contraction after {RPI_K_CAP} terms")
    g *= (1.0 + eps)

    S = Polytope(F, g, normalize=False)
    # facet lift until invariant
    scale_ref = np.max(np.abs(g))
    stabilized = False
    for _ in range(100):
        vals = np.array([S.support(A_T @ f) + h_D(f) for f in F])
        if np.all(vals <= g + 1e-12 * max(scale_ref, 1.0)):
            stabilized = True
            break
        g = np.maximum(g, vals)
        S = Polytope(F, g, normalize=False)
    if not stabilized:
        # closure by uniform scaling: S(t g) is invariant once
        # t sigma_i + d_i <= t g_i, possible when every facet contracts
        sigma = np.array([S.support(A_T @ f) for f in F])
        d_off = np.array([h_D(f) for f in F])
        slack = g - sigma
        if np.any(slack <= 1e-12 * max(scale_ref, 1.0)):
            raise NoConvergence(
                "direction set does not contract under the closed loop")
        t = max(1.0, float(np.max(d_off / slack)))
        g = t * g
        S = Polytope(F, g, normalize=False)
    if not certify_rpi(S, A_cl, h_D):
        raise NoConvergence("invariance certificate failed after lifting")
    return S


def certify_rpi(S, A_cl, h_D, tol=RPI_CERT_TOL):
    """Facet certificate: support of A_cl S ⊕ D never exceeds the offset."""
    for f, gval in zip(S.H, S.h):
        if S.support(A_cl.T @ f) + h_D(f) > gval + tol:
            return False
    return True


def _image_set(h_of_dir, dim, extra_dirs=()):
    """Outer polytope of a convex set given through its support function,
    evaluated on axes, a dense 2-D grid, and any extra directions."""
    dirs = [v for v in np.vstack([np.eye(dim), -np.eye(dim)])]
    for v in extra_dirs:
        nrm = np.linalg.norm(v)
        if nrm > 1e-12:
            dirs.append(np.asarray(v, dtype=float) / nrm)
    if dim == 2:
        ang = np.linspace(0.0, 2 * np.pi, DENSE_2D, endpoint=False)
        dirs.extend(np.column_stack([np.cos(ang), np.sin(ang)]))
    F = pt._dedup_rows(np.array(dirs), np.zeros(len(dirs)))[0]
    h = np.array([h_of_dir(f) for f in F])
    P = Polytope(F, h, normalize=False)
    if np.max(np.abs(h), initial=0.0) <= 1e-12:
        return P          # a singleton at the origin is exact
    P.outer = True
    return P


def project_tubes(S, design, plant, V1):
    """State and input tightenings implied by the tube cross-section S.

    S_x collects the x̂ components of S; S_u maps S through the feedback and
    adds the disturbance feedthrough of the dynamic controller.  Supports are
    exact in every stored direction; both sets are flagged outer in dimensions
    above two.
    """
    n, p = plant.n, plant.p
    dim = S.dim
    Px = np.hstack([np.eye(n), np.zeros((n, dim - n))])
    S_x = _image_set(lambda f: S.support(Px.T @ f), n,
                     extra_dirs=list(plant.X.H))

    G = np.hstack([design.K_x + design.D_c @ plant.C, design.C_c])
    Pv = np.zeros((p, V1.dim))
    Pv[:, n:] = np.eye(p)

    def h_u(f):
        g = design.D_c.T @ f
        return (S.support(G.T @ f) + plant.We.support(g)
                + V1.support(Pv.T @ g))

    S_u = _image_set(h_u, design.K_x.shape[0], extra_dirs=list(plant.U.H))
    return S_x, S_u


def build_tube_sets(model, design, eps=RPI_EPS_DEFAULT):
    """Convenience pipeline: V/V1 from the filter and disturbance sets, the
    RPI set, its projections, and the tightened constraints."""
    from .signal_model import build_v_set

    plant = model.plant
    W = plant.Wx.cross(plant.We)
    V, V1 = build_v_set(model.filter, W, plant.n + plant.p)
    S = compute_rpi(design, plant, V1, eps=eps)
    S_x, S_u = project_tubes(S, design, plant, V1)
    X_tight = pt.pontryagin_diff(plant.X, S_x)
    U_tight = pt.pontryagin_diff(plant.U, S_u)
    if X_tight.is_empty() or U_tight.is_empty():
        raise TighteningInfeasible("tube projections swallow the constraints")
    return TubeSets(S=S, S_x=S_x, S_u=S_u, V=V, V1=V1,
                    X_tight=X_tight, U_tight=U_tight, epsilon=eps)


def build_reference_set(model, tubes, sigma=SIGMA_DEFAULT):
    """Admissible initial reference states: the A_ξ-orbit must keep the
    filtered state at zero and the state/input inside σ-tightened sets.

    The per-step constraint blocks are accumulated until the next block is
    implied by the current system (checked row-by-row via support LPs), which
    certifies the infinite-horizon system finitely.
    """
    if sigma <= 1.0:
        raise ValueError("sigma must exceed 1")
    plant = model.plant
    X_t = pt.pontryagin_diff(plant.X, pt.scale(tubes.S_x, sigma))
    U_t = pt.pontryagin_diff(plant.U, pt.scale(tubes.S_u, sigma))
    if X_t.is_empty() or U_t.is_empty():
        raise TighteningInfeasible(
            f"sigma={sigma} tightening leaves no feasible set")

    A_xi = model.A_xi
    n_xi = model.n_xi

    # tightened offsets along the original facet normals
    def offsets(P_orig, P_t):
        return np.array([P_t.support(f) for f in P_orig.H])

    hx = offsets(plant.X, X_t)
    hu = offsets(plant.U, U_t)

    def block(M):
        """(H_eq, H_in, h_in) of one step's constraints at orbit matrix M."""
        H_eq = model.C_dx @ M
        H_in = np.vstack([plant.X.H @ model.C_x @ M,
                          plant.U.H @ model.C_u @ M])
        h_in = np.concatenate([hx, hu])
        return H_eq, H_in, h_in

    M = np.eye(n_xi)
    eq_rows, in_rows, in_rhs = [], [], []
    H_eq, H_in, h_in = block(M)
    eq_rows.append(H_eq)
    in_rows.append(H_in)
    in_rhs.append(h_in)
    horizon = None
    for t in range(CERT_CAP + 1):
        M = A_xi @ M
        H_eq_n, H_in_n, h_in_n = block(M)
        P = _halfspace_polytope(eq_rows, in_rows, in_rhs, n_xi)
        if _implied(P, H_eq_n, H_in_n, h_in_n):
            horizon = t
            break
        eq_rows.append(H_eq_n)
        in_rows.append(H_in_n)
        in_rhs.append(h_in_n)
    if horizon is None:
        raise CertificationFailed(
            f"orbit constraints not closed after {CERT_CAP} steps")

    Heq = np.vstack(eq_rows)
    Hin = np.vstack(in_rows)
    hin = np.concatenate(in_rhs)
    Za_H = np.vstack([Heq, -Heq, Hin])
    Za_h = np.concatenate([np.zeros(2 * Heq.shape[0]), hin])
    return ReferenceSet(Za_H=Za_H, Za_h=Za_h, sigma=sigma,
                        horizon_cert=horizon, n_eq_rows=2 * Heq.shape[0])


def _halfspace_polytope(eq_rows, in_rows, in_rhs, n_xi):
    Heq = np.vstack(eq_rows)
    H = np.vstack([Heq, -Heq] + in_rows)
    h = np.concatenate([np.zeros(2 * Heq.shape[0])] + in_rhs)
    return Polytope(H, h, normalize=False)


def _implied(P, H_eq, H_in, h_in, tol=1e-7):
    """Every row of the next block already holds on P."""
    for row in H_eq:
        hi = P.support(row)
        lo = -P.support(-row)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            return False
        if hi > tol or lo < -tol:
            return False
    for row, rhs in zip(H_in, h_in):
        s = P.support(row)
        if not np.isfinite(s) or s > rhs + tol:
            return False
    return True
