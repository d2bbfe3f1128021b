"""Lifted prediction model over the extended state.

The extended state stacks the filtered state increment with short histories of
output, state, and input:

    xi(t) = [dx(t); e(t..t-n_p+1); x(t..t-n_p+1); u(t-1..t-n_p)]

where dx(t) = sum_i p_i x(t-i).  Its dynamics reproduce the true plant exactly
whenever the exogenous signal satisfies the filter recursion, with the bounded
residual disturbances entering through B1 (current) and B2 (stacked past).
All histories are newest-first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, IllPosed, RankDeficient, WrongHistoryLength
from .polytope import Polytope
from .signal_model import Filter, apply_delta

RANK_RTOL = 1e-8


@dataclass(frozen=True)
class Plant:
    """Discrete-time LTI plant with constraint and disturbance sets."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    X: Polytope
    U: Polytope
    Wx: Polytope
    We: Polytope

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        n, m, p = A.shape[0], B.shape[1], C.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n:
            raise DimensionMismatch("inconsistent plant matrices")
        for name, S, d in (("X", self.X, n), ("U", self.U, m),
                           ("Wx", self.Wx, n), ("We", self.We, p)):
            if S.dim != d:
                raise DimensionMismatch(f"{name} has dim {S.dim}, expected {d}")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]


def _full_rank(M, tol_rtol=RANK_RTOL):
    s = np.linalg.svd(M, compute_uv=False)
    if len(s) == 0:
        return False
    return s[-1] > tol_rtol * s[0]


def controllable(A, B):
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return _full_rank(np.hstack(blocks)) if n else True


def observable(A, C):
    return controllable(A.T, C.T)


@dataclass(frozen=True)
class ExtendedModel:
    """All matrices of the lifted dynamics plus selector and history maps."""

    A_xi: np.ndarray
    B_xi: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C_dx: np.ndarray
    C_x: np.ndarray
    C_e: np.ndarray
    C_u: np.ndarray
    M_e: np.ndarray
    T_i: tuple
    T_v: np.ndarray
    n: int
    m: int
    p: int
    n_p: int
    filter: Filter
    plant: Plant

    @property
    def n_xi(self):
        return self.n + self.n_p * (self.n + self.p + self.m)

    # layout offsets
    @property
    def off_e(self):
        return self.n

    @property
    def off_x(self):
        return self.n + self.n_p * self.p

    @property
    def off_u(self):
        return self.n + self.n_p * (self.p + self.n)

    def u_stack(self, xi):
        return np.asarray(xi)[self.off_u:]

    def build_transform(self, T_c):
        """State transform T = [C_x; T_c; T_v] splitting nominal coordinates
        (x, controller state) from the embedded disturbance history."""
        T_0 = np.vstack([self.C_x, T_c])
        T = np.vstack([T_0, self.T_v])
        return T_0, T


def build_extended(plant, f):
    """Assemble the lifted model; raises RankDeficient / IllPosed on bad plants."""
    A, B, C = plant.A, plant.B, plant.C
    n, m, p = plant.n, plant.m, plant.p
    n_p = f.n_p
    pc = f.p

    if not controllable(A, B):
        raise RankDeficient("(A, B) not controllable")
    if not observable(A, C):
        raise RankDeficient("(A, C) not observable")
    if not check_well_posed(plant, f):
        raise IllPosed("regulation problem is not well-posed for this filter")

    n_xi = n + n_p * (n + p + m)
    off_e = n
    off_x = n + n_p * p
    off_u = n + n_p * (p + n)

    A_xi = np.zeros((n_xi, n_xi))
    B_xi = np.zeros((n_xi, m))

    # dx(t+1) = A dx + B du
    A_xi[:n, :n] = A
    B_xi[:n, :] = B
    # e(t+1) = C A dx + C B du - sum p_{j+1} e(t-j)
    A_xi[off_e:off_e + p, :n] = C @ A
    B_xi[off_e:off_e + p, :] = C @ B
    for j in range(n_p):
        A_xi[off_e:off_e + p, off_e + j * p:off_e + (j + 1) * p] = \
            -pc[j + 1] * np.eye(p)
    for k in range(1, n_p):
        A_xi[off_e + k * p:off_e + (k + 1) * p,
             off_e + (k - 1) * p:off_e + k * p] = np.eye(p)
    # x(t+1) = A dx + B du - sum p_{j+1} x(t-j)
    A_xi[off_x:off_x + n, :n] = A
    B_xi[off_x:off_x + n, :] = B
    for j in range(n_p):
        A_xi[off_x:off_x + n, off_x + j * n:off_x + (j + 1) * n] = \
            -pc[j + 1] * np.eye(n)
    for k in range(1, n_p):
        A_xi[off_x + k * n:off_x + (k + 1) * n,
             off_x + (k - 1) * n:off_x + k * n] = np.eye(n)
    # u(t) = du - sum p_{j+1} u(t-1-j)
    B_xi[off_u:off_u + m, :] = np.eye(m)
    for j in range(n_p):
        A_xi[off_u:off_u + m, off_u + j * m:off_u + (j + 1) * m] = \
            -pc[j + 1] * np.eye(m)
    for k in range(1, n_p):
        A_xi[off_u + k * m:off_u + (k + 1) * m,
             off_u + (k - 1) * m:off_u + k * m] = np.eye(m)

    # disturbance injection, w(t) = [w_x(t); w_e(t+1)]
    B1 = np.zeros((n_xi, n + p))
    B1[:n, :n] = np.eye(n)
    B1[off_e:off_e + p, :n] = C
    B1[off_e:off_e + p, n:] = np.eye(p)
    B1[off_x:off_x + n, :n] = np.eye(n)

    B2 = np.zeros((n_xi, n_p * (n + p)))
    for i in range(1, n_p + 1):
        c = (i - 1) * (n + p)
        B2[:n, c:c + n] = pc[i] * np.eye(n)
        B2[off_e:off_e + p, c:c + n] = pc[i] * C
        B2[off_e:off_e + p, c + n:c + n + p] = pc[i] * np.eye(p)
        B2[off_x:off_x + n, c:c + n] = pc[i] * np.eye(n)

    def sel(offset, size):
        M = np.zeros((size, n_xi))
        M[:, offset:offset + size] = np.eye(size)
        return M

    C_dx = sel(0, n)
    C_e = sel(off_e, p)
    C_x = sel(off_x, n)
    C_u = sel(off_u, m)
    M_e = sel(off_e, n_p * p)

    # history selectors for x(t-j) with the oldest recovered through dx
    def x_at(j):
        if j < n_p:
            return sel(off_x + j * n, n)
        # p_{n_p} x(t-n_p) = dx(t) - sum_{i<n_p} p_i x(t-i)
        M = C_dx.copy()
        for i in range(n_p):
            M -= pc[i] * sel(off_x + i * n, n)
        return M / pc[n_p]

    T_list = []
    for i in range(1, n_p + 1):
        e_sel = sel(off_e + (i - 1) * p, p)
        u_sel = sel(off_u + (i - 1) * m, m)
        top = x_at(i - 1) - A @ x_at(i) - B @ u_sel
        bot = e_sel - C @ x_at(i - 1)
        T_list.append(np.vstack([top, bot]))
    T_v = np.vstack(T_list)

    return ExtendedModel(
        A_xi=A_xi, B_xi=B_xi, B1=B1, B2=B2,
        C_dx=C_dx, C_x=C_x, C_e=C_e, C_u=C_u, M_e=M_e,
        T_i=tuple(T_list), T_v=T_v,
        n=n, m=m, p=p, n_p=n_p, filter=f, plant=plant,
    )


def check_well_posed(plant, f):
    """True iff the regulator equations have a unique generator-compatible solution.

    Tests that no generator mode is a transmission zero of (A, B, C); requires
    as many inputs as regulated outputs for uniqueness.
    """
    A, B, C = plant.A, plant.B, plant.C
    n, m, p = plant.n, plant.m, plant.p
    if m != p:
        return False
    scale = max(np.linalg.norm(A), np.linalg.norm(B), np.linalg.norm(C), 1.0)
    for lam in np.unique(np.round(f.roots(), 12)):
        R = np.block([
            [lam * np.eye(n) - A, -B],
            [C, np.zeros((p, m))],
        ])
        s = np.linalg.svd(R, compute_uv=False)
        if s[-1] < 1e-8 * scale:
            return False
    return True


def pack_state(model, x_hist, e_hist, u_hist):
    """Pack newest-first histories into the extended state."""
    if len(x_hist) != model.n_p + 1:
        raise WrongHistoryLength(f"x_hist needs {model.n_p + 1} entries")
    if len(e_hist) != model.n_p:
        raise WrongHistoryLength(f"e_hist needs {model.n_p} entries")
    if len(u_hist) != model.n_p:
        raise WrongHistoryLength(f"u_hist needs {model.n_p} entries")
    dx = apply_delta(model.filter, x_hist)
    parts = [np.atleast_1d(dx)]
    parts += [np.atleast_1d(np.asarray(e, dtype=float)) for e in e_hist]
    parts += [np.atleast_1d(np.asarray(x, dtype=float)) for x in x_hist[:-1]]
    parts += [np.atleast_1d(np.asarray(u, dtype=float)) for u in u_hist]
    xi = np.concatenate(parts)
    if xi.shape[0] != model.n_xi:
        raise DimensionMismatch(f"packed state has dim {xi.shape[0]}")
    return xi


@dataclass
class Trajectory:
    """Ground-truth closed- or open-loop run of the true plant."""

    x: np.ndarray      # (T+1, n)
    e: np.ndarray      # (T+1, p)
    u: np.ndarray      # (T, m)
    v: np.ndarray      # (T+1, n+p), exogenous signal [v_x; v_e]
    wx: np.ndarray     # (T+1, n)
    we: np.ndarray     # (T+1, p)

    def pack(self, model, t):
        """Extended state at time t >= n_p (uses the recorded histories)."""
        n_p = model.n_p
        x_hist = [self.x[t - i] for i in range(n_p + 1)]
        e_hist = [self.e[t - i] for i in range(n_p)]
        u_hist = [self.u[t - 1 - i] for i in range(n_p)]
        return pack_state(model, x_hist, e_hist, u_hist)


def generate_signal(f, v_init, length, dim):
    """Roll the generator recursion forward from n_p seeded past values."""
    n_p = f.n_p
    v_init = [np.atleast_1d(np.asarray(v, dtype=float)) for v in v_init]
    if len(v_init) != n_p:
        raise WrongHistoryLength(f"v_init needs {n_p} entries")
    hist = list(v_init)  # newest first: v(-1), ..., v(-n_p)
    out = np.zeros((length, dim))
    for t in range(length):
        v = -sum(f.p[i] * hist[i - 1] for i in range(1, n_p + 1))
        out[t] = v
        hist = [v] + hist[:-1]
    return out


def simulate_plant(plant, f, v_init, w_seq, u_seq, x0, T):
    """Ground-truth trajectory of the true plant under a known input sequence.

    v_init seeds the n_p past values of (v_x, v_e), newest first; w_seq is
    (wx, we) with shapes (T+1, n) and (T+1, p), or None for zero.
    """
    n, p = plant.n, plant.p
    if w_seq is None:
        wx = np.zeros((T + 1, n))
        we = np.zeros((T + 1, p))
    else:
        wx, we = (np.asarray(w, dtype=float) for w in w_seq)
    u_seq = np.asarray(u_seq, dtype=float).reshape(T, plant.m)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape[0] != n:
        raise DimensionMismatch("x0 dim mismatch")

    v = generate_signal(f, v_init, T + 1, n + p)
    x = np.zeros((T + 1, n))
    e = np.zeros((T + 1, p))
    x[0] = x0
    for t in range(T + 1):
        e[t] = plant.C @ x[t] + v[t, n:] + we[t]
        if t < T:
            x[t + 1] = plant.A @ x[t] + v[t, :n] + wx[t] + plant.B @ u_seq[t]
    return Trajectory(x=x, e=e, u=u_seq, v=v, wx=wx, we=we)


def lifted_disturbance(model, traj, t):
    """(w(t), stacked past w) aligned with the lifted model's inputs."""
    n = model.n
    w_now = np.concatenate([traj.wx[t], traj.we[t + 1]])
    past = [np.concatenate([traj.wx[t - i], traj.we[t + 1 - i]])
            for i in range(1, model.n_p + 1)]
    return w_now, np.concatenate(past) if past else np.zeros(0)
