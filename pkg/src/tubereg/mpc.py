"""Robust internal-model tube MPC: condensed QP formulation and control law.

Each step solves, over (Δu_0..N-1, ξ_0, ξ_a0, τ),

  min  Σ_k ‖Δx_k − Δx_a,k‖²_{Q_dx} + ‖M_e(ξ_k − ξ_a,k)‖²_{Q_e} + ‖Δu_k‖²_R
       + λ τ² + ‖M_e ξ_a0‖²_P

subject to tightened state/input constraints on the nominal plan, the
disturbance-state interpolation T_v ξ_0 = τ v̄ + (1−τ) T_v ξ, tube anchoring
T_0(ξ − ξ_0) ∈ S, the terminal condition ξ_N = ξ_a,N, and ξ_a0 in the
admissible reference set.  The applied input is u = u_0* + K(ξ − ξ_0*) and
the fallback disturbance state advances as v̄⁺ = T_v ξ_1*.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigViolation, DimensionMismatch, InfeasibleProblem, \
    SolverFailure
from . import polytope as pt
from .qp import QpProblem, QpSolution, QpSolver


def horizon_lower_bound(model):
    """Strict lower bound on N required by the stability argument (the larger
    of the two forms it is stated in)."""
    n, m, p, n_p = model.n, model.m, model.p, model.n_p
    return max(n_p * (n + p + m) + n, n * (n_p + 1) + n_p * m + n_p * p)


@dataclass
class MpcConfig:
    """Tuning of the per-step optimization.  `lam` is the weight on the
    interpolation variable τ (None selects the horizon N)."""

    N: int
    Q_dx: np.ndarray
    Q_e: np.ndarray
    R: np.ndarray
    P: np.ndarray                 # terminal weight on M_e ξ_a0
    lam: float | None = None
    sigma: float = 1.05
    extra_constraints: bool = False

    def __post_init__(self):
        self.Q_dx = np.atleast_2d(np.asarray(self.Q_dx, dtype=float))
        self.Q_e = np.atleast_2d(np.asarray(self.Q_e, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        P = getattr(self.P, "P", self.P)
        self.P = np.atleast_2d(np.asarray(P, dtype=float))
        if self.lam is None:
            self.lam = float(self.N)
        if self.lam < 0:
            raise ConfigViolation("lam must be nonnegative")
        for name in ("Q_e", "R"):
            M = getattr(self, name)
            if np.min(np.linalg.eigvalsh(0.5 * (M + M.T))) <= 0:
                raise ConfigViolation(f"{name} must be positive definite")
        if np.min(np.linalg.eigvalsh(
                0.5 * (self.Q_dx + self.Q_dx.T))) < -1e-12:
            raise ConfigViolation("Q_dx must be positive semidefinite")

    def validate_for(self, model):
        bound = horizon_lower_bound(model)
        if self.N <= bound:
            raise ConfigViolation(f"horizon N={self.N} must exceed {bound}")
        if self.Q_dx.shape != (model.n, model.n):
            raise ConfigViolation("Q_dx must be n x n")
        d = model.n_p * model.p
        if self.Q_e.shape != (d, d) or self.P.shape != (d, d):
            raise ConfigViolation("Q_e and P must act on the output stack")
        if self.R.shape != (model.m, model.m):
            raise ConfigViolation("R must be m x m")


@dataclass
class MpcStep:
    u_applied: np.ndarray | None
    xi0_star: np.ndarray | None
    xi1_star: np.ndarray | None
    xia0_star: np.ndarray | None
    tau_star: float | None
    delta_u_star: np.ndarray | None
    vbar_next: np.ndarray | None
    objective: float
    status: str
    solve_iterations: int
    diagnostics: dict = field(default_factory=dict)


class Mpc:
    """One controller instance per control loop; owns the fallback state v̄
    and the warm start.  Call reset(xi) once after the initialization phase,
    then step(xi) every sample."""

    def __init__(self, model, design, tubes, refset, cfg):
        cfg.validate_for(model)
        self.model = model
        self.design = design
        self.tubes = tubes
        self.refset = refset
        self.cfg = cfg
        self.T_0, _ = model.build_transform(design.T_c)
        self.vbar = None
        self._warm = None
        self._solver = QpSolver()
        self._precompute()

    # -- static data ------------------------------------------------------

    def _precompute(self):
        model, cfg = self.model, self.cfg
        N, n_xi, m = cfg.N, model.n_xi, model.m
        self.n_z = N * m + 2 * n_xi + 1
        self.s_du = slice(0, N * m)
        self.s_xi0 = slice(N * m, N * m + n_xi)
        self.s_xa0 = slice(N * m + n_xi, N * m + 2 * n_xi)
        self.i_tau = self.n_z - 1

        A, B = model.A_xi, model.B_xi
        powers = [np.eye(n_xi)]
        for _ in range(N + 1):
            powers.append(A @ powers[-1])
        self.powers = powers

        # condensed prediction maps ξ_k = E_k z and ξ_a,k = Ea_k z
        E = []
        for k in range(N + 1):
            Ek = np.zeros((n_xi, self.n_z))
            Ek[:, self.s_xi0] = powers[k]
            for j in range(k):
                Ek[:, j * m:(j + 1) * m] = powers[k - 1 - j] @ B
            E.append(Ek)
        self.E = E

        L = model.C_dx.T @ cfg.Q_dx @ model.C_dx \
            + model.M_e.T @ cfg.Q_e @ model.M_e
        H = np.zeros((self.n_z, self.n_z))
        for k in range(N):
            D = E[k].copy()
            D[:, self.s_xa0] -= powers[k]
            H += D.T @ L @ D
            sl = slice(k * m, (k + 1) * m)
            H[sl, sl] += cfg.R
        PM = model.M_e.T @ cfg.P @ model.M_e
        H[self.s_xa0, self.s_xa0] += PM
        H[self.i_tau, self.i_tau] += cfg.lam
        self.H = 2.0 * H          # objective written as 0.5 z'Hz
        self.q = np.zeros(self.n_z)

        self._build_static_rows()

    def _build_static_rows(self):
        """All constraint rows whose matrix part does not depend on (ξ, v̄)."""
        model, cfg, tubes = self.model, self.cfg, self.tubes
        N = cfg.N
        rows_in, rhs_in, self._rhs_in_dynamic = [], [], []
        rows_eq, rhs_eq = [], []

        Xt, Ut = tubes.X_tight, tubes.U_tight
        for k in range(N + 1):
            rows_in.append(Xt.H @ model.C_x @ self.E[k])
            rhs_in.append(Xt.h)
        for k in range(N):
            rows_in.append(Ut.H @ model.C_u @ self.E[k + 1])
            rhs_in.append(Ut.h)
        rows_in.append(Ut.H @ model.C_u @ model.A_xi @ self.E[N])
        rhs_in.append(Ut.h)

        # tube anchoring T_0(ξ − ξ_0) ∈ S: matrix part is constant, rhs moves
        S = tubes.S
        M = np.zeros((len(S.h), self.n_z))
        M[:, self.s_xi0] = -S.H @ self.T_0
        rows_in.append(M)
        self._anchor_rows = len(S.h)
        rhs_in.append(None)       # filled per step

        # τ ∈ [0, 1]
        tau_rows = np.zeros((2, self.n_z))
        tau_rows[0, self.i_tau] = 1.0
        tau_rows[1, self.i_tau] = -1.0
        rows_in.append(tau_rows)
        self._tau_rhs_idx = len(rhs_in)
        rhs_in.append(np.array([1.0, 0.0]))

        # ξ_a0 ∈ Z_a
        Za = np.zeros((len(self.refset.Za_h), self.n_z))
        Za[:, self.s_xa0] = self.refset.Za_H
        rows_in.append(Za)
        rhs_in.append(self.refset.Za_h)

        if cfg.extra_constraints:
            U, plant = model.plant.U, model.plant
            # u_0 + K(ξ − ξ_0) ∈ U with u_0 = C_u ξ_1
            M = U.H @ (model.C_u @ self.E[1])
            M[:, self.s_xi0] -= U.H @ self.design.K @ np.eye(model.n_xi)
            rows_in.append(M)
            rhs_in.append(None)
            self._extra_u_rows = U.H.shape[0]
            # T_v(ξ_0 − ξ) ∈ V ⊕ (−V)
            VV = pt.minkowski_sum(tubes.V, -tubes.V)
            Mv = np.zeros((len(VV.h), self.n_z))
            Mv[:, self.s_xi0] = VV.H @ model.T_v
            rows_in.append(Mv)
            rhs_in.append(None)
            self._VV = VV
        else:
            self._extra_u_rows = 0
            self._VV = None

        self._rows_in = rows_in
        self._rhs_in = rhs_in

        # equalities: interpolation (τ column varies), terminal ξ_N = ξ_a,N
        n_v = model.T_v.shape[0]
        interp = np.zeros((n_v, self.n_z))
        interp[:, self.s_xi0] = model.T_v
        self._interp_template = interp
        term = self.E[N].copy()
        term[:, self.s_xa0] -= self.powers[N]
        self._terminal_rows = term

    # -- per-step problem -------------------------------------------------

    def build_problem(self, xi, vbar, tau_min=0.0):
        model = self.model
        xi = np.asarray(xi, dtype=float).ravel()
        vbar = np.asarray(vbar, dtype=float).ravel()
        if xi.shape[0] != model.n_xi:
            raise DimensionMismatch("xi has wrong length")
        if vbar.shape[0] != model.T_v.shape[0]:
            raise DimensionMismatch("vbar has wrong length")

        Tv_xi = model.T_v @ xi
        interp = self._interp_template.copy()
        interp[:, self.i_tau] = Tv_xi - vbar
        A_eq = np.vstack([interp, self._terminal_rows])
        b_eq = np.concatenate([Tv_xi, np.zeros(model.n_xi)])

        rhs = list(self._rhs_in)
        if tau_min > 0.0:
            rhs[self._tau_rhs_idx] = np.array([1.0, -float(tau_min)])
        S = self.tubes.S
        idx = next(i for i, r in enumerate(rhs) if r is None)
        rhs[idx] = S.h - S.H @ (self.T_0 @ xi)
        if self.cfg.extra_constraints:
            U = model.plant.U
            nones = [i for i, r in enumerate(rhs) if r is None]
            rhs[nones[0]] = U.h - U.H @ (self.design.K @ xi)
            rhs[nones[1]] = self._VV.h + self._VV.H @ (model.T_v @ xi)
        A_in = np.vstack(self._rows_in)
        b_in = np.concatenate(rhs)
        return QpProblem(H=self.H, q=self.q, A_eq=A_eq, b_eq=b_eq,
                         A_in=A_in, b_in=b_in)

    # -- control law ------------------------------------------------------

    def reset(self, xi):
        """Initialize the fallback disturbance state: v̄(0) = T_v ξ(0)."""
        self.vbar = self.model.T_v @ np.asarray(xi, dtype=float).ravel()
        self._warm = None

    def step(self, xi, tau_min=0.0):
        model, cfg = self.model, self.cfg
        if self.vbar is None:
            self.reset(xi)
        xi = np.asarray(xi, dtype=float).ravel()
        prob = self.build_problem(xi, self.vbar, tau_min=tau_min)
        sol = self._solver.solve(prob, warm=self._warm)
        if sol.status == "MaxIter":
            raise SolverFailure(
                f"QP did not converge ({sol.iterations} iterations)")
        if sol.status != "Optimal":
            return MpcStep(
                u_applied=None, xi0_star=None, xi1_star=None,
                xia0_star=None, tau_star=None, delta_u_star=None,
                vbar_next=None, objective=np.inf, status="Infeasible",
                solve_iterations=sol.iterations,
                diagnostics={"certificate": sol.certificate,
                             "vbar": self.vbar.copy()})
        z = sol.z
        m, N = model.m, cfg.N
        du = z[self.s_du].reshape(N, m)
        xi0 = z[self.s_xi0]
        xia0 = z[self.s_xa0]
        tau = float(z[self.i_tau])
        xi1 = model.A_xi @ xi0 + model.B_xi @ du[0]
        u0 = model.C_u @ xi1
        u = u0 + self.design.K @ (xi - xi0)
        vbar_next = model.T_v @ xi1
        step = MpcStep(
            u_applied=u, xi0_star=xi0, xi1_star=xi1, xia0_star=xia0,
            tau_star=tau, delta_u_star=du, vbar_next=vbar_next,
            objective=sol.objective, status="Optimal",
            solve_iterations=sol.iterations)
        self.vbar = vbar_next
        self._warm = self._shift_warm(sol, du, xi0, xia0)
        return step

    def _shift_warm(self, sol, du, xi0, xia0):
        """Warm start mirroring the shifted feasibility candidate: inputs
        advance one step with a zero tail, states propagate, τ = 1."""
        model, cfg = self.model, self.cfg
        z = np.zeros(self.n_z)
        z[:(cfg.N - 1) * model.m] = du[1:].ravel()
        z[self.s_xi0] = model.A_xi @ xi0 + model.B_xi @ du[0]
        z[self.s_xa0] = model.A_xi @ xia0
        z[self.i_tau] = 1.0
        return QpSolution(z=z, objective=np.nan, status="warm",
                          kkt_residuals={}, y=sol.y, iterations=0)


def build_problem(model, design, tubes, refset, cfg, xi, vbar):
    """One-shot problem construction (stateless convenience form)."""
    return Mpc(model, design, tubes, refset, cfg).build_problem(xi, vbar)


def optimal_reachable_reference(model, refset, cfg, xi, solver=None):
    """Best admissible reference reachable from ξ: minimizes the terminal
    output-stack cost over ξ_d(0) ∈ Z_a subject to inputs steering ξ onto the
    reference orbit in N_d steps.  Returns (ξ_d(0), value)."""
    xi = np.asarray(xi, dtype=float).ravel()
    n_xi, m = model.n_xi, model.m
    N_d = max(cfg.N, n_xi + model.n_p)
    n_z = N_d * m + n_xi
    A, B = model.A_xi, model.B_xi

    powers = [np.eye(n_xi)]
    for _ in range(N_d):
        powers.append(A @ powers[-1])
    # terminal equality: ξ(N_d) = A^{N_d} ξ_d(0)
    T = np.zeros((n_xi, n_z))
    for j in range(N_d):
        T[:, j * m:(j + 1) * m] = powers[N_d - 1 - j] @ B
    T[:, N_d * m:] = -powers[N_d]
    b_T = -powers[N_d] @ xi

    PM = model.M_e.T @ cfg.P @ model.M_e
    H = 1e-9 * np.eye(n_z)
    H[N_d * m:, N_d * m:] += 2.0 * PM
    q = np.zeros(n_z)

    Za = np.zeros((len(refset.Za_h), n_z))
    Za[:, N_d * m:] = refset.Za_H
    prob = QpProblem(H=H, q=q, A_eq=T, b_eq=b_T, A_in=Za, b_in=refset.Za_h)
    sol = (solver or QpSolver()).solve(prob)
    if sol.status != "Optimal":
        raise InfeasibleProblem("no reachable reference in the admissible set")
    xi_d = sol.z[N_d * m:]
    value = float(xi_d @ PM @ xi_d)
    return xi_d, value
