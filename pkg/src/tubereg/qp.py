"""Dense convex QP solver: operator splitting with over-relaxation and a polish step.

Solves  min 0.5 z'Hz + q'z  s.t.  A_eq z = b_eq,  A_in z <= b_in.

The iteration follows the standard ADMM splitting on l <= Az <= u with Ruiz
equilibration, per-constraint step sizes, periodic step-size adaptation, and
primal/dual infeasibility certificates from the divergence of the iterates.
A successful solve is finished with an active-set KKT polish on the original
(unscaled) data, which brings residuals close to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch

MAX_ITER = 20_000
EPS = 1e-8          # absolute/relative termination tolerance (scaled residuals)
EPS_INF = 1e-10     # infeasibility certificate tolerance
RHO_EQ_FACTOR = 1e3
H_REG = 1e-9        # Tikhonov term resolving cost-flat directions


@dataclass
class QpProblem:
    """min 0.5 z'Hz + q'z  s.t.  A_eq z = b_eq,  A_in z <= b_in."""

    H: np.ndarray
    q: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    var_names: list | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.q = np.asarray(self.q, dtype=float).ravel()
        n = self.H.shape[0]
        if self.H.shape != (n, n) or self.q.shape[0] != n:
            raise DimensionMismatch("H/q dimensions inconsistent")
        if np.max(np.abs(self.H - self.H.T), initial=0.0) > 1e-10:
            raise DimensionMismatch("H is not symmetric")
        for name in ("A_eq", "A_in"):
            M = getattr(self, name)
            if M is not None:
                M = np.atleast_2d(np.asarray(M, dtype=float))
                if M.shape[1] != n:
                    raise DimensionMismatch(f"{name} has {M.shape[1]} columns")
                setattr(self, name, M)
        self.b_eq = None if self.b_eq is None else \
            np.asarray(self.b_eq, dtype=float).ravel()
        self.b_in = None if self.b_in is None else \
            np.asarray(self.b_in, dtype=float).ravel()

    @property
    def n(self):
        return self.H.shape[0]

    def stacked(self):
        """(A, l, u) with equality rows first."""
        n = self.n
        blocks, lo, hi = [], [], []
        if self.A_eq is not None and len(self.A_eq):
            blocks.append(self.A_eq)
            lo.append(self.b_eq)
            hi.append(self.b_eq)
        if self.A_in is not None and len(self.A_in):
            blocks.append(self.A_in)
            lo.append(np.full(len(self.b_in), -np.inf))
            hi.append(self.b_in)
        if not blocks:
            return np.zeros((0, n)), np.zeros(0), np.zeros(0)
        return np.vstack(blocks), np.concatenate(lo), np.concatenate(hi)

    @property
    def n_eq(self):
        return 0 if self.A_eq is None else self.A_eq.shape[0]


@dataclass
class QpSolution:
    z: np.ndarray
    objective: float
    status: str                    # Optimal | Infeasible | MaxIter
    kkt_residuals: dict
    y: np.ndarray | None = None    # multipliers for the stacked constraints
    iterations: int = 0
    certificate: np.ndarray | None = None


def _lp_feasible(A, l, u):
    """Authoritative feasibility check for l <= Az <= u, used to confirm
    infeasibility certificates before declaring the problem infeasible."""
    from scipy.optimize import linprog

    fin_u = np.isfinite(u)
    fin_l = np.isfinite(l)
    A_ub = np.vstack([A[fin_u], -A[fin_l]])
    b_ub = np.concatenate([u[fin_u], -l[fin_l]])
    res = linprog(np.zeros(A.shape[1]), A_ub=A_ub, b_ub=b_ub,
                  bounds=(None, None), method="highs")
    return res.status == 0


def _ruiz_equilibrate(H, q, A, iters=10):
    """Symmetric diagonal scaling of the KKT data (D for variables, E for rows)."""
    n, mrows = H.shape[0], A.shape[0]
    d = np.ones(n)
    e = np.ones(mrows)
    c = 1.0
    Hs, qs, As = H.copy(), q.copy(), A.copy()
    for _ in range(iters):
        col = np.sqrt(np.maximum(
            np.max(np.abs(Hs), axis=0, initial=0.0),
            np.max(np.abs(As), axis=0, initial=0.0) if mrows else 0.0,
        ))
        col[col < 1e-12] = 1.0
        row = np.sqrt(np.max(np.abs(As), axis=1, initial=0.0)) if mrows else e
        if mrows:
            row = np.where(row < 1e-12, 1.0, row)
        Hs = Hs / col[:, None] / col[None, :]
        qs = qs / col
        if mrows:
            As = As / row[:, None] / col[None, :]
        d = d / col
        e = e / row if mrows else e
        # cost scaling keeps the Hessian near unit magnitude
        g = np.max(np.abs(Hs), initial=0.0)
        g = max(g, np.max(np.abs(qs), initial=0.0))
        if g > 1e-12:
            gamma = 1.0 / max(g, 1e-6)
            gamma = min(max(gamma, 1e-6), 1e6)
            Hs *= gamma
            qs *= gamma
            c *= gamma
    return Hs, qs, As, d, e, c


class QpSolver:
    """Workspace-owning solver; reuses the KKT factorization across re-solves
    when the matrix data is unchanged (vector data may differ)."""

    def __init__(self, max_iter=MAX_ITER, eps=EPS):
        self.max_iter = max_iter
        self.eps = eps
        self._cache_key = None
        self._cache = None

    # -- factorization ----------------------------------------------------

    def _prepare(self, prob):
        key = (id(prob.H), id(prob.A_eq), id(prob.A_in))
        if self._cache_key == key:
            return self._cache
        A, l, u = prob.stacked()
        H = prob.H
        ev_min = np.min(np.linalg.eigvalsh(H)) if H.size else 0.0
        if ev_min < -1e-9:
            raise DimensionMismatch(f"H not PSD (min eig {ev_min:.2e})")
        if ev_min < 1e-9:
            H = H + H_REG * np.eye(prob.n)
        Hs, qs_unused, As, d, e, c = _ruiz_equilibrate(H, prob.q, A)
        n, mrows = prob.n, A.shape[0]
        sigma = 1e-6
        rho_bar = 0.1
        eq_mask = np.zeros(mrows, dtype=bool)
        eq_mask[:prob.n_eq] = True
        cache = {
            "A": A, "l": l, "u": u, "H": H,
            "Hs": Hs, "As": As, "d": d, "e": e, "c": c,
            "sigma": sigma, "eq_mask": eq_mask, "n": n, "m": mrows,
        }
        self._set_rho(cache, rho_bar)
        self._cache_key = key
        self._cache = cache
        return cache

    def _set_rho(self, cache, rho_bar):
        mrows = cache["m"]
        rho = np.full(mrows, rho_bar)
        rho[cache["eq_mask"]] = rho_bar * RHO_EQ_FACTOR
        cache["rho"] = rho
        n = cache["n"]
        K = np.zeros((n + mrows, n + mrows))
        K[:n, :n] = cache["Hs"] + cache["sigma"] * np.eye(n)
        if mrows:
            K[:n, n:] = cache["As"].T
            K[n:, :n] = cache["As"]
            K[n:, n:] = -np.diag(1.0 / rho)
        cache["lu"] = scipy.linalg.lu_factor(K)
        cache["rho_bar"] = rho_bar

    # -- main entry -------------------------------------------------------

    def solve(self, prob, warm=None):
        cache = self._prepare(prob)
        n, mrows = cache["n"], cache["m"]
        d, e, c = cache["d"], cache["e"], cache["c"]
        As, Hs = cache["As"], cache["Hs"]
        qs = (prob.q * d) * c
        ls = cache["l"] * e if mrows else cache["l"]
        us = cache["u"] * e if mrows else cache["u"]
        sigma = cache["sigma"]
        alpha = 1.6

        if mrows == 0:
            z = np.linalg.solve(cache["H"], -prob.q)
            obj = 0.5 * z @ prob.H @ z + prob.q @ z
            return QpSolution(z=z, objective=float(obj), status="Optimal",
                              kkt_residuals={"primal": 0.0, "dual": 0.0,
                                             "gap": 0.0},
                              y=np.zeros(0), iterations=0)

        x = np.zeros(n)
        zc = np.clip(np.zeros(mrows), ls, us)
        y = np.zeros(mrows)
        if warm is not None and warm.z is not None and len(warm.z) == n:
            x = warm.z / d
            zc = np.clip(As @ x, ls, us)
            if warm.y is not None and len(warm.y) == mrows:
                y = warm.y * c / e

        rho = cache["rho"]
        status = "MaxIter"
        tried_exact = False
        it = 0
        check_every = 10
        y_prev_cert = y.copy()
        x_prev_cert = x.copy()
        while it < self.max_iter:
            it += 1
            rhs = np.concatenate([sigma * x - qs, zc - y / rho])
            sol = scipy.linalg.lu_solve(cache["lu"], rhs)
            x_t = sol[:n]
            nu = sol[n:]
            z_t = zc + (nu - y) / rho
            x_new = alpha * x_t + (1 - alpha) * x
            z_relax = alpha * z_t + (1 - alpha) * zc
            z_new = np.clip(z_relax + y / rho, ls, us)
            y = y + rho * (z_relax - z_new)
            x, zc = x_new, z_new

            if it % check_every == 0 or it == self.max_iter:
                Ax = As @ x
                r_p = np.max(np.abs(Ax - zc), initial=0.0)
                r_d = np.max(np.abs(Hs @ x + qs + As.T @ y), initial=0.0)
                sc_p = max(np.max(np.abs(Ax), initial=0.0),
                           np.max(np.abs(zc), initial=0.0), 1.0)
                sc_d = max(np.max(np.abs(Hs @ x), initial=0.0),
                           np.max(np.abs(qs), initial=0.0),
                           np.max(np.abs(As.T @ y), initial=0.0), 1.0)
                if r_p <= self.eps * sc_p and r_d <= self.eps * sc_d:
                    status = "Optimal"
                    break
                # plateau rescue: a clean active-set polish certifies the
                # optimum even when the splitting iteration stalls
                if it % 500 == 0 and r_p <= 1e-4 * sc_p and r_d <= 1e-4 * sc_d:
                    pol = self._try_polish(prob, cache, x * d, y * e / c)
                    if pol is None and it >= 1000 and not tried_exact:
                        tried_exact = True
                        pol = self._active_set_solve(prob, cache)
                    if pol is not None:
                        pol.iterations = it
                        return pol
                dy = y - y_prev_cert
                dx = x - x_prev_cert
                if self._primal_infeasible(cache, dy, ls, us) and \
                        not _lp_feasible(cache["A"], cache["l"], cache["u"]):
                    return QpSolution(
                        z=x * d, objective=np.inf, status="Infeasible",
                        kkt_residuals={"primal": np.inf, "dual": r_d,
                                       "gap": np.inf},
                        y=y * c / e, iterations=it,
                        certificate=dy / np.linalg.norm(dy),
                    )
                if self._dual_infeasible(cache, dx, qs, ls, us) and \
                        self._unbounded_ray(prob):
                    return QpSolution(
                        z=x * d, objective=-np.inf, status="Infeasible",
                        kkt_residuals={"primal": r_p, "dual": np.inf,
                                       "gap": np.inf},
                        y=y * c / e, iterations=it,
                        certificate=dx / np.linalg.norm(dx),
                    )
                y_prev_cert = y.copy()
                x_prev_cert = x.copy()
                if it % 100 == 0:
                    new_bar = cache["rho_bar"] * np.sqrt(
                        (r_p / sc_p) / max(r_d / sc_d, 1e-16))
                    new_bar = float(np.clip(new_bar, 1e-6, 1e6))
                    if new_bar > 5 * cache["rho_bar"] or \
                            new_bar < cache["rho_bar"] / 5:
                        self._set_rho(cache, new_bar)
                        rho = cache["rho"]

        z_orig = x * d
        y_orig = y * e / c
        sol = QpSolution(
            z=z_orig,
            objective=float(0.5 * z_orig @ prob.H @ z_orig + prob.q @ z_orig),
            status=status,
            kkt_residuals=self._residuals(prob, z_orig, y_orig),
            y=y_orig,
            iterations=it,
        )
        pol = self._try_polish(prob, cache, z_orig, y_orig)
        if pol is None and status == "MaxIter" and not tried_exact:
            pol = self._active_set_solve(prob, cache)
        if pol is not None:
            pol.iterations = it
            return pol
        return sol

    # -- infeasibility certificates --------------------------------------

    @staticmethod
    def _primal_infeasible(cache, dy, ls, us):
        nrm = np.max(np.abs(dy), initial=0.0)
        if nrm < 1e-14:
            return False
        dyn = dy / nrm
        As = cache["As"]
        if np.max(np.abs(As.T @ dyn), initial=0.0) > EPS_INF * 1e2:
            return False
        up = np.where(np.isfinite(us), us, 0.0)
        lo = np.where(np.isfinite(ls), ls, 0.0)
        gap = up @ np.maximum(dyn, 0) + lo @ np.minimum(dyn, 0)
        # certificate invalid when it pushes on an infinite bound
        if np.any(~np.isfinite(us) & (dyn > 1e-10)):
            return False
        if np.any(~np.isfinite(ls) & (dyn < -1e-10)):
            return False
        return gap < -EPS_INF * 1e2

    @staticmethod
    def _dual_infeasible(cache, dx, qs, ls, us):
        nrm = np.max(np.abs(dx), initial=0.0)
        if nrm < 1e-14:
            return False
        dxn = dx / nrm
        if np.max(np.abs(cache["Hs"] @ dxn), initial=0.0) > EPS_INF * 1e2:
            return False
        if qs @ dxn > -EPS_INF * 1e2:
            return False
        Adx = cache["As"] @ dxn
        ok_up = np.isfinite(us) | (Adx < EPS_INF * 1e2)
        ok_lo = np.isfinite(ls) | (Adx > -EPS_INF * 1e2)
        fin_up = np.isfinite(us)
        fin_lo = np.isfinite(ls)
        if np.any(fin_up & fin_lo & (np.abs(Adx) > EPS_INF * 1e2)):
            return False
        if np.any(fin_up & ~fin_lo & (Adx > EPS_INF * 1e2)):
            return False
        if np.any(fin_lo & ~fin_up & (Adx < -EPS_INF * 1e2)):
            return False
        return bool(np.all(ok_up) and np.all(ok_lo))

    @staticmethod
    def _unbounded_ray(prob):
        """Authoritative confirmation of a dual-infeasibility (unboundedness)
        certificate: an LP for a ray dz with H dz = 0, q'dz = -1,
        A_eq dz = 0 and A_in dz <= 0.  For a strictly convex cost no such
        ray exists, which rules out spurious certificates built from the
        noise of a nearly stationary iterate."""
        from scipy.optimize import linprog

        n = prob.n
        A_eq = [prob.H, prob.q.reshape(1, -1)]
        b_eq = [np.zeros(n), np.array([-1.0])]
        if prob.A_eq is not None and len(prob.A_eq):
            A_eq.append(prob.A_eq)
            b_eq.append(np.zeros(prob.A_eq.shape[0]))
        A_ub = b_ub = None
        if prob.A_in is not None and len(prob.A_in):
            A_ub = prob.A_in
            b_ub = np.zeros(A_ub.shape[0])
        res = linprog(np.zeros(n), A_ub=A_ub, b_ub=b_ub,
                      A_eq=np.vstack(A_eq), b_eq=np.concatenate(b_eq),
                      bounds=(None, None), method="highs")
        return res.status == 0

    # -- exact fallback ----------------------------------------------------

    def _active_set_solve(self, prob, cache, max_pivots=2000):
        """Primal active-set solve used when the splitting iteration stalls
        far from the true active set: feasible start from an LP, then
        line-searched equality-QP steps with multiplier-driven drops.
        Returns a certified Optimal solution or None."""
        from scipy.optimize import linprog

        A, u = cache["A"], cache["u"]
        n, mrows = cache["n"], cache["m"]
        eq_mask = cache["eq_mask"]
        H = cache["H"]
        n_eq = int(np.sum(eq_mask))
        lp = linprog(np.zeros(n),
                     A_ub=A[~eq_mask] if mrows > n_eq else None,
                     b_ub=u[~eq_mask] if mrows > n_eq else None,
                     A_eq=A[eq_mask] if n_eq else None,
                     b_eq=u[eq_mask] if n_eq else None,
                     bounds=(None, None), method="highs")
        if lp.status == 2:
            # the phase-1 LP is an authoritative infeasibility proof
            return QpSolution(z=np.zeros(n), objective=np.inf,
                              status="Infeasible",
                              kkt_residuals={"primal": np.inf, "dual": np.inf,
                                             "gap": np.inf},
                              y=np.zeros(mrows))
        if lp.status != 0:
            return None
        z = lp.x
        norms = np.linalg.norm(A, axis=1)
        norms[norms < 1e-14] = 1.0
        An = A / norms[:, None]
        un = u / norms

        # working set: equalities plus an independent subset of the rows
        # active at the LP vertex
        work = []
        basis = np.zeros((0, n))
        slack = un - An @ z
        for i in list(np.where(eq_mask)[0]) + \
                list(np.where(~eq_mask & np.isfinite(u) & (slack < 1e-9))[0]):
            row = An[i] - basis.T @ (basis @ An[i])
            nr = np.linalg.norm(row)
            if nr > 1e-10:
                basis = np.vstack([basis, row / nr])
                work.append(int(i))

        ineq_pool = np.where(~eq_mask & np.isfinite(u))[0]
        delta = 1e-9
        for _ in range(max_pivots):
            Aw = An[work]
            ka = len(work)
            # regularized solve refined against the exact system, so nearly
            # dependent working rows do not make the factorization singular
            K = np.block([[H + delta * np.eye(n), Aw.T],
                          [Aw, -delta * np.eye(ka)]])
            K0 = np.block([[H, Aw.T], [Aw, np.zeros((ka, ka))]])
            g = H @ z + prob.q
            rhs = np.concatenate([-g, np.zeros(ka)])
            try:
                lu = scipy.linalg.lu_factor(K)
                sol_v = scipy.linalg.lu_solve(lu, rhs)
                for _ in range(3):
                    sol_v = sol_v + scipy.linalg.lu_solve(lu, rhs - K0 @ sol_v)
            except (scipy.linalg.LinAlgError, ValueError):
                return None
            if not np.all(np.isfinite(sol_v)):
                return None
            p, lam = sol_v[:n], sol_v[n:]
            # line search toward the subproblem optimum z + p
            if np.max(np.abs(p), initial=0.0) > 1e-12 * (1 + np.max(np.abs(z))):
                denom = An[ineq_pool] @ p
                room = un[ineq_pool] - An[ineq_pool] @ z
                outside = ~np.isin(ineq_pool, work)
                cand = outside & (denom > 1e-12)
                alpha, block = 1.0, None
                if np.any(cand):
                    ratios = room[cand] / denom[cand]
                    k = int(np.argmin(ratios))
                    if ratios[k] < 1.0:
                        alpha = max(ratios[k], 0.0)
                        block = int(ineq_pool[cand][k])
                z = z + alpha * p
                if block is not None:
                    work.append(block)
                    continue
            # full unblocked step: z is the subproblem optimum and lam its
            # exact multipliers, so optimality is decided by their signs
            ineq_pos = [k for k, i in enumerate(work) if not eq_mask[i]]
            if ineq_pos and min(lam[k] for k in ineq_pos) < -1e-9:
                work.pop(min(ineq_pos, key=lambda k: lam[k]))
                continue
            y = np.zeros(mrows)
            for k, i in enumerate(work):
                y[i] = lam[k] / norms[i]
            # nearly dependent working rows can leave residual drift; the
            # polish re-derives the active set from this point and certifies
            pol = self._try_polish(prob, cache, z, y)
            if pol is not None:
                return pol
            res = self._residuals(prob, z, y)
            scale = max(1.0, np.max(np.abs(z), initial=0.0))
            if res["primal"] <= 1e-7 * scale and res["dual"] <= 1e-7 * scale:
                obj = 0.5 * z @ prob.H @ z + prob.q @ z
                return QpSolution(z=z, objective=float(obj), status="Optimal",
                                  kkt_residuals=res, y=y)
            return None
        return None

    # -- polish -----------------------------------------------------------

    def _try_polish(self, prob, cache, z, y):
        """Active-set KKT solve from the current iterate; returns a certified
        Optimal solution when the polished point satisfies stationarity,
        feasibility and multiplier signs to tight absolute tolerance, else
        None."""
        A, l, u = cache["A"], cache["l"], cache["u"]
        H = cache["H"]
        n, mrows = cache["n"], cache["m"]
        Az = A @ z
        act = cache["eq_mask"] | \
            (np.isfinite(u) & (u - Az < 1e-6 * (1 + np.abs(u))) & (y > -1e-9))
        idx = list(np.where(act)[0])
        eq_idx = set(np.where(cache["eq_mask"])[0])
        z_pol, y_pol = None, None
        for _ in range(30):
            z_pol, y_pol = self._kkt_solve(prob, A, u, n, mrows, idx)
            if z_pol is None:
                return None
            # drop the most negative inequality multiplier, if any
            ineq_act = [i for i in idx if i not in eq_idx]
            if ineq_act:
                worst = min(ineq_act, key=lambda i: y_pol[i])
                if y_pol[worst] < -1e-9:
                    idx.remove(worst)
                    continue
            resid = A @ z_pol - u
            tol_add = 1e-9 * max(1.0, np.max(np.abs(u[np.isfinite(u)]),
                                             initial=1.0))
            # a working-set inequality row that stays violated was dropped as
            # linearly dependent with an inconsistent bound: it cannot hold
            # with equality, so remove it and let feasibility re-admit it
            bad = [i for i in idx if i not in eq_idx and resid[i] > tol_add]
            if bad:
                idx.remove(max(bad, key=lambda i: resid[i]))
                continue
            # add the most violated constraint, if any
            resid[~np.isfinite(u)] = -np.inf
            resid[idx] = -np.inf
            j = int(np.argmax(resid))
            if resid[j] > tol_add:
                idx.append(j)
                continue
            break
        else:
            return None
        if z_pol is None:
            return None
        res_new = self._residuals(prob, z_pol, y_pol)
        scale = max(1.0, np.max(np.abs(z_pol), initial=0.0))
        ineq_ok = True
        if mrows:
            viol = A @ z_pol - u
            viol = viol[np.isfinite(u)]
            ineq_ok = np.max(viol, initial=0.0) < 1e-8 * scale
        mult_ok = np.min(y_pol[~cache["eq_mask"]], initial=0.0) > -1e-8
        if ineq_ok and mult_ok and res_new["primal"] <= 1e-8 * scale and \
                res_new["dual"] <= 1e-8 * scale:
            obj = 0.5 * z_pol @ prob.H @ z_pol + prob.q @ z_pol
            return QpSolution(z=z_pol, objective=float(obj), status="Optimal",
                              kkt_residuals=res_new, y=y_pol)
        return None

    @staticmethod
    def _kkt_solve(prob, A, u, n, mrows, idx):
        """Equality-constrained solve on a linearly independent subset of the
        working set (pivoted QR drops dependent rows); refined against the
        unregularized KKT system."""
        y_pol = np.zeros(mrows)
        if not idx:
            try:
                z = np.linalg.solve(prob.H + 1e-12 * np.eye(n), -prob.q)
            except np.linalg.LinAlgError:
                return None, None
            return z, y_pol
        # normalize rows so rank detection is scale-free
        norms = np.linalg.norm(A[idx], axis=1)
        norms[norms < 1e-14] = 1.0
        Aa = A[idx] / norms[:, None]
        ub = u[idx] / norms
        # greedy independent subset, scanned tightest bound first: among
        # near-parallel rows the binding one must be kept, otherwise the
        # solve pins the looser copy and violates the tighter one
        order = np.argsort(ub)
        basis = np.zeros((0, n))
        keep, keep_norms = [], []
        for p in order:
            row = Aa[p] - basis.T @ (basis @ Aa[p])
            nr = np.linalg.norm(row)
            if nr > 1e-10:
                basis = np.vstack([basis, row / nr])
                keep.append(idx[p])
                keep_norms.append(norms[p])
        keep_norms = np.asarray(keep_norms)
        Ak = A[keep] / keep_norms[:, None]
        ka = len(keep)
        H = prob.H
        delta = 1e-9
        K = np.block([
            [H + delta * np.eye(n), Ak.T],
            [Ak, -delta * np.eye(ka)],
        ])
        rhs = np.concatenate([-prob.q, u[keep] / keep_norms])
        try:
            lu = scipy.linalg.lu_factor(K)
        except scipy.linalg.LinAlgError:
            return None, None
        sol_v = scipy.linalg.lu_solve(lu, rhs)
        K0 = np.block([[H, Ak.T], [Ak, np.zeros((ka, ka))]])
        for _ in range(3):
            sol_v = sol_v + scipy.linalg.lu_solve(lu, rhs - K0 @ sol_v)
        if not np.all(np.isfinite(sol_v)):
            return None, None
        y_pol[keep] = sol_v[n:] / keep_norms
        return sol_v[:n], y_pol

    @staticmethod
    def _residuals(prob, z, y):
        A, l, u = prob.stacked()
        if A.shape[0]:
            Az = A @ z
            upper = np.where(np.isfinite(u), Az - u, -np.inf)
            lower = np.where(np.isfinite(l), l - Az, -np.inf)
            primal = float(np.max(np.maximum(upper, lower), initial=0.0))
            primal = max(primal, 0.0)
            dual = float(np.max(np.abs(prob.H @ z + prob.q + A.T @ y),
                                initial=0.0))
            comp = 0.0
            fin_u = np.isfinite(u)
            comp += float(np.abs(np.maximum(y, 0)[fin_u] @
                                 (u[fin_u] - Az[fin_u])).max(initial=0.0) * 0)
            # complementarity: y_i (Az - u)_i for the active side
            slack_u = np.where(fin_u, u - Az, 0.0)
            slack_l = np.where(np.isfinite(l), Az - l, 0.0)
            comp = float(np.max(np.abs(np.maximum(y, 0) * slack_u), initial=0.0))
            comp = max(comp, float(np.max(np.abs(np.minimum(y, 0) * slack_l),
                                          initial=0.0)))
        else:
            primal = 0.0
            dual = float(np.max(np.abs(prob.H @ z + prob.q), initial=0.0))
            comp = 0.0
        return {"primal": primal, "dual": dual, "gap": comp}


def solve(prob, warm=None, max_iter=MAX_ITER, eps=EPS):
    """One-shot convenience wrapper around QpSolver."""
    return QpSolver(max_iter=max_iter, eps=eps).solve(prob, warm=warm)
