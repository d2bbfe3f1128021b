"""Closed-loop scenario runner: config plumbing, disturbance schedules, the
initialization phase, trace logging, the four-tank experiment, and the
verification suites for the controller's guarantees.

Scenarios are plain JSON-serializable dictionaries wrapped in a dataclass;
traces are per-step records written as CSV with a JSON metadata sidecar.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import polytope as pt
from . import synthesis as syn
from .errors import ScenarioInvalid
from .mpc import Mpc, MpcConfig, optimal_reachable_reference
from .polytope import Polytope
from .signal_model import make_filter
from .tube import build_reference_set, build_tube_sets
from .velocity_model import Plant, build_extended, pack_state

FOUR_TANK_B2_PLACEHOLDER = 0.08   # not from the source experiment; see README


@dataclass
class Scenario:
    """JSON-friendly experiment description."""

    name: str
    plant: dict               # A, B, C, X/U/Wx/We as {"lo": [...], "hi": [...]}
    filter: list
    mpc: dict                 # N, Q_dx, Q_e, R, P, lambda, sigma, extra_constraints
    x0: list
    duration: int
    seed: int = 0
    gains: dict | None = None          # {"K_x": ..., "K_e": ...} or None (LQR)
    lqr: dict | None = None            # {"Q": ..., "R": ...}
    rpi_eps: float = 0.05
    disturbance: dict = field(default_factory=lambda: {"mode": "uniform"})
    exogenous: dict = field(default_factory=dict)
    out_of_model: list = field(default_factory=list)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.__dict__, fh, indent=2, default=_jsonable)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            data = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ScenarioInvalid(f"unknown scenario fields: {sorted(unknown)}")
        missing = {"name", "plant", "filter", "mpc", "x0", "duration"} - set(data)
        if missing:
            raise ScenarioInvalid(f"missing scenario fields: {sorted(missing)}")
        return cls(**data)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


@dataclass
class Trace:
    records: list
    meta: dict

    def column(self, key):
        return np.array([r[key] for r in self.records])

    @property
    def all_feasible(self):
        return all(r["feasible"] for r in self.records)

    def max_violation(self):
        return max((max(r["margin_x"], r["margin_u"])
                    for r in self.records), default=-np.inf)

    def to_csv(self, path):
        if not self.records:
            raise ScenarioInvalid("empty trace")
        flat = [_flatten_record(r) for r in self.records]
        # column union in first-appearance order: the init phase lacks the
        # MPC fields, so the first record alone is not representative
        cols = list(dict.fromkeys(k for f in flat for k in f))
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, restval="")
            w.writeheader()
            w.writerows(flat)
        with open(str(path) + ".meta.json", "w") as fh:
            json.dump(self.meta, fh, indent=2, default=_jsonable)


def _flatten_record(r):
    def cell(x):
        # non-values (pre-MPC phase, infeasible steps) become empty cells;
        # the CSV never carries NaN
        if isinstance(x, float) and not np.isfinite(x):
            return ""
        return x

    out = {}
    for k, v in r.items():
        arr = np.atleast_1d(np.asarray(v)) if not np.isscalar(v) and \
            v is not None else v
        if v is None:
            out[k] = ""
        elif isinstance(arr, np.ndarray) and arr.ndim and arr.size > 1:
            for i, x in enumerate(arr.ravel()):
                out[f"{k}{i}"] = cell(float(x))
        elif isinstance(arr, np.ndarray):
            out[k] = cell(arr.ravel()[0].item()
                          if arr.dtype.kind == "f" else arr.ravel()[0])
        else:
            out[k] = cell(v)
    return out


# -- scenario assembly ----------------------------------------------------


def _as_matrix(spec, dim):
    spec = np.asarray(spec, dtype=float)
    if spec.ndim == 0:
        return float(spec) * np.eye(dim)
    return np.atleast_2d(spec)


def _as_box(spec, dim):
    if isinstance(spec, dict) and "lo" in spec:
        return Polytope.box(spec["lo"], spec["hi"])
    if isinstance(spec, dict) and "H" in spec:
        return Polytope(np.asarray(spec["H"], float),
                        np.asarray(spec["h"], float))
    spec = np.asarray(spec, dtype=float)
    if spec.ndim == 0:
        return Polytope.box(-float(spec) * np.ones(dim),
                            float(spec) * np.ones(dim))
    raise ScenarioInvalid(f"cannot interpret set spec {spec!r}")


def build_pipeline(scenario):
    """Scenario -> (model, design, tubes, refset, cfg, controller)."""
    f = make_filter(scenario.filter)
    pc = scenario.plant
    A = np.atleast_2d(np.asarray(pc["A"], float))
    B = np.atleast_2d(np.asarray(pc["B"], float))
    C = np.atleast_2d(np.asarray(pc["C"], float))
    n, m, p = A.shape[0], B.shape[1], C.shape[0]
    plant = Plant(A=A, B=B, C=C,
                  X=_as_box(pc["X"], n), U=_as_box(pc["U"], m),
                  Wx=_as_box(pc["Wx"], n), We=_as_box(pc["We"], p))
    model = build_extended(plant, f)
    if scenario.gains is not None:
        design = syn.synthesize_gain(
            model, gains=(scenario.gains["K_x"], scenario.gains["K_e"]))
    elif scenario.lqr is not None:
        dim = n + f.n_p * p
        design = syn.synthesize_gain(
            model,
            Q_syn=_as_matrix(scenario.lqr.get("Q", 1.0), dim),
            R_syn=_as_matrix(scenario.lqr.get("R", 1.0), m))
    else:
        design = syn.synthesize_gain(model)

    tubes = build_tube_sets(model, design, eps=scenario.rpi_eps)
    mc = scenario.mpc
    sigma = float(mc.get("sigma", 1.05))
    refset = build_reference_set(model, tubes, sigma=sigma)

    P_spec = mc.get("P", 1.0)
    P = syn.terminal_cost(f, p, scale=float(P_spec)) \
        if np.asarray(P_spec).ndim == 0 else np.atleast_2d(np.asarray(P_spec))
    cfg = MpcConfig(N=int(mc["N"]),
                    Q_dx=_as_matrix(mc.get("Q_dx", 1.0), n),
                    Q_e=_as_matrix(mc.get("Q_e", 1.0), f.n_p * p),
                    R=_as_matrix(mc.get("R", 1.0), m),
                    P=P,
                    lam=mc.get("lambda"),
                    sigma=sigma,
                    extra_constraints=bool(mc.get("extra_constraints", False)))
    ctrl = Mpc(model, design, tubes, refset, cfg)
    return model, design, tubes, refset, cfg, ctrl


# -- schedules ------------------------------------------------------------


def _exogenous_sequence(scenario, f, n, p, T, rng):
    """v(t) for t = 0..T: generator recursion from an initial history plus
    scheduled step-change events (dv added to the running history)."""
    ex = scenario.exogenous or {}
    n_p = f.n_p
    dim = n + p
    v_init = ex.get("v_init")
    if v_init is None:
        hist = [np.zeros(dim) for _ in range(n_p)]
    else:
        hist = [np.asarray(v, float).ravel() for v in v_init]
        if len(hist) != n_p or any(h.shape[0] != dim for h in hist):
            raise ScenarioInvalid("v_init must hold n_p vectors of length n+p")
    events = {int(ev["t"]): np.asarray(ev["dv"], float).ravel()
              for ev in ex.get("events", [])}
    seq = np.zeros((T + 1, dim))
    for t in range(T + 1):
        if t in events:
            hist = [h + events[t] for h in hist]
        v_t = -sum(f.p[i] * hist[i - 1] for i in range(1, n_p + 1))
        seq[t] = v_t
        hist = [v_t] + hist[:-1]
    return seq


def _disturbance_sequences(scenario, plant, T, rng):
    d = scenario.disturbance or {"mode": "uniform"}
    mode = d.get("mode", "uniform")
    n, p = plant.n, plant.p
    if mode == "zero":
        wx = np.zeros((T + 2, n))
        we = np.zeros((T + 2, p))
    elif mode == "fixed":
        wx = np.asarray(d["wx_seq"], float)
        we = np.asarray(d["we_seq"], float)
        if len(wx) < T + 2 or len(we) < T + 2:
            raise ScenarioInvalid("fixed disturbance sequences too short")
    elif mode == "uniform":
        lox, hix = _box_bounds(plant.Wx)
        loe, hie = _box_bounds(plant.We)
        wx = rng.uniform(lox, hix, size=(T + 2, n))
        we = rng.uniform(loe, hie, size=(T + 2, p))
    elif mode == "constant":
        lox, hix = _box_bounds(plant.Wx)
        loe, hie = _box_bounds(plant.We)
        wx = np.tile(rng.uniform(lox, hix), (T + 2, 1))
        we = np.tile(rng.uniform(loe, hie), (T + 2, 1))
    else:
        raise ScenarioInvalid(f"unknown disturbance mode {mode!r}")
    scale = float(d.get("scale", 1.0))
    return scale * wx, scale * we


def _box_bounds(P):
    box = P.as_box()
    if box is not None:
        return box
    eye = np.eye(P.dim)
    hi = np.array([P.support(eye[i]) for i in range(P.dim)])
    lo = -np.array([P.support(-eye[i]) for i in range(P.dim)])
    return lo, hi


def _out_of_model_offset(scenario, n, t):
    w = np.zeros(n)
    for ev in scenario.out_of_model:
        if ev["t_start"] <= t < ev["t_end"]:
            w += np.asarray(ev["wx"], float).ravel()
    return w


# -- main loop ------------------------------------------------------------


def run(scenario, pipeline=None, tau_min=0.0):
    """Execute the closed loop and return the Trace.

    The first n_p steps run the explicit stabilizing controller alone (the
    history needed to pack the lifted state does not exist yet); the MPC takes
    over afterwards.  On an infeasible step the last feasible plan is
    propagated and the tube law is applied around it; the step is flagged.
    """
    model, design, tubes, refset, cfg, ctrl = \
        pipeline if pipeline is not None else build_pipeline(scenario)
    plant, f = model.plant, model.filter
    n, m, p, n_p = model.n, model.m, model.p, model.n_p
    T = int(scenario.duration)
    rng = np.random.default_rng(scenario.seed)

    v = _exogenous_sequence(scenario, f, n, p, T, rng)
    wx, we = _disturbance_sequences(scenario, plant, T, rng)
    out_of_model = False
    for t in range(T + 1):
        if not (plant.Wx.contains(wx[t], tol=1e-9)
                and plant.We.contains(we[t], tol=1e-9)):
            out_of_model = True
            break
    if scenario.out_of_model:
        out_of_model = True

    x = np.asarray(scenario.x0, float).ravel()
    if x.shape[0] != n:
        raise ScenarioInvalid("x0 has wrong length")
    # the lifted one-step model annihilates the exogenous signal only when
    # the generator recursion holds across the whole check window, so the
    # cross-check is skipped on steps whose window straddles a step event
    ev_ts = {int(ev["t"])
             for ev in (scenario.exogenous or {}).get("events", [])}
    x_c = np.zeros(design.A_c.shape[0])
    xs, es, us = [x.copy()], [], []
    records = []
    T_0, _ = model.build_transform(design.T_c)
    fb_xi = None            # propagated nominal plan for infeasible steps
    fb_du = []
    for t in range(T):
        w_extra = _out_of_model_offset(scenario, n, t)
        e = plant.C @ x + v[t][n:] + we[t]
        es.append(e)
        rec = {"t": t, "x": x.copy(), "e": e.copy(),
               "tau": np.nan, "objective": np.nan, "feasible": True,
               "xi0_star": None, "xia0_star": None,
               "velocity_residual": np.nan}
        if t < n_p:
            u = design.K_x @ x + design.C_c @ x_c + design.D_c @ e
            x_c = design.A_c @ x_c + design.B_c @ e
            rec["phase"] = "init"
        else:
            xi = pack_state(model, xs[t::-1][:n_p + 1], es[t::-1][:n_p],
                            us[t - 1::-1][:n_p])
            if t == n_p:
                ctrl.reset(xi)
            rec["vbar"] = ctrl.vbar.copy()
            st = ctrl.step(xi, tau_min=tau_min)
            rec["phase"] = "mpc"
            if st.status == "Optimal":
                u = st.u_applied
                rec.update(tau=st.tau_star, objective=st.objective,
                           xi0_star=st.xi0_star, xia0_star=st.xia0_star)
                fb_xi, fb_du = st.xi1_star, list(st.delta_u_star[1:])
                # lifted-model cross-check against the packed successor
                if t > n_p and not any(
                        t - n_p - 1 <= te <= t + 1 for te in ev_ts):
                    rec["velocity_residual"] = _velocity_residual(
                        model, xs, es, us, wx, we, v, t)
            else:
                rec["feasible"] = False
                if fb_xi is not None:
                    du0 = fb_du.pop(0) if fb_du else np.zeros(m)
                    xi1 = model.A_xi @ fb_xi + model.B_xi @ du0
                    u = model.C_u @ xi1 + design.K @ (xi - fb_xi)
                    ctrl.vbar = model.T_v @ xi1
                    rec["xi0_star"] = fb_xi
                    fb_xi = xi1
                else:
                    u = design.K @ xi
        rec["u"] = np.asarray(u).copy()
        rec["margin_x"] = float(np.max(plant.X.H @ x - plant.X.h))
        rec["margin_u"] = float(np.max(plant.U.H @ u - plant.U.h))
        records.append(rec)
        us.append(np.asarray(u).copy())
        x = plant.A @ x + plant.B @ u + v[t][:n] + wx[t] + w_extra
        xs.append(x.copy())
    meta = {"name": scenario.name, "seed": scenario.seed,
            "duration": T, "out_of_model": out_of_model,
            "n": n, "m": m, "p": p, "n_p": n_p,
            "filter": list(map(float, np.asarray(scenario.filter).ravel()))}
    return Trace(records=records, meta=meta)


def _velocity_residual(model, xs, es, us, wx, we, v, t):
    """Residual of the lifted one-step dynamics at time t (uses the scheduled
    disturbances, so it vanishes when the model matches the simulation)."""
    n_p, n = model.n_p, model.n
    if t < n_p + 1 or t + 1 >= len(we):
        return np.nan
    xi = pack_state(model, xs[t - 1::-1][:n_p + 1], es[t - 1::-1][:n_p],
                    us[t - 2::-1][:n_p])
    xi_next = pack_state(model, xs[t::-1][:n_p + 1], es[t::-1][:n_p],
                         us[t - 1::-1][:n_p])
    # Δu(t-1) = sum_i p_i u(t-1-i)
    du = sum(model.filter.p[i] * us[t - 1 - i] for i in range(n_p + 1))
    w = np.concatenate([wx[t - 1], we[t]])
    wstack = np.concatenate(
        [np.concatenate([wx[t - 1 - i], we[t - i]])
         for i in range(1, n_p + 1)])
    pred = model.A_xi @ xi + model.B_xi @ du + model.B1 @ w \
        + model.B2 @ wstack
    return float(np.max(np.abs(pred - xi_next)))


# -- canned scenarios -----------------------------------------------------


def four_tank_scenario(b2=FOUR_TANK_B2_PLACEHOLDER, duration=700, seed=0):
    """Quadruple-tank regulation experiment in deviation coordinates.

    Two independent two-tank units: pump i feeds the upper and lower tank of
    unit i with rates b1 and b2.  b2 is a placeholder (the source experiment
    does not document it) and is exposed as an argument.  Levels and inputs
    are deviations from h_op = [8, 18, 8, 18] cm, u_op = [8, 8] V, so the
    physical bounds h1,h3 in [0,17], h2,h4 in [0,22], u in [0,16] become the
    shifted boxes below.  The reference schedule is piecewise constant with
    two reachable and two out-of-range setpoints, plus a valve-style
    out-of-model disturbance episode.
    """
    a1, a2, b1 = 0.0751, 0.0371, 0.151
    Ac = np.array([[-a1, 0, 0, 0],
                   [a1, -a2, 0, 0],
                   [0, 0, -a1, 0],
                   [0, 0, a1, -a2]])
    Bc = np.array([[b1, 0],
                   [b2, 0],
                   [0, b1],
                   [0, b2]])
    A = np.eye(4) + Ac          # Euler forward, 1 s sampling
    B = Bc
    C = np.array([[0.0, 1, 0, 0], [0, 0, 0, 1]])
    h_op = np.array([8.0, 18, 8, 18])
    u_op = np.array([8.0, 8])
    h_lo = np.zeros(4) - h_op
    h_hi = np.array([17.0, 22, 17, 22]) - h_op
    gains = {
        "K_x": [[-1.67, -2.07, 0.86, 0.79], [0.94, 0.89, -1.76, -2.20]],
        "K_e": [[-0.997, 0.0284], [0.0332, -0.1068]],
    }
    # reference steps: dv is the change in v_e = -(r - C h_op) relative to
    # the previous setpoint; reachable r2/r4 and beyond-bound
    events = []
    prev = [18.0, 18.0]

    def setpoint(t, r2, r4):
        events.append({"t": t, "dv": [0, 0, 0, 0,
                                      -(r2 - prev[0]), -(r4 - prev[1])]})
        prev[0], prev[1] = r2, r4
    setpoint(5, 20.0, 16.0)     # reachable
    setpoint(150, 14.0, 19.0)   # reachable
    setpoint(250, 25.0, 18.0)   # r2 beyond the 22 cm bound
    setpoint(400, 18.0, 25.0)   # r4 beyond the bound
    setpoint(470, 18.0, 18.0)   # back to the operating point
    return Scenario(
        name="four-tank",
        plant={
            "A": A.tolist(), "B": B.tolist(), "C": C.tolist(),
            "X": {"lo": h_lo.tolist(), "hi": h_hi.tolist()},
            "U": {"lo": (0 - u_op).tolist(), "hi": (16 - u_op).tolist()},
            "Wx": {"lo": [-1e-4] * 4, "hi": [1e-4] * 4},
            "We": {"lo": [-5e-3] * 2, "hi": [5e-3] * 2},
        },
        filter=[1, -1],
        mpc={"N": 40, "Q_dx": 0.1, "Q_e": 5.0, "R": 2.0, "P": 10.0,
             "lambda": 40.0, "sigma": 1.05, "extra_constraints": True},
        gains=gains,
        x0=[0.0, 0, 0, 0],
        duration=duration,
        seed=seed,
        exogenous={"events": events},
        out_of_model=[{"t_start": 500, "t_end": 580,
                       "wx": [-0.02, 0, 0, 0]}],
    )


def random_regulation_scenario(rng, n_max=3, steps=200):
    """Small Schur-stabilizable SISO plant with a constant-signal filter and
    a reachable nonzero output offset; used by the verification suites."""
    while True:
        n = int(rng.integers(2, n_max + 1))
        A = rng.normal(size=(n, n))
        A *= 0.8 / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-6)
        B = rng.normal(size=(n, 1))
        C = rng.normal(size=(1, n))
        plant = {
            "A": A.tolist(), "B": B.tolist(), "C": C.tolist(),
            "X": {"lo": [-5.0] * n, "hi": [5.0] * n},
            "U": {"lo": [-3.0], "hi": [3.0]},
            "Wx": {"lo": [-1e-3] * n, "hi": [1e-3] * n},
            "We": {"lo": [-1e-3], "hi": [1e-3]},
        }
        n_p = 1
        bound = max(n_p * (n + 2) + n, n * 2 + 2)
        v_e = float(rng.uniform(-0.5, 0.5))
        v_x = (0.05 * rng.normal(size=n)).tolist()
        scen = Scenario(
            name=f"random-{n}",
            plant=plant,
            filter=[1, -1],
            mpc={"N": bound + 2, "Q_dx": 0.1, "Q_e": 5.0, "R": 1.0,
                 "P": 10.0, "sigma": 1.05, "extra_constraints": True},
            x0=[0.0] * n,
            duration=steps,
            seed=int(rng.integers(0, 2**31)),
            exogenous={"v_init": [v_x + [v_e]]},
        )
        try:
            pipeline = build_pipeline(scen)
        except Exception:
            continue
        return scen, pipeline


# -- verification suites --------------------------------------------------


def verify_theorem1(config=None):
    """Machine-readable report over the closed-loop guarantee suites:
    recursive feasibility, constraint satisfaction, convergence for zero and
    positive interpolation weight, fallback-state evolution, and robustness
    of a small disturbance-model shift (bisection for ε)."""
    config = dict(config or {})
    suite = config.get("suite", "default")
    fast = suite == "fast"
    n_scen = config.get("n_scenarios", 10 if fast else 50)
    steps = config.get("steps", 80 if fast else 200)
    conv_steps = config.get("conv_steps", 120 if fast else 300)
    conv_scen = config.get("conv_scenarios", 2 if fast else 5)
    seed = config.get("seed", 0)
    rng = np.random.default_rng(seed)
    checks = []

    # (i) + (ii): feasibility and constraint satisfaction
    infeasible = 0
    worst = -np.inf
    for _ in range(n_scen):
        scen, pipeline = random_regulation_scenario(rng, steps=steps)
        scen.disturbance = {"mode": "uniform"}
        tr = run(scen, pipeline=pipeline)
        infeasible += sum(not r["feasible"] for r in tr.records
                          if r.get("phase") == "mpc")
        worst = max(worst, tr.max_violation())
    checks.append({"name": "recursive_feasibility",
                   "passed": infeasible == 0,
                   "details": {"infeasible_steps": infeasible,
                               "scenarios": n_scen, "steps": steps}})
    checks.append({"name": "constraint_satisfaction",
                   "passed": worst <= 1e-6,
                   "details": {"max_violation": worst}})

    # (iii): λ = 0, constant disturbances; plan converges to its own best
    # reachable reference
    conv0 = _convergence_suite(rng, lam=0.0, n_scen=conv_scen,
                               steps=conv_steps, mode="plan")
    checks.append({"name": "convergence_lambda_zero",
                   "passed": conv0["max_err"] < 1e-4, "details": conv0})

    # (iv): λ = N, generator-compatible disturbances; output error converges
    conv1 = _convergence_suite(rng, lam=None, n_scen=conv_scen,
                               steps=conv_steps, mode="output")
    checks.append({"name": "convergence_lambda_positive",
                   "passed": conv1["max_err"] < 1e-4, "details": conv1})

    # fallback evolution: τ* = 1 throughout implies v̄ follows the generator
    fb = _fallback_check(rng, steps=min(steps, 100))
    checks.append({"name": "fallback_evolution", "passed": fb["passed"],
                   "details": fb})

    # (v): scaled disturbances plus a disturbance-model shift of size ε
    rb = _robust_shift_check(rng, steps=min(steps, 120))
    checks.append({"name": "shift_robustness", "passed": rb["epsilon"] > 0,
                   "details": rb})

    return {"suite": suite, "passed": all(c["passed"] for c in checks),
            "checks": checks}


def _convergence_suite(rng, lam, n_scen, steps, mode):
    max_err = 0.0
    details = []
    for _ in range(n_scen):
        scen, _ = random_regulation_scenario(rng, steps=steps)
        scen.mpc["lambda"] = lam
        scen.disturbance = {"mode": "constant"}
        pipeline = build_pipeline(scen)
        model, design, tubes, refset, cfg, ctrl = pipeline
        tr = run(scen, pipeline=pipeline)
        last = tr.records[-1]
        if last["xi0_star"] is None:
            max_err = np.inf
            continue
        xi0 = np.asarray(last["xi0_star"])
        xi_d, value = optimal_reachable_reference(model, refset, cfg, xi0)
        if mode == "plan":
            err = float(np.linalg.norm(xi0 - xi_d))
        else:
            err = float(np.linalg.norm(
                last["e"] - model.C_e @ xi_d))
        max_err = max(max_err, err)
        details.append(err)
    return {"max_err": max_err, "errors": details,
            "scenarios": n_scen, "steps": steps}


def _fallback_check(rng, steps):
    """With τ pinned at 1 the interpolation collapses onto the fallback
    reference, so v̄(t) must equal the generator propagation S^t v̄(0)."""
    scen, pipeline = random_regulation_scenario(rng, steps=steps)
    scen.disturbance = {"mode": "zero"}
    model = pipeline[0]
    tr = run(scen, pipeline=pipeline, tau_min=1.0)
    recs = [r for r in tr.records if r.get("phase") == "mpc"]
    S = model.filter.companion(model.n + model.p)
    vbar = recs[0]["vbar"]
    max_dev = 0.0
    prefix = 0
    for r in recs:
        if not (r["feasible"] and abs(r["tau"] - 1.0) < 1e-6):
            break
        max_dev = max(max_dev, float(np.max(np.abs(r["vbar"] - vbar))))
        vbar = S @ vbar
        prefix += 1
    passed = prefix == len(recs) and max_dev < 1e-6
    return {"passed": passed, "max_deviation": max_dev,
            "tau_one_prefix": prefix, "n_steps": len(recs)}


def _robust_shift_check(rng, steps):
    """Bisection for the largest disturbance-model shift ε that keeps the
    loop feasible and convergent with half-scaled per-step disturbances."""
    scen, _ = random_regulation_scenario(rng, steps=steps)
    scen.disturbance = {"mode": "uniform", "scale": 0.5}

    def trial(eps_val):
        s = Scenario(**{**scen.__dict__})
        ex = dict(s.exogenous)
        events = list(ex.get("events", []))
        dv = np.zeros(len(s.x0) + 1)
        dv[-1] = eps_val
        events.append({"t": steps // 2, "dv": dv.tolist()})
        ex["events"] = events
        s.exogenous = ex
        try:
            pipeline = build_pipeline(s)
            tr = run(s, pipeline=pipeline)
        except Exception:
            return False
        mpc_recs = [r for r in tr.records if r.get("phase") == "mpc"]
        return all(r["feasible"] for r in mpc_recs) and \
            tr.max_violation() <= 1e-6

    if not trial(0.0):
        return {"epsilon": -1.0, "note": "baseline run failed"}
    eps = 0.0
    lo, hi = 0.0, 0.2
    for _ in range(8):
        mid = 0.5 * (lo + hi)
        if trial(mid):
            lo = mid
        else:
            hi = mid
    eps = lo if lo > 0 else (0.2 if trial(0.2) else lo)
    if eps == 0.0 and trial(1e-3):
        eps = 1e-3
    return {"epsilon": float(eps), "steps": steps}
