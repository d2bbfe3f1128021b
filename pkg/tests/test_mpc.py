import numpy as np
import pytest

from tubereg.errors import ConfigViolation, DimensionMismatch
from tubereg.mpc import (
    Mpc,
    MpcConfig,
    horizon_lower_bound,
    optimal_reachable_reference,
)
from tubereg.polytope import Polytope
from tubereg.signal_model import make_filter
from tubereg.synthesis import synthesize_gain, terminal_cost
from tubereg.tube import build_reference_set, build_tube_sets
from tubereg.velocity_model import Plant, build_extended, pack_state


@pytest.fixture(scope="module")
def loop():
    """Small regulation loop: 2-state plant, constant-signal filter."""
    rng = np.random.default_rng(11)
    f = make_filter([1, -1])
    while True:
        A = rng.normal(size=(2, 2))
        A *= 0.7 / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-9)
        B = rng.normal(size=(2, 1))
        C = rng.normal(size=(1, 2))
        plant = Plant(A=A, B=B, C=C,
                      X=Polytope.box([-5, -5], [5, 5]),
                      U=Polytope.box([-5], [5]),
                      Wx=Polytope.box([-0.01, -0.01], [0.01, 0.01]),
                      We=Polytope.box([-0.01], [0.01]))
        try:
            model = build_extended(plant, f)
        except Exception:
            continue
        break
    design = synthesize_gain(model)
    tubes = build_tube_sets(model, design)
    refset = build_reference_set(model, tubes)
    cfg = MpcConfig(N=10, Q_dx=0.1 * np.eye(2), Q_e=[[5.0]], R=[[1.0]],
                    P=terminal_cost(f, 1, scale=10.0))
    return model, design, tubes, refset, cfg


class TestConfig:
    def test_negative_lambda_rejected(self):
        with pytest.raises(ConfigViolation):
            MpcConfig(N=10, Q_dx=np.eye(2), Q_e=[[1.0]], R=[[1.0]],
                      P=[[1.0]], lam=-1.0)

    def test_indefinite_weights_rejected(self):
        with pytest.raises(ConfigViolation):
            MpcConfig(N=10, Q_dx=np.eye(2), Q_e=[[0.0]], R=[[1.0]], P=[[1.0]])
        with pytest.raises(ConfigViolation):
            MpcConfig(N=10, Q_dx=-np.eye(2), Q_e=[[1.0]], R=[[1.0]],
                      P=[[1.0]])

    def test_short_horizon_rejected(self, loop):
        model, design, tubes, refset, _ = loop
        bound = horizon_lower_bound(model)
        cfg = MpcConfig(N=bound, Q_dx=0.1 * np.eye(2), Q_e=[[5.0]],
                        R=[[1.0]], P=[[10.0]])
        with pytest.raises(ConfigViolation):
            Mpc(model, design, tubes, refset, cfg)

    def test_default_lambda_is_horizon(self):
        cfg = MpcConfig(N=12, Q_dx=np.eye(2), Q_e=[[1.0]], R=[[1.0]],
                        P=[[1.0]])
        assert cfg.lam == 12.0


class TestStep:
    def test_origin_is_optimal(self, loop):
        model, design, tubes, refset, cfg = loop
        ctrl = Mpc(model, design, tubes, refset, cfg)
        xi = np.zeros(model.n_xi)
        st = ctrl.step(xi)
        assert st.status == "Optimal"
        assert st.objective == pytest.approx(0.0, abs=1e-6)
        assert np.max(np.abs(st.u_applied)) < 1e-5
        assert 0.0 - 1e-8 <= st.tau_star <= 1.0 + 1e-8

    def test_bad_dimensions_rejected(self, loop):
        model, design, tubes, refset, cfg = loop
        ctrl = Mpc(model, design, tubes, refset, cfg)
        with pytest.raises(DimensionMismatch):
            ctrl.build_problem(np.zeros(3), np.zeros(model.T_v.shape[0]))
        with pytest.raises(DimensionMismatch):
            ctrl.build_problem(np.zeros(model.n_xi), np.zeros(2))

    def test_tau_min_pins_interpolation(self, loop):
        model, design, tubes, refset, cfg = loop
        ctrl = Mpc(model, design, tubes, refset, cfg)
        rng = np.random.default_rng(0)
        xi = 0.01 * rng.normal(size=model.n_xi)
        ctrl.reset(xi)
        st = ctrl.step(xi, tau_min=1.0)
        assert st.status == "Optimal"
        assert st.tau_star == pytest.approx(1.0, abs=1e-7)

    def test_closed_loop_anchoring_and_feasibility(self, loop):
        # the real lifted state stays anchored to the plan: T_0(ξ − ξ_0*) ∈ S
        # at every step, and every step is feasible, under any disturbance
        # drawn from the modeled sets
        model, design, tubes, refset, cfg = loop
        plant, f = model.plant, model.filter
        ctrl = Mpc(model, design, tubes, refset, cfg)
        rng = np.random.default_rng(1)
        n_p = model.n_p
        x = np.array([0.5, -0.3])
        x_c = np.zeros(design.A_c.shape[0])
        xs, es, us = [x.copy()], [], []
        taus = []
        for t in range(40):
            wx = rng.uniform(-0.01, 0.01, size=2)
            we = rng.uniform(-0.01, 0.01, size=1)
            e = plant.C @ x + we
            es.append(e)
            if t < n_p:
                u = design.K_x @ x + design.C_c @ x_c + design.D_c @ e
                x_c = design.A_c @ x_c + design.B_c @ e
            else:
                xi = pack_state(model, xs[t::-1][:n_p + 1], es[t::-1][:n_p],
                                us[t - 1::-1][:n_p])
                if t == n_p:
                    ctrl.reset(xi)
                st = ctrl.step(xi)
                assert st.status == "Optimal", f"infeasible at t={t}"
                assert -1e-8 <= st.tau_star <= 1.0 + 1e-8
                taus.append(st.tau_star)
                assert tubes.S.contains(ctrl.T_0 @ (xi - st.xi0_star),
                                        tol=1e-6)
                u = st.u_applied
            us.append(np.asarray(u))
            assert plant.U.contains(u, tol=1e-6)
            assert plant.X.contains(x, tol=1e-6)
            x = plant.A @ x + plant.B @ u + wx
            xs.append(x.copy())
        assert len(taus) == 40 - n_p


class TestReachableReference:
    def test_reference_admissible_and_cost_zero_when_reachable(self, loop):
        model, design, tubes, refset, cfg = loop
        rng = np.random.default_rng(2)
        xi = 0.1 * rng.normal(size=model.n_xi)
        xi_d, value = optimal_reachable_reference(model, refset, cfg, xi)
        assert refset.contains(xi_d, tol=1e-6)
        # zero output error is reachable for this unconstrained-interior case
        assert value == pytest.approx(0.0, abs=1e-6)
        # the reference orbit stays admissible
        assert refset.contains(model.A_xi @ xi_d, tol=1e-6)
