import numpy as np
import pytest
import scipy.linalg

from tubereg.errors import (
    DimensionMismatch,
    LyapunovFailure,
    NotStabilizable,
)
from tubereg.polytope import Polytope
from tubereg.signal_model import make_filter
from tubereg.synthesis import (
    _riccati_gain,
    _subsystem,
    realize_controller,
    synthesize_gain,
    terminal_cost,
)
from tubereg.velocity_model import (
    Plant,
    build_extended,
    check_well_posed,
    controllable,
    observable,
    simulate_plant,
)


def small_plant(rng, n, m=1, p=1):
    while True:
        A = rng.normal(size=(n, n))
        A *= 0.9 / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-9)
        B = rng.normal(size=(n, m))
        C = rng.normal(size=(p, n))
        plant = Plant(A=A, B=B, C=C,
                      X=Polytope.box([-10] * n, [10] * n),
                      U=Polytope.box([-10] * m, [10] * m),
                      Wx=Polytope.box([-1] * n, [1] * n),
                      We=Polytope.box([-1] * p, [1] * p))
        if controllable(A, B) and observable(A, C):
            return plant


def build_model(rng, coeffs, n=2):
    f = make_filter(coeffs)
    while True:
        plant = small_plant(rng, n)
        if check_well_posed(plant, f):
            return build_extended(plant, f)


class TestRiccati:
    def test_matches_scipy_dare(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(3, 3)) * 0.5
        B = rng.normal(size=(3, 1))
        Q, R = np.eye(3), np.eye(1)
        K = _riccati_gain(A, B, Q, R)
        P = scipy.linalg.solve_discrete_are(A, B, Q, R)
        K_ref = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        assert np.allclose(K, K_ref, atol=1e-7)

    def test_closed_loop_stable(self):
        rng = np.random.default_rng(1)
        model = build_model(rng, [1, -1])
        A_sub, B_sub = _subsystem(model)
        K = _riccati_gain(A_sub, B_sub, np.eye(A_sub.shape[0]), np.eye(1))
        rho = np.max(np.abs(np.linalg.eigvals(A_sub + B_sub @ K)))
        assert rho < 1.0


class TestSynthesizeGain:
    def test_lqr_default(self):
        rng = np.random.default_rng(2)
        model = build_model(rng, [1, -1])
        design = synthesize_gain(model)
        A_sub, B_sub = _subsystem(model)
        K_sub = np.hstack([design.K_x, design.K_e])
        rho = np.max(np.abs(np.linalg.eigvals(A_sub + B_sub @ K_sub)))
        assert rho < 1.0

    def test_gain_embedding_identity(self):
        # u = K xi decomposes exactly through the controller realization:
        # C_c T_c + D_c C_e_stack + K_x C_x == K
        rng = np.random.default_rng(3)
        for coeffs in ([1, -1], [1, 0, 1]):
            model = build_model(rng, coeffs)
            design = synthesize_gain(model)
            lhs = design.C_c @ design.T_c + design.D_c @ model.C_e \
                + design.K_x @ model.C_x
            assert np.allclose(lhs, design.K, atol=1e-12)

    def test_injected_gains_shape_checked(self):
        rng = np.random.default_rng(4)
        model = build_model(rng, [1, -1])
        with pytest.raises(DimensionMismatch):
            synthesize_gain(model, gains=(np.zeros((1, 5)), np.zeros((1, 1))))

    def test_destabilizing_gains_rejected(self):
        rng = np.random.default_rng(5)
        model = build_model(rng, [1, -1])
        bad = (10.0 * np.ones((1, model.n)), 10.0 * np.ones((1, 1)))
        with pytest.raises(NotStabilizable):
            synthesize_gain(model, gains=bad)


class TestRealization:
    def test_integrator_collapse(self):
        # for the constant-signal filter the controller is an integrator
        K_x = np.array([[0.4, -0.2]])
        K_e = np.array([[-0.5]])
        f = make_filter([1, -1])
        A_c, B_c, C_c, D_c, T_c = realize_controller((K_x, K_e), f)
        assert np.array_equal(A_c, np.eye(1))
        assert np.array_equal(B_c, K_e)
        assert np.array_equal(C_c, np.eye(1))
        assert np.array_equal(D_c, K_e)

    @pytest.mark.parametrize("coeffs", [[1, -1], [1, 0, 1],
                                        [1, -0.8, 0.3]])
    def test_dynamic_controller_reproduces_lifted_gain(self, coeffs):
        # closed-loop trajectories of the explicit (A_c, B_c, C_c, D_c)
        # controller coincide with u(t) = K xi(t) on the lifted state
        rng = np.random.default_rng(6)
        f = make_filter(coeffs)
        model = build_model(rng, coeffs)
        plant = model.plant
        design = synthesize_gain(model)
        n_p, T = f.n_p, 40
        v_init = [0.2 * rng.normal(size=plant.n + 1) for _ in range(n_p)]

        # simulate the plant under the dynamic controller
        x = rng.normal(size=plant.n)
        x_c = np.zeros(design.A_c.shape[0])
        xs, es, us = [x.copy()], [], []
        from tubereg.velocity_model import generate_signal, pack_state
        v = generate_signal(f, v_init, T + 1, plant.n + 1)
        for t in range(T):
            e = plant.C @ x + v[t][plant.n:]
            es.append(e)
            u = design.K_x @ x + design.C_c @ x_c + design.D_c @ e
            x_c = design.A_c @ x_c + design.B_c @ e
            us.append(u)
            x = plant.A @ x + plant.B @ u + v[t][:plant.n]
            xs.append(x.copy())

        worst_u = worst_xc = 0.0
        for t in range(n_p, T):
            xi = pack_state(model, xs[t::-1][:n_p + 1], es[t::-1][:n_p],
                            us[t - 1::-1][:n_p])
            worst_u = max(worst_u, np.max(np.abs(us[t] - design.K @ xi)))
            # the controller state is the advertised function of xi
            x_c_t = design.T_c @ xi
            # rebuild x_c at time t by replaying the recursion
            x_c_replay = np.zeros(design.A_c.shape[0])
            for s in range(t):
                x_c_replay = design.A_c @ x_c_replay + design.B_c @ es[s]
            worst_xc = max(worst_xc, np.max(np.abs(x_c_t - x_c_replay)))
        assert worst_u < 1e-9
        # T_c reconstruction holds once the transient has left the
        # controller state (n_p steps)
        assert worst_xc < 1e-8


class TestTerminalCost:
    def test_constant_filter_is_scaled_identity(self):
        tc = terminal_cost(make_filter([1, -1]), 2, scale=3.0)
        assert np.array_equal(tc.P, 3.0 * np.eye(2))
        assert tc.decrease_residual == 0.0

    def test_sinusoid_filter_certified(self):
        f = make_filter([1, -2 * np.cos(0.6), 1])
        tc = terminal_cost(f, 1)
        S_e = f.companion(1)
        res = np.max(np.linalg.eigvalsh(S_e.T @ tc.P @ S_e - tc.P))
        assert res <= 1e-10
        assert np.min(np.linalg.eigvalsh(tc.P)) > 0

    def test_mixed_roots_certified(self):
        f = make_filter([1, 0, 1])     # +/- i
        tc = terminal_cost(f, 2)
        S_e = f.companion(2)
        res = np.max(np.linalg.eigvalsh(S_e.T @ tc.P @ S_e - tc.P))
        assert res <= 1e-10

    def test_strictly_stable_repeated_root(self):
        f = make_filter([1, -1.0, 0.25])     # double root at 0.5
        tc = terminal_cost(f, 1)
        S_e = f.companion(1)
        res = np.max(np.linalg.eigvalsh(S_e.T @ tc.P @ S_e - tc.P))
        assert res <= 1e-10
        assert tc.strict

    def test_nonpositive_scale_rejected(self):
        with pytest.raises(LyapunovFailure):
            terminal_cost(make_filter([1, -1]), 1, scale=0.0)
