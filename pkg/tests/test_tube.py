import numpy as np
import pytest

from tubereg.errors import NotSchur, TighteningInfeasible
from tubereg import polytope as pt
from tubereg.polytope import Polytope
from tubereg.signal_model import make_filter
from tubereg.synthesis import ControllerDesign, synthesize_gain
from tubereg.tube import (
    TubeSets,
    build_reference_set,
    build_tube_sets,
    certify_rpi,
    closed_loop_error_matrices,
    compute_rpi,
    config_hash,
    project_tubes,
)
from tubereg.velocity_model import Plant, build_extended, pack_state


def static_design(n, m, p, K_x=None, n_c=1):
    """Design with a trivial (zero) dynamic part, for hand-computable loops."""
    K_x = np.zeros((m, n)) if K_x is None else np.asarray(K_x, float)
    return ControllerDesign(
        K_x=K_x, K_e=np.zeros((m, p)), K=None,
        A_c=np.zeros((n_c, n_c)), B_c=np.zeros((n_c, p)),
        C_c=np.zeros((m, n_c)), D_c=np.zeros((m, p)), T_c=None)


def scalar_plant(a, w_half):
    return Plant(A=[[a]], B=[[0.0]], C=[[1.0]],
                 X=Polytope.box([-10], [10]), U=Polytope.box([-10], [10]),
                 Wx=Polytope.box([-w_half], [w_half]),
                 We=Polytope.box([0], [0]))


class TestComputeRpi:
    def test_scalar_contraction_brackets_minimal_set(self):
        # x+ = 0.5 x + w, w in [-1, 1]: the minimal invariant interval is
        # [-2, 2]; the (1+eps) construction must land between that and its
        # (1+eps) inflation
        eps = 0.01
        plant = scalar_plant(0.5, 1.0)
        design = static_design(1, 1, 1)
        V1 = Polytope.box([0, 0], [0, 0])
        S = compute_rpi(design, plant, V1, eps=eps)
        e1 = np.zeros(S.dim)
        e1[0] = 1.0
        hi = S.support(e1)
        lo = -S.support(-e1)
        assert hi >= 2.0 - 1e-9 and lo <= -2.0 + 1e-9
        assert hi <= 2.0 * (1 + eps) + 1e-9
        assert lo >= -2.0 * (1 + eps) - 1e-9

    def test_2d_matches_minkowski_oracle(self):
        # contractive rotation: compare against the truncated Minkowski sum
        # sum_k A^k D evaluated through support functions (200 terms leave a
        # tail below 1e-9)
        eps = 0.05
        th = 0.7
        A = 0.6 * np.array([[np.cos(th), -np.sin(th)],
                            [np.sin(th), np.cos(th)]])
        plant = Plant(A=A, B=[[0.0], [0.0]], C=[[1.0, 0.0]],
                      X=Polytope.box([-10, -10], [10, 10]),
                      U=Polytope.box([-10], [10]),
                      Wx=Polytope.box([-0.3, -0.1], [0.3, 0.1]),
                      We=Polytope.box([-0.2], [0.2]))
        design = static_design(2, 1, 1)
        V1 = Polytope.box([-0.1, 0, 0], [0.1, 0, 0])
        S = compute_rpi(design, plant, V1, eps=eps)
        A_cl, B_cl = closed_loop_error_matrices(design, plant)
        D_parts = [V1, plant.Wx.cross(plant.We)]

        def h_D(f):
            g = B_cl.T @ f
            return sum(s.support(g) for s in D_parts)

        ang = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        worst = 0.0
        for a in ang:
            f = np.zeros(S.dim)
            f[0], f[1] = np.cos(a), np.sin(a)
            oracle = 0.0
            M = np.eye(2)
            for _ in range(200):
                g = np.array([f[0], f[1]])
                oracle += h_D(np.concatenate([M.T @ g, np.zeros(S.dim - 2)]))
                M = A_cl[:2, :2] @ M
            s = S.support(f)
            assert s >= oracle - 1e-7
            worst = max(worst, s / oracle - 1.0)
        assert worst <= eps + 1e-6

    def test_unstable_loop_rejected(self):
        plant = scalar_plant(1.01, 1.0)
        design = static_design(1, 1, 1)
        with pytest.raises(NotSchur):
            compute_rpi(design, plant, Polytope.box([0, 0], [0, 0]))

    def test_certificate_fails_on_shrunk_set(self):
        plant = scalar_plant(0.5, 1.0)
        design = static_design(1, 1, 1)
        V1 = Polytope.box([0, 0], [0, 0])
        S = compute_rpi(design, plant, V1, eps=0.01)
        A_cl, B_cl = closed_loop_error_matrices(design, plant)
        W = plant.Wx.cross(plant.We)

        def h_D(f):
            g = B_cl.T @ f
            return V1.support(g) + W.support(g)

        assert certify_rpi(S, A_cl, h_D)
        S_bad = Polytope(S.H, 0.9 * S.h, normalize=False)
        assert not certify_rpi(S_bad, A_cl, h_D)


class TestProjections:
    def test_scalar_projections(self):
        # with zero feedback the state tightening is the first coordinate of
        # S and the input tightening is zero
        plant = scalar_plant(0.5, 1.0)
        design = static_design(1, 1, 1)
        V1 = Polytope.box([0, 0], [0, 0])
        S = compute_rpi(design, plant, V1, eps=0.01)
        S_x, S_u = project_tubes(S, design, plant, V1)
        e1 = np.zeros(S.dim)
        e1[0] = 1.0
        assert S_x.support([1.0]) == pytest.approx(S.support(e1), abs=1e-9)
        assert S_u.support([1.0]) == pytest.approx(0.0, abs=1e-9)
        assert S_u.support([-1.0]) == pytest.approx(0.0, abs=1e-9)

    def test_feedback_maps_into_input_tightening(self):
        plant = scalar_plant(0.5, 1.0)
        design = static_design(1, 1, 1, K_x=[[-0.25]])
        V1 = Polytope.box([0, 0], [0, 0])
        S = compute_rpi(design, plant, V1, eps=0.01)
        S_x, S_u = project_tubes(S, design, plant, V1)
        e1 = np.zeros(S.dim)
        e1[0] = 1.0
        assert S_u.support([1.0]) == pytest.approx(
            0.25 * S.support(-e1), rel=1e-9)


def small_pipeline(seed=0, coeffs=(1, -1)):
    rng = np.random.default_rng(seed)
    f = make_filter(list(coeffs))
    while True:
        n = 2
        A = rng.normal(size=(n, n))
        A *= 0.7 / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-9)
        B = rng.normal(size=(n, 1))
        C = rng.normal(size=(1, n))
        plant = Plant(A=A, B=B, C=C,
                      X=Polytope.box([-5, -5], [5, 5]),
                      U=Polytope.box([-5], [5]),
                      Wx=Polytope.box([-0.01, -0.01], [0.01, 0.01]),
                      We=Polytope.box([-0.01], [0.01]))
        try:
            model = build_extended(plant, f)
        except Exception:
            continue
        design = synthesize_gain(model)
        return model, design


class TestBuildTubeSets:
    def test_tightened_sets_nest(self):
        model, design = small_pipeline()
        tubes = build_tube_sets(model, design)
        plant = model.plant
        assert pt.subset_of(tubes.X_tight, plant.X)
        assert pt.subset_of(tubes.U_tight, plant.U)
        assert not tubes.X_tight.is_empty()
        # the cross-section contains the origin
        assert tubes.S.contains(np.zeros(tubes.S.dim))

    def test_overwhelming_disturbance_raises(self):
        model, design = small_pipeline()
        plant = model.plant
        big = Plant(A=plant.A, B=plant.B, C=plant.C,
                    X=Polytope.box([-0.001, -0.001], [0.001, 0.001]),
                    U=plant.U, Wx=Polytope.box([-1, -1], [1, 1]),
                    We=plant.We)
        model2 = build_extended(big, model.filter)
        with pytest.raises(TighteningInfeasible):
            build_tube_sets(model2, design)


class TestReferenceSet:
    def test_equilibria_admissible_and_invariant(self):
        model, design = small_pipeline()
        tubes = build_tube_sets(model, design)
        refset = build_reference_set(model, tubes, sigma=1.05)
        plant = model.plant
        n_p = model.n_p
        # small equilibria are admissible; the orbit map keeps them inside
        for u_s in (0.0, 0.5, -0.5):
            x_s = np.linalg.solve(np.eye(2) - plant.A,
                                  plant.B @ np.array([u_s]))
            e_s = np.zeros(1)
            xi = pack_state(model, [x_s] * (n_p + 1), [e_s] * n_p,
                            [np.array([u_s])] * n_p)
            assert refset.contains(xi)
            assert refset.contains(model.A_xi @ xi)
        assert refset.horizon_cert >= 0

    def test_saturating_reference_rejected(self):
        model, design = small_pipeline()
        tubes = build_tube_sets(model, design)
        refset = build_reference_set(model, tubes, sigma=1.05)
        plant = model.plant
        n_p = model.n_p
        u_s = np.array([4.999])     # input ceiling leaves no sigma headroom
        x_s = np.linalg.solve(np.eye(2) - plant.A, plant.B @ u_s)
        xi = pack_state(model, [x_s] * (n_p + 1), [np.zeros(1)] * n_p,
                        [u_s] * n_p)
        assert not refset.contains(xi)

    def test_sigma_orders_membership(self):
        model, design = small_pipeline()
        tubes = build_tube_sets(model, design)
        tight = build_reference_set(model, tubes, sigma=1.5)
        loose = build_reference_set(model, tubes, sigma=1.05)
        plant = model.plant
        n_p = model.n_p
        for u_s in np.linspace(-4.0, 4.0, 17):
            x_s = np.linalg.solve(np.eye(2) - plant.A,
                                  plant.B @ np.array([u_s]))
            xi = pack_state(model, [x_s] * (n_p + 1), [np.zeros(1)] * n_p,
                            [np.array([u_s])] * n_p)
            if tight.contains(xi):
                assert loose.contains(xi)

    def test_sigma_must_exceed_one(self):
        model, design = small_pipeline()
        tubes = build_tube_sets(model, design)
        with pytest.raises(ValueError):
            build_reference_set(model, tubes, sigma=1.0)


class TestPersistence:
    def test_save_load_roundtrip(self, tmp_path):
        model, design = small_pipeline()
        tubes = build_tube_sets(model, design)
        key = config_hash(model.plant.A, model.plant.B)
        path = tmp_path / "tubes.json"
        tubes.save(path, config_hash=key)
        back = TubeSets.load(path, config_hash=key)
        assert back is not None
        assert back.epsilon == tubes.epsilon
        assert np.allclose(back.S.H, tubes.S.H)
        assert np.allclose(back.S.h, tubes.S.h)
        assert pt.set_equal(back.X_tight, tubes.X_tight)

    def test_config_hash_mismatch_misses(self, tmp_path):
        model, design = small_pipeline()
        tubes = build_tube_sets(model, design)
        path = tmp_path / "tubes.json"
        tubes.save(path, config_hash="aaaa")
        assert TubeSets.load(path, config_hash="bbbb") is None
        assert TubeSets.load(tmp_path / "missing.json") is None
