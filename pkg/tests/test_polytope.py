import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tubereg import polytope as pt
from tubereg.errors import (
    DimensionMismatch,
    EmptyInput,
    NegativeScale,
    Unbounded,
)
from tubereg.polytope import Polytope


def random_box(rng, dim, width=2.0):
    c = rng.uniform(-1, 1, size=dim)
    w = rng.uniform(0.1, width, size=dim)
    return Polytope.box(c - w, c + w)


def random_polytope_2d(rng, facets=6):
    """Bounded random 2-D polytope: tangent halfspaces of a random ellipse."""
    ang = np.sort(rng.uniform(0, 2 * np.pi, size=facets))
    H = np.column_stack([np.cos(ang), np.sin(ang)])
    h = rng.uniform(0.5, 2.0, size=facets)
    # close it with a box so it is always bounded
    box = Polytope.box([-3, -3], [3, 3])
    return Polytope(np.vstack([H, box.H]), np.concatenate([h, box.h]))


class TestBasics:
    def test_box_membership_and_support(self):
        P = Polytope.box([-1, -2], [3, 4])
        assert P.contains([0, 0])
        assert P.contains([3, 4])
        assert not P.contains([3.1, 0])
        assert P.support([1, 0]) == pytest.approx(3.0)
        assert P.support([-1, 0]) == pytest.approx(1.0)
        assert P.support([1, 1]) == pytest.approx(7.0)
        assert P.as_box() is not None
        assert P.bounded and not P.empty

    def test_halfspace_normalization(self):
        P = Polytope([[2.0, 0.0]], [4.0])
        assert np.allclose(P.H, [[1.0, 0.0]])
        assert np.allclose(P.h, [2.0])

    def test_empty_detection(self):
        P = Polytope([[1.0], [-1.0]], [1.0, -2.0])   # x <= 1 and x >= 2
        assert P.is_empty()
        assert P.support([1.0]) == -np.inf

    def test_unbounded_support(self):
        P = Polytope([[1.0, 0.0]], [1.0])            # halfplane
        with pytest.raises(Unbounded):
            P.support([-1.0, 0.0])
        assert not P.is_bounded()

    def test_dim_mismatch(self):
        P = Polytope.box([-1, -1], [1, 1])
        with pytest.raises(DimensionMismatch):
            P.contains([0.0])
        with pytest.raises(DimensionMismatch):
            P.support([1.0, 0.0, 0.0])

    def test_chebyshev_center_of_box(self):
        P = Polytope.box([0, 0], [2, 4])
        c, r = P.chebyshev_center()
        assert r == pytest.approx(1.0)
        assert c[0] == pytest.approx(1.0)

    def test_vertices_of_box(self):
        P = Polytope.box([-1, -1], [1, 2])
        V = P.vertices()
        expect = {(-1, -1), (-1, 2), (1, -1), (1, 2)}
        got = {tuple(np.round(v, 9)) for v in V}
        assert got == expect

    def test_singleton_and_origin(self):
        P = Polytope.singleton([1.5, -0.5])
        assert P.contains([1.5, -0.5])
        assert not P.contains([1.5, -0.4])
        assert Polytope.origin(3).contains(np.zeros(3))

    def test_serialization_roundtrip(self):
        P = Polytope.box([-1, 0], [2, 3])
        Q = Polytope.from_json(P.to_json())
        assert pt.set_equal(P, Q)


class TestArithmetic:
    def test_minkowski_sum_of_boxes(self):
        A = Polytope.box([-1, -1], [1, 1])
        B = Polytope.box([-2, 0], [0, 3])
        S = pt.minkowski_sum(A, B)
        box = S.as_box()
        assert box is not None
        assert np.allclose(box[0], [-3, -1])
        assert np.allclose(box[1], [1, 4])
        assert not S.outer

    def test_minkowski_sum_singleton_is_translation(self):
        A = random_polytope_2d(np.random.default_rng(1))
        t = np.array([0.3, -0.7])
        S = A + Polytope.singleton(t)
        for d in np.eye(2):
            assert S.support(d) == pytest.approx(A.support(d) + d @ t)

    def test_pontryagin_difference_of_boxes(self):
        A = Polytope.box([-5, -5], [5, 5])
        B = Polytope.box([-1, -2], [1, 2])
        D = pt.pontryagin_diff(A, B)
        assert pt.set_equal(D, Polytope.box([-4, -3], [4, 3]))

    def test_pontryagin_then_sum_is_subset(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            A = random_polytope_2d(rng)
            B = random_box(rng, 2, width=0.5)
            D = pt.pontryagin_diff(A, B)
            if D.is_empty():
                continue
            assert pt.subset_of(pt.minkowski_sum(D, B), A)

    def test_scale(self):
        P = Polytope.box([-1, -2], [1, 2])
        assert pt.set_equal(pt.scale(P, 2.0), Polytope.box([-2, -4], [2, 4]))
        with pytest.raises(NegativeScale):
            pt.scale(P, -1.0)

    def test_negation(self):
        P = Polytope.box([0, 0], [1, 2])
        assert pt.set_equal(-P, Polytope.box([-1, -2], [0, 0]))

    def test_cross_product(self):
        A = Polytope.box([-1], [1])
        B = Polytope.box([0], [2])
        C = A.cross(B)
        assert C.dim == 2
        assert C.contains([1, 2]) and not C.contains([1, -0.1])

    def test_intersection(self):
        A = Polytope.box([-2, -2], [1, 1])
        B = Polytope.box([0, 0], [3, 3])
        I = pt.intersect(A, B)
        assert pt.set_equal(I, Polytope.box([0, 0], [1, 1]))

    def test_remove_redundancy(self):
        # box plus strictly redundant facets
        P = Polytope(
            [[1, 0], [-1, 0], [0, 1], [0, -1], [1, 0], [1, 1]],
            [1, 1, 1, 1, 5, 10],
        )
        R = pt.remove_redundancy(P)
        assert len(R.h) == 4
        assert pt.set_equal(R, P)
        with pytest.raises(EmptyInput):
            pt.remove_redundancy(Polytope([[1.0], [-1.0]], [0.0, -1.0]))

    def test_interval_hull(self):
        P = Polytope([[1, 1], [-1, 1], [0, -1]], [1, 1, 0])  # triangle
        H = pt.interval_hull(P)
        assert pt.subset_of(P, H)


class TestProjection:
    def test_fm_projection_of_box(self):
        P = Polytope.box([-1, -2, -3], [1, 2, 3])
        Q = pt.fourier_motzkin_project(P.H, P.h, keep=[0, 2])
        assert pt.set_equal(Q, Polytope.box([-1, -3], [1, 3]))

    def test_fm_projection_with_equalities(self):
        # {(x, y) : x + y = 1, 0 <= x <= 1} projected onto x
        H = np.array([[1.0, 0.0], [-1.0, 0.0]])
        h = np.array([1.0, 0.0])
        Q = pt.fourier_motzkin_project(H, h, keep=[0],
                                       A_eq=[[1.0, 1.0]], b_eq=[1.0])
        assert pt.set_equal(Q, Polytope.box([0.0], [1.0]))

    def test_fm_projection_vs_vertex_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            P = random_polytope_2d(rng)
            Q = pt.fourier_motzkin_project(P.H, P.h, keep=[0])
            # oracle: projection bounds from the vertex enumeration
            V = P.vertices()
            lo, hi = V[:, 0].min(), V[:, 0].max()
            assert Q.support([1.0]) == pytest.approx(hi, abs=1e-6)
            assert -Q.support([-1.0]) == pytest.approx(lo, abs=1e-6)

    def test_fm_infeasible_equalities(self):
        Q = pt.fourier_motzkin_project(
            np.zeros((0, 2)), np.zeros(0), keep=[0],
            A_eq=[[0.0, 0.0]], b_eq=[1.0])
        assert Q.is_empty()

    def test_affine_map_invertible(self):
        P = Polytope.box([-1, -1], [1, 1])
        M = np.array([[2.0, 1.0], [0.0, 1.0]])
        Q = pt.affine_map(P, M)
        V = P.vertices()
        for v in V:
            assert Q.contains(M @ v)
        # image supports equal max over mapped vertices
        for d in np.vstack([np.eye(2), -np.eye(2)]):
            assert Q.support(d) == pytest.approx((V @ M.T @ d).max(), abs=1e-7)

    def test_affine_map_projection_path(self):
        P = Polytope.box([-1, -2, -3], [1, 2, 3])
        M = np.array([[1.0, 1.0, 0.0]])
        Q = pt.affine_map(P, M)
        assert pt.set_equal(Q, Polytope.box([-3.0], [3.0]))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2),
       st.lists(st.floats(0.1, 3), min_size=2, max_size=2),
       st.lists(st.floats(-5, 5), min_size=2, max_size=2),
       st.lists(st.floats(0.1, 3), min_size=2, max_size=2))
def test_sum_support_is_additive(ca, wa, cb, wb):
    ca, wa, cb, wb = map(np.asarray, (ca, wa, cb, wb))
    A = Polytope.box(ca - wa, ca + wa)
    B = Polytope.box(cb - wb, cb + wb)
    S = pt.minkowski_sum(A, B)
    for d in [np.array([1.0, 0]), np.array([0, -1.0]), np.array([1.0, 1.0])]:
        assert S.support(d) == pytest.approx(
            A.support(d) + B.support(d), abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2),
       st.floats(0.0, 4.0))
def test_scale_support_is_homogeneous(c, s):
    c = np.asarray(c)
    P = Polytope.box(c - 1.0, c + 1.0)
    Q = pt.scale(P, s)
    for d in [np.array([1.0, 0]), np.array([0.5, -0.5])]:
        assert Q.support(d) == pytest.approx(s * P.support(d), abs=1e-8)
