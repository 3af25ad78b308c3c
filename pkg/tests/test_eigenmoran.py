import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from moranml.eigenmoran import (
    EigenBasis,
    center_weights,
    load_basis,
    moran_eigen_full,
    moran_eigen_nystrom,
    morans_i,
    nystrom_basis,
    save_basis,
    select_knots,
)
from moranml.geometry import make_grid, mst_max_edge, pairwise_distances
from moranml.weights import exponential_weights, queen_weights
from oracles import centering_matrix, jacobi_eigh, moran_i_direct


def exp_weights(ps):
    d = pairwise_distances(ps)
    return exponential_weights(d, mst_max_edge(d))


def principal_angles(a, b):
    qa, _ = np.linalg.qr(a)
    qb, _ = np.linalg.qr(b)
    return np.arccos(np.clip(np.linalg.svd(qa.T @ qb, compute_uv=False), -1, 1))


class TestCentering:
    def test_matches_explicit_product(self, rng):
        c = rng.uniform(size=(7, 7))
        c = c + c.T
        m = centering_matrix(7)
        np.testing.assert_allclose(center_weights(c), m @ c @ m, atol=1e-13)


class TestFullSolver:
    def test_three_by_three_queen(self):
        basis = moran_eigen_full(queen_weights(make_grid(3, 3)), L=8, rule="include_negative")
        assert basis.L == 8
        np.testing.assert_allclose(basis.vectors.sum(axis=0), 0, atol=1e-10)
        np.testing.assert_allclose(basis.vectors.T @ basis.vectors, np.eye(8), atol=1e-10)

    def test_positive_rule_truncates(self):
        basis = moran_eigen_full(queen_weights(make_grid(3, 3)), L=8)
        assert 0 < basis.L < 8
        assert np.all(basis.values > 0)

    def test_eigenvalues_match_jacobi_oracle(self):
        w = queen_weights(make_grid(4, 4))
        basis = moran_eigen_full(w, L=16, rule="include_negative")
        assert basis.L == 15  # the constant direction is never a candidate
        oracle, _ = jacobi_eigh(centering_matrix(16) @ w.c @ centering_matrix(16))
        got = np.sort(np.append(basis.values, 0.0))
        np.testing.assert_allclose(got, oracle, rtol=1e-8, atol=1e-10)

    def test_eigenvectors_satisfy_definition(self):
        w = exp_weights(make_grid(5, 5))
        basis = moran_eigen_full(w, L=10)
        mcm = center_weights(w.c)
        np.testing.assert_allclose(mcm @ basis.vectors, basis.vectors * basis.values, atol=1e-10)

    @pytest.mark.parametrize("kind", ["queen", "exp"])
    def test_trace_identity(self, kind):
        ps = make_grid(6, 5)
        w = queen_weights(ps) if kind == "queen" else exp_weights(ps)
        basis = moran_eigen_full(w, L=30, rule="include_negative")
        tr = np.trace(center_weights(w.c))
        assert basis.values.sum() == pytest.approx(tr, rel=1e-8, abs=1e-8)

    def test_sign_convention(self):
        basis = moran_eigen_full(exp_weights(make_grid(6, 6)), L=10)
        for col in basis.vectors.T:
            first = col[np.abs(col) > 1e-8 * np.abs(col).max()][0]
            assert first > 0

    def test_rejects_asymmetric_matrix(self):
        c = np.array([[0, 1.0, 0], [0.5, 0, 1], [0, 1, 0]])
        with pytest.raises(ValueError, match="symmetric"):
            moran_eigen_full(c, L=2)

    def test_rejects_bad_L(self):
        with pytest.raises(ValueError):
            moran_eigen_full(queen_weights(make_grid(3, 3)), L=10)


class TestMoransI:
    @pytest.mark.parametrize("kind", ["queen", "exp"])
    def test_eigenvector_identity(self, kind):
        ps = make_grid(7, 6)
        w = queen_weights(ps) if kind == "queen" else exp_weights(ps)
        basis = moran_eigen_full(w, L=20)
        factor = ps.n / w.total_weight
        for k in range(basis.L):
            assert morans_i(basis.vectors[:, k], w) == pytest.approx(factor * basis.values[k], abs=1e-8)

    def test_matches_double_sum(self, rng):
        w = exp_weights(make_grid(4, 5))
        z = rng.normal(size=20)
        assert morans_i(z, w) == pytest.approx(moran_i_direct(z, w.c), rel=1e-12)

    def test_checkerboard_is_negative(self):
        ps = make_grid(10, 10)
        r, c = np.divmod(np.arange(100), 10)
        assert morans_i((-1.0) ** (r + c), queen_weights(ps)) < 0

    def test_spike_near_minimum(self):
        ps = make_grid(15, 15)
        w = queen_weights(ps)
        z = np.zeros(ps.n)
        z[112] = 1.0
        spike = morans_i(z, w)
        assert spike == pytest.approx(moran_i_direct(z, w.c), rel=1e-10)
        # the spike autocorrelation is close to the floor -1/(n-1) and far below any smooth map
        assert abs(spike - (-1 / (ps.n - 1))) < 0.05

    def test_constant_raises(self):
        with pytest.raises(ValueError, match="constant"):
            morans_i(np.ones(9), queen_weights(make_grid(3, 3)))


class TestNystrom:
    def test_all_knots_reproduces_full_span(self):
        ps = make_grid(8, 8)
        w = exp_weights(ps)
        d = pairwise_distances(ps)
        r = mst_max_edge(d)
        approx = moran_eigen_nystrom(w, np.exp(-d / r), L=10)
        full = moran_eigen_full(w, L=10)
        assert principal_angles(approx.vectors, full.vectors).max() < 1e-6
        np.testing.assert_allclose(approx.values, full.values, rtol=1e-8)

    @given(st.integers(12, 60), st.integers(0, 2**32))
    def test_invariants_for_any_m(self, m, seed):
        ps = make_grid(9, 9)
        basis, r, knots = nystrom_basis(ps, L=10, m=m, seed=seed)
        basis.check_invariants()
        assert len(knots) == m and r > 0

    def test_knots_are_sorted_unique_and_seeded(self):
        ps = make_grid(10, 10)
        a = select_knots(ps, 30, seed=4)
        np.testing.assert_array_equal(a, select_knots(ps, 30, seed=4))
        assert len(np.unique(a)) == 30 and np.all(np.diff(a) > 0)
        u = select_knots(ps, 30, seed=4, method="uniform")
        assert len(np.unique(u)) == 30

    def test_too_few_knots(self):
        with pytest.raises(ValueError, match="knots"):
            moran_eigen_nystrom(np.zeros((3, 3)), np.zeros((10, 3)), L=5)


class TestIO:
    def test_round_trip_exact(self, tmp_path):
        basis = moran_eigen_full(exp_weights(make_grid(4, 4)), L=5)
        save_basis(basis, tmp_path / "e.csv", ids=[f"p{i}" for i in range(16)])
        back, ids = load_basis(tmp_path / "e.csv")
        np.testing.assert_array_equal(back.vectors, basis.vectors)
        np.testing.assert_array_equal(back.values, basis.values)
        assert ids[3] == "p3"

    def test_immutable(self):
        basis = EigenBasis(np.eye(3)[:, :2], np.array([2.0, 1.0]), "full", "include_negative")
        with pytest.raises(ValueError):
            basis.vectors[0, 0] = 5.0

    def test_unsorted_values_rejected(self):
        with pytest.raises(ValueError, match="sorted"):
            EigenBasis(np.eye(3)[:, :2], np.array([1.0, 2.0]), "full", "include_negative")


def test_scipy_route_agrees_with_jacobi_on_exponential():
    w = exp_weights(make_grid(4, 4))
    a, _ = jacobi_eigh(center_weights(w.c))
    b = scipy.linalg.eigvalsh(center_weights(w.c))
    np.testing.assert_allclose(a, b, atol=1e-10)
