import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from moranml.geometry import make_grid
from moranml.geoshapley import (
    EXPLAIN_HEADER,
    PlayerPartition,
    explain_exact,
    explain_sampled,
    gwr_fit,
    sample_background,
    save_explanation,
    svc_smooth,
    value_function,
)
from moranml.geometry import pairwise_distances
from moranml.regressors import FeatureBundle, fit_tree_ensemble
from moranml.rng import stream
from moranml.synthgen import GrfSpec, sample_grf
from oracles import permutation_interaction, permutation_shapley


class FnModel:
    """Wraps a row-wise function of the column matrix as a predictor."""

    def __init__(self, fn):
        self.fn = fn

    def predict(self, X):
        return self.fn(np.asarray(X, float))


# columns: 0, 1 are coordinates (the GEO player), 2.. are features
GEO2 = PlayerPartition((0, 1), (2, 3))


def interacting(X):
    u, v, x1, x2 = X.T
    return np.sin(u) * x1 + v * x2**2 + x1 * x2 + np.cos(v) + 0.5 * x1


def data(n, cols, seed):
    return stream(seed, "test-shap").uniform(-2, 2, size=(n, cols))


def bitmask_value(vf, rows):
    def v(S):
        return vf(sum(1 << k for k in S), rows)

    return v


class TestValueFunction:
    def test_endpoints(self):
        bg = data(30, 4, 1)
        rows = data(5, 4, 2)
        vf = value_function(FnModel(interacting), bg, GEO2)
        np.testing.assert_allclose(vf(0, rows), interacting(bg).mean())
        np.testing.assert_array_equal(vf(0b111, rows), interacting(rows))

    def test_linear_closed_form(self):
        a, b = 1.5, np.array([0.3, -1.0, 2.0, 0.7])
        bg = data(25, 4, 3)
        rows = data(6, 4, 4)
        vf = value_function(FnModel(lambda X: a + X @ b), bg, GEO2)
        for S in range(8):
            mask = GEO2.column_mask(S)
            expected = a + rows[:, mask] @ b[mask] + bg[:, ~mask].mean(axis=0) @ b[~mask]
            np.testing.assert_allclose(vf(S, rows), expected, atol=1e-10)

    def test_schema_mismatch(self):
        with pytest.raises(ValueError, match="columns"):
            value_function(FnModel(interacting), data(5, 3, 0), GEO2)

    def test_partition_must_cover_columns(self):
        with pytest.raises(ValueError):
            PlayerPartition((0,), (2,), 3)
        with pytest.raises(ValueError):
            PlayerPartition((0, 1), (1, 2))

    def test_background_sample(self):
        X = np.arange(500.0).reshape(250, 2)
        bg = sample_background(X, 100, seed=3)
        assert bg.shape == (100, 2) and np.all(np.diff(bg[:, 0]) > 0)
        np.testing.assert_array_equal(bg, sample_background(X, 100, seed=3))
        assert len(sample_background(X[:40], 100)) == 40


class TestExact:
    @pytest.mark.parametrize("q", [3, 4])
    def test_matches_permutation_brute_force(self, q):
        feats = tuple(range(2, q + 1))
        part = PlayerPartition((0, 1), feats)

        def f(X):
            u, v = X[:, 0], X[:, 1]
            out = np.sin(u + v)
            for k, c in enumerate(feats):
                out = out + (u - k) * X[:, c] + 0.3 * X[:, c] ** 2
            return out + X[:, 2] * X[:, -1] * v

        bg = data(20, q + 1, 5)
        rows = data(7, q + 1, 6)
        vf = value_function(FnModel(f), bg, part)
        ex = explain_exact(FnModel(f), rows, bg, part)
        v = bitmask_value(vf, rows)
        sh = permutation_shapley(v, q)
        inter = [permutation_interaction(v, q, 0, j) for j in range(1, q)]
        np.testing.assert_allclose(ex.phi_geo_j, np.array(inter).T, atol=1e-10)
        np.testing.assert_allclose(ex.phi_j, sh[1:].T - 0.5 * np.array(inter).T, atol=1e-10)
        np.testing.assert_allclose(ex.phi_geo, sh[0] - 0.5 * np.sum(inter, axis=0), atol=1e-10)

    def test_local_accuracy_on_tree_model(self):
        ps = make_grid(15, 15)
        X = np.column_stack([ps.coords, data(ps.n, 2, 7)])
        y = interacting(X)
        model = fit_tree_ensemble(X, y, {"n_estimators": 30})
        ex = explain_exact(model, X[:200], sample_background(X, 50), GEO2)
        assert ex.additivity_error() < 1e-6

    def test_dummy_geo_for_additive_model(self):
        bg = data(30, 4, 8)
        rows = data(10, 4, 9)
        ex = explain_exact(FnModel(lambda X: X[:, 2] ** 2 + np.exp(X[:, 3])), rows, bg, GEO2)
        np.testing.assert_allclose(ex.phi_geo, 0, atol=1e-12)
        np.testing.assert_allclose(ex.phi_geo_j, 0, atol=1e-12)

    def test_linear_closed_form(self):
        bg = data(40, 4, 10)
        rows = data(10, 4, 11)
        ex = explain_exact(FnModel(lambda X: 2.0 + 3.0 * X[:, 2]), rows, bg, GEO2)
        np.testing.assert_allclose(ex.phi_j[:, 0], 3.0 * (rows[:, 2] - bg[:, 2].mean()), atol=1e-8)
        np.testing.assert_allclose(ex.phi_j[:, 1], 0, atol=1e-12)
        np.testing.assert_allclose(ex.phi_geo, 0, atol=1e-12)

    def test_location_lookup_goes_to_geo(self):
        ex_rows = data(10, 4, 12)
        bg = data(30, 4, 13)
        f = FnModel(lambda X: np.sin(X[:, 0]) * np.cos(X[:, 1]))
        ex = explain_exact(f, ex_rows, bg, GEO2)
        np.testing.assert_allclose(ex.phi_j, 0, atol=1e-12)
        np.testing.assert_allclose(ex.phi_geo, f.predict(ex_rows) - f.predict(bg).mean(), atol=1e-12)

    @given(st.integers(0, 10_000))
    def test_symmetry(self, seed):
        r = stream(seed, "test-sym")
        bg = r.uniform(-1, 1, size=(15, 4))
        bg[:, 3] = bg[:, 2]  # symmetric background in the two features
        rows = r.uniform(-1, 1, size=(4, 4))
        rows[:, 3] = rows[:, 2]
        f = FnModel(lambda X: X[:, 0] * (X[:, 2] + X[:, 3]) + X[:, 2] * X[:, 3])
        ex = explain_exact(f, rows, bg, GEO2)
        np.testing.assert_allclose(ex.phi_j[:, 0], ex.phi_j[:, 1], atol=1e-8)

    def test_without_spatial_columns(self):
        part = PlayerPartition((), (0, 1))
        ex = explain_exact(FnModel(lambda X: X[:, 0] * X[:, 1]), data(5, 2, 0), data(10, 2, 1), part)
        assert ex.additivity_error() < 1e-12
        np.testing.assert_array_equal(ex.phi_geo, 0)

    def test_refuses_too_many_players(self):
        part = PlayerPartition((0,), tuple(range(1, 14)))
        with pytest.raises(ValueError, match="exact"):
            explain_exact(FnModel(lambda X: X[:, 0]), np.zeros((1, 14)), np.zeros((2, 14)), part)

    def test_partition_from_bundle(self):
        fb = FeatureBundle(np.zeros((4, 2)), np.zeros((4, 5)), "eigenvectors")
        part = PlayerPartition.from_bundle(fb)
        assert part.geo_columns == (2, 3, 4, 5, 6) and part.q == 3


@pytest.fixture(scope="module")
def seven_players():
    part = PlayerPartition((0, 1), tuple(range(2, 8)))

    def f(X):
        u, v = X[:, 0], X[:, 1]
        feats = X[:, 2:]
        return np.sin(u) * feats[:, 0] + v * feats[:, 1] + (feats**2) @ np.linspace(0.2, 1, 6) + feats[:, 2] * feats[:, 3]

    bg = data(30, 8, 16)
    rows = data(20, 8, 17)
    return FnModel(f), rows, bg, part, explain_exact(FnModel(f), rows, bg, part)


class TestSampled:
    def test_full_budget_equals_exact(self):
        bg = data(30, 4, 14)
        rows = data(12, 4, 15)
        m = FnModel(interacting)
        ex = explain_exact(m, rows, bg, GEO2)
        sa = explain_sampled(m, rows, bg, GEO2, budget=8, seed=0)
        np.testing.assert_allclose(sa.phi_j, ex.phi_j, atol=1e-6)
        np.testing.assert_allclose(sa.phi_geo, ex.phi_geo, atol=1e-6)
        np.testing.assert_allclose(sa.phi_geo_j, ex.phi_geo_j, atol=1e-6)

    def test_error_shrinks_with_budget(self, seven_players):
        model, rows, bg, part, ex = seven_players
        err = {}
        for budget in (24, 48, 96):
            errs = []
            for seed in range(5):
                sa = explain_sampled(model, rows, bg, part, budget, seed)
                errs.append(np.mean(np.abs(sa.phi_j - ex.phi_j)))
            err[budget] = np.mean(errs)
        assert err[96] < err[48] < err[24]

    def test_additivity_holds_when_sampled(self, seven_players):
        model, rows, bg, part, _ = seven_players
        assert explain_sampled(model, rows, bg, part, 40, 1).additivity_error() < 1e-8

    def test_dummy_player(self):
        part = PlayerPartition((0, 1), (2, 3, 4, 5))
        f = FnModel(lambda X: np.sin(X[:, 0]) * X[:, 2] + X[:, 3] ** 2 + X[:, 1] * X[:, 4])
        sa = explain_sampled(f, data(15, 6, 18), data(20, 6, 19), part, budget=20, seed=2)
        assert np.mean(np.abs(sa.phi_j[:, 3])) < 1e-3
        assert np.mean(np.abs(sa.phi_geo_j[:, 3])) < 1e-3

    def test_deterministic_per_seed(self, seven_players):
        model, rows, bg, part, _ = seven_players
        a = explain_sampled(model, rows, bg, part, 30, 5)
        b = explain_sampled(model, rows, bg, part, 30, 5)
        np.testing.assert_array_equal(a.phi_j, b.phi_j)

    def test_budget_floor(self):
        with pytest.raises(ValueError, match="budget"):
            explain_sampled(FnModel(interacting), data(2, 4, 0), data(3, 4, 1), GEO2, budget=7)


@pytest.fixture(scope="module")
def field():
    ps = make_grid(20, 20)
    c = 1.5 * sample_grf(ps, GrfSpec(8.0), 21)
    x = stream(22, "test-x").uniform(-2, 2, ps.n)
    return ps, c, x


class TestSmoothing:
    def test_recovers_smooth_coefficient(self, field):
        ps, c, x = field
        slopes = svc_smooth(c * x, x, ps.coords)
        assert np.sqrt(np.mean((slopes - c) ** 2)) < 0.1 * c.std()

    def test_zero_input(self, field):
        ps, _, x = field
        np.testing.assert_array_equal(svc_smooth(np.zeros(ps.n), x, ps.coords, bandwidth=3.0), 0.0)

    def test_infinite_bandwidth_is_global_ols(self, field):
        ps, c, x = field
        z = c * x + 0.3
        slopes = svc_smooth(z, x, ps.coords, bandwidth=np.inf)
        global_slope = np.polyfit(x, z, 1)[0]
        np.testing.assert_allclose(slopes, global_slope, atol=1e-8)

    def test_degenerate_window_is_widened(self):
        xy = np.array([[0.0, 0], [0.1, 0], [50, 0], [51, 0], [52, 0]])
        x = np.array([1.0, 1.0, 0.0, 1.0, 2.0])
        res = gwr_fit(x * 2.0, x, pairwise_distances(xy), 0.5)
        assert res.widened[0] and res.widened[1] and not res.widened[3]
        np.testing.assert_allclose(res.slopes[2:], 2.0, atol=1e-8)

    def test_cv_details(self, field):
        ps, c, x = field
        res = svc_smooth(c * x, x, ps.coords, return_details=True)
        assert res.bandwidth == min(res.cv_scores, key=res.cv_scores.get)

    def test_bad_bandwidth(self, field):
        ps, c, x = field
        with pytest.raises(ValueError):
            svc_smooth(c * x, x, ps.coords, bandwidth=-1.0)


def test_export_layout(tmp_path):
    ex = explain_exact(FnModel(interacting), data(3, 4, 1), data(10, 4, 2), GEO2)
    ex.svc = np.ones((3, 2))
    save_explanation(ex, ["a", "b", "c"], tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == EXPLAIN_HEADER
    assert EXPLAIN_HEADER == "id,phi0,phi_geo,phi_x1,phi_x2,phi_geo_x1,phi_geo_x2,svc_x1,svc_x2,pred"
    first = lines[1].split(",")
    assert first[0] == "a" and len(first) == 10
    assert float(first[-1]) == pytest.approx(interacting(data(3, 4, 1))[0])
