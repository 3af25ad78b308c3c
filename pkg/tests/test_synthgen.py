import numpy as np
import pytest

from moranml.geometry import PointSet, make_grid
from moranml.rng import child_seed, stream
from moranml.synthgen import (
    GrfError,
    _cholesky,
    GrfSpec,
    assemble_response,
    generate_dataset,
    grf_covariance,
    load_dataset,
    noise_sd_for,
    sample_grf,
    save_dataset,
)


class TestStreams:
    def test_labels_are_independent(self):
        a = stream(3, "x1").uniform(size=5)
        assert not np.array_equal(a, stream(3, "x2").uniform(size=5))
        np.testing.assert_array_equal(a, stream(3, "x1").uniform(size=5))

    def test_child_seed_range(self):
        s = child_seed(2**70 + 5, "abc")
        assert 0 <= s < 2**63


class TestGrf:
    def test_single_point_is_standard_normal(self):
        draws = sample_grf(np.zeros((1, 2)), GrfSpec(8.0), 0, size=10_000)
        assert draws.var() == pytest.approx(1.0, abs=0.05)

    def test_covariance_at_one_length_scale(self):
        xy = np.array([[0.0, 0.0], [8.0, 0.0]])
        draws = sample_grf(xy, GrfSpec(8.0), 1, size=10_000)
        assert np.cov(draws.T)[0, 1] == pytest.approx(np.exp(-0.5), abs=0.05)

    def test_far_points_uncorrelated(self):
        xy = np.array([[0.0, 0.0], [200.0, 0.0]])
        draws = sample_grf(xy, GrfSpec(8.0), 2, size=10_000)
        assert abs(np.cov(draws.T)[0, 1]) < 0.05

    def test_marginal_variance_on_grid(self):
        draws = sample_grf(make_grid(6, 6), GrfSpec(8.0), 3, size=4000)
        np.testing.assert_allclose(draws.var(axis=0), 1.0, atol=0.1)

    def test_empirical_range(self):
        xy = np.array([[0.0, 0.0], [8.0, 0.0], [20.0, 5.0]])
        draws = sample_grf(xy, GrfSpec(8.0), 4, size=200)
        assert np.corrcoef(draws[:, 0], draws[:, 1])[0, 1] == pytest.approx(np.exp(-0.5), abs=0.1)

    def test_jitter_escalates_on_grid(self):
        # a 20x20 grid with l = 12 is numerically singular at 1e-10 jitter
        z = sample_grf(make_grid(20, 20), GrfSpec(12.0), 0)
        assert np.isfinite(z).all()

    def test_indefinite_covariance_fails_after_max_jitter(self):
        with pytest.raises(GrfError, match="jitter"):
            _cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]), 1e-10)

    @pytest.mark.parametrize("kw", [{"scale": 0.0}, {"scale": 1.0, "jitter": 1.0}])
    def test_spec_validation(self, kw):
        with pytest.raises(ValueError):
            GrfSpec(**kw)

    def test_covariance_formula(self):
        assert grf_covariance(np.array([12.0]), 12.0)[0] == pytest.approx(np.exp(-0.5))


class TestDataset:
    def test_grid_dataset(self):
        ds = generate_dataset(make_grid(50, 50), seed=0)
        assert ds.n == 2500
        assert ds.x1.min() >= -2 and ds.x1.max() <= 2
        np.testing.assert_allclose(ds.reassemble(), ds.y, atol=1e-12)

    def test_intercept_only(self):
        z = np.zeros(4)
        np.testing.assert_array_equal(assemble_response(z, z, z, z, z), 3.0)

    def test_deterministic(self):
        ps = make_grid(10, 10)
        a = generate_dataset(ps, seed=11)
        b = generate_dataset(ps, seed=11)
        for f in ("x1", "x2", "beta1", "beta2", "noise", "y"):
            np.testing.assert_array_equal(getattr(a, f), getattr(b, f))

    def test_noise_conventions(self):
        assert noise_sd_for("variance") == pytest.approx(np.sqrt(0.5))
        assert noise_sd_for("sd") == 0.5
        with pytest.raises(ValueError):
            noise_sd_for("other")

    def test_regression_oracle_over_seeds(self):
        # widely spread points make the realised beta means close to their zero expectation
        xy = stream(99, "test-layout").uniform(0, 600, size=(300, 2))
        ps = PointSet(xy, tuple(str(i) for i in range(300)))
        coefs = []
        for seed in range(20):
            ds = generate_dataset(ps, seed)
            a = np.column_stack([np.ones(ds.n), ds.x1, ds.x1**2, ds.x2])
            coefs.append(np.linalg.lstsq(a, ds.y, rcond=None)[0])
        mean = np.mean(coefs, axis=0)
        assert mean[2] == pytest.approx(1.0, abs=0.1)
        assert mean[3] == pytest.approx(2.0, abs=0.1)

    def test_save_load_round_trip(self, tmp_path):
        ps = make_grid(5, 4)
        ds = generate_dataset(ps, seed=2)
        save_dataset(ds, tmp_path / "d.csv")
        back = load_dataset(tmp_path / "d.csv", points=ps)
        np.testing.assert_array_equal(back.y, ds.y)
        np.testing.assert_array_equal(back.beta2, ds.beta2)
        with pytest.raises(ValueError):
            load_dataset(tmp_path / "d.csv", points=PointSet(ps.coords, tuple("abcdefghijklmnopqrst")))
