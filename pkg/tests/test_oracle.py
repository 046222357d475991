import numpy as np
import pytest

from noisefactor.oracle import (
    Mixture,
    OraclePredictor,
    mixtures_from_config,
    posterior_x0,
    predict_noise,
    sample_data,
)
from noisefactor.sampler import Condition, SamplerConfig, sample_factorized
from noisefactor.schedule import Schedule
from noisefactor.decomp import make_scaling
from noisefactor.tensor import save_image

from reference import montecarlo_posterior, quadrature_posterior_1d


def scalar_mixture(weights, means, variances):
    mu = np.asarray(means, dtype=np.float64).reshape(-1, 1, 1, 1)
    return Mixture(weights, mu, variances)


class TestPosteriorX0:
    def test_point_mass_returns_mean(self, rng):
        mu = rng.standard_normal((1, 3, 3))
        m = Mixture.single(mu, 1e-8)
        for abar in [0.9, 0.5, 0.05]:
            x_t = rng.standard_normal((1, 3, 3)) * 3
            assert np.max(np.abs(posterior_x0(m, x_t, abar) - mu)) <= 1e-6

    def test_clean_limit_returns_x_t(self, rng):
        m = Mixture.single(np.zeros((1, 2, 2)), 1.0)
        x_t = rng.standard_normal((1, 2, 2))
        assert np.max(np.abs(posterior_x0(m, x_t, 1.0) - x_t)) <= 1e-12

    def test_single_gaussian_closed_form(self, rng):
        mu = rng.standard_normal((1, 2, 2))
        s2 = 0.7
        m = Mixture.single(mu, s2)
        abar = 0.42
        x_t = rng.standard_normal((1, 2, 2))
        denom = abar * s2 + (1 - abar)
        expected = ((1 - abar) * mu + np.sqrt(abar) * s2 * x_t) / denom
        assert np.max(np.abs(posterior_x0(m, x_t, abar) - expected)) <= 1e-12

    def test_matches_quadrature_on_scalar(self):
        # frozen spot values from the quadrature reference, plus a live comparison
        weights, means, variances = [0.3, 0.7], [-1.2, 0.8], [0.5, 0.25]
        m = scalar_mixture(weights, means, variances)
        cases = [(0.35, 0.4), (0.8, -1.0), (0.05, 2.5), (0.99, 0.1)]
        for abar, xt in cases:
            ref = quadrature_posterior_1d(weights, means, variances, xt, abar)
            got = float(posterior_x0(m, np.full((1, 1, 1), xt), abar)[0, 0, 0])
            assert got == pytest.approx(ref, abs=1e-4)

    def test_matches_importance_sampling_on_2x2(self, rng):
        weights = [0.4, 0.6]
        means = np.stack([np.full((1, 2, 2), -0.9), np.full((1, 2, 2), 0.7)])
        means[1, 0, 0, 1] = 1.4  # break symmetry
        variances = [0.6, 0.3]
        m = Mixture(weights, means, variances)
        abar = 0.45
        x_t = rng.standard_normal((1, 2, 2))
        est, se = montecarlo_posterior(weights, means, variances, x_t, abar, n_draws=10_000)
        got = posterior_x0(m, x_t, abar)
        assert np.all(np.abs(got - est) <= 3 * se + 1e-9)

    def test_responsibilities_stable_at_high_noise(self):
        # widely separated means at tiny abar must not underflow to NaN
        m = scalar_mixture([0.5, 0.5], [-50.0, 50.0], [1.0, 1.0])
        out = posterior_x0(m, np.full((1, 1, 1), 49.0), 1e-4)
        assert np.isfinite(out).all()

    def test_invalid_abar_rejected(self):
        m = Mixture.single(np.zeros((1, 2, 2)))
        with pytest.raises(ValueError, match="alpha_bar"):
            posterior_x0(m, np.zeros((1, 2, 2)), 0.0)


class TestPredictNoise:
    def test_tweedie_consistency(self, rng):
        m = scalar_mixture([0.2, 0.8], [-1.0, 1.0], [0.4, 0.9])
        schedule = Schedule.linear_beta(T=100)
        x_t = rng.standard_normal((1, 1, 1))
        for t in [1, 30, 100]:
            abar = schedule.alpha_bar(t)
            eps = predict_noise(m, x_t, t, schedule)
            lhs = x_t - np.sqrt(1 - abar) * eps
            rhs = np.sqrt(abar) * posterior_x0(m, x_t, abar)
            assert np.max(np.abs(lhs - rhs)) <= 1e-7

    def test_noiseless_point_gives_zero_estimate(self):
        mu = np.full((1, 2, 2), 0.6)
        m = Mixture.single(mu, 1e-10)
        schedule = Schedule.linear_beta(T=100)
        t = 40
        x_t = np.sqrt(schedule.alpha_bar(t)) * mu
        assert np.max(np.abs(predict_noise(m, x_t, t, schedule))) <= 1e-4

    def test_alpha_bar_one_guard_returns_zeros(self):
        m = Mixture.single(np.zeros((1, 2, 2)))
        s = Schedule.linear_beta(T=10)
        assert np.array_equal(predict_noise(m, np.ones((1, 2, 2)), 0, s), np.zeros((1, 2, 2)))

    def test_affine_in_x_t_with_condition_independent_slope(self, rng):
        # single Gaussians with equal variance share the same slope c_t
        schedule = Schedule.linear_beta(T=200)
        m_a = Mixture.single(np.full((1, 2, 2), -0.8))
        m_b = Mixture.single(np.full((1, 2, 2), 1.1))
        x, y = rng.standard_normal((2, 1, 2, 2))
        for t in [5, 100, 200]:
            abar = schedule.alpha_bar(t)
            c_t = np.sqrt(1 - abar)  # slope of the exact estimate at unit variance
            for m in (m_a, m_b):
                dx = predict_noise(m, x, t, schedule) - predict_noise(m, y, t, schedule)
                assert np.max(np.abs(dx - c_t * (x - y))) <= 1e-10

    def test_mmse_beats_plugin_estimator(self, rng):
        # posterior-mean estimate has the lowest mean squared error
        weights, variances = [0.5, 0.5], [0.5, 0.5]
        means = np.stack([np.full((1, 2, 2), -1.0), np.full((1, 2, 2), 1.0)])
        m = Mixture(weights, means, variances)
        schedule = Schedule.linear_beta(T=100)
        t = 60
        abar = schedule.alpha_bar(t)
        n = 10_000
        draws = sample_data(m, n, seed=123)
        rng2 = np.random.default_rng(321)
        mse_star = 0.0
        mse_plugin = 0.0
        mean_bar = m.mean()
        for x0 in draws:
            eps = rng2.standard_normal(x0.shape)
            x_t = np.sqrt(abar) * x0 + np.sqrt(1 - abar) * eps
            est = predict_noise(m, x_t, t, schedule)
            plugin = (x_t - np.sqrt(abar) * mean_bar) / np.sqrt(1 - abar)
            mse_star += np.mean((est - eps) ** 2)
            mse_plugin += np.mean((plugin - eps) ** 2)
        assert mse_star < mse_plugin


class TestSampleData:
    def test_point_mass_draws_cluster_at_mean(self):
        mu = np.full((1, 2, 2), 0.3)
        m = Mixture.single(mu, 1e-12)
        for draw in sample_data(m, 16, seed=5):
            assert np.max(np.abs(draw - mu)) <= 1e-5

    def test_zero_weight_component_never_drawn(self):
        means = np.stack([np.zeros((1, 1, 1)), np.full((1, 1, 1), 100.0)])
        m = Mixture([1.0, 0.0], means, [1e-12, 1e-12])
        for draw in sample_data(m, 64, seed=9):
            assert abs(float(draw[0, 0, 0])) < 1.0

    def test_empirical_mean_obeys_clt_bound(self):
        weights, variances = [0.25, 0.75], [0.8, 0.4]
        means = np.stack([np.full((1, 1, 1), -1.0), np.full((1, 1, 1), 1.0)])
        m = Mixture(weights, means, variances)
        n = 10_000
        draws = np.stack(sample_data(m, n, seed=77))
        # total variance = E[var] + var of means
        mean_true = float(m.mean()[0, 0, 0])
        second = sum(w * (v + float(mu) ** 2) for w, v, mu in zip(weights, variances, [-1.0, 1.0]))
        sd = np.sqrt(second - mean_true**2)
        assert abs(draws.mean() - mean_true) <= 4 * sd / np.sqrt(n)

    def test_n_validated(self):
        with pytest.raises(ValueError, match=">= 1"):
            sample_data(Mixture.single(np.zeros((1, 1, 1))), 0)


class TestOraclePredictor:
    def test_predicts_per_condition(self, rng):
        shape = (1, 2, 2)
        pred = OraclePredictor(
            {
                "a": Mixture.single(np.zeros(shape)),
                "b": Mixture.single(np.ones(shape)),
            }
        )
        schedule = Schedule.linear_beta(T=10)
        x = rng.standard_normal(shape)
        eps = pred.predict(x, 5, schedule, [Condition("a"), Condition("b"), Condition("a")])
        assert len(eps) == 3
        assert np.array_equal(eps[0], eps[2])
        assert not np.array_equal(eps[0], eps[1])

    def test_unknown_mixture_name(self, rng):
        pred = OraclePredictor({"a": Mixture.single(np.zeros((1, 2, 2)))})
        schedule = Schedule.linear_beta(T=10)
        with pytest.raises(ValueError, match="unknown mixture"):
            pred.predict(np.zeros((1, 2, 2)), 3, schedule, [Condition("nope")])

    def test_ddim_sampling_converges_to_gaussian_mean(self):
        # end-to-end: the sampler driven by the exact estimate lands on the data mean
        shape = (1, 4, 4)
        rng = np.random.default_rng(0)
        mu = rng.standard_normal(shape) * 0.5
        pred = OraclePredictor({"m": Mixture.single(mu, 1.0)})
        schedule = Schedule.linear_beta(T=1000)
        d = make_scaling([1.0])
        n = 256
        samples = np.stack(
            [
                sample_factorized(
                    pred, d, [Condition("m")],
                    SamplerConfig(steps=50, seed=seed, resolution=(4, 4), channels=1),
                    schedule,
                )
                for seed in range(n)
            ]
        )
        se = samples.std(axis=0, ddof=1) / np.sqrt(n)
        assert np.all(np.abs(samples.mean(axis=0) - mu) <= 4 * se)


class TestMixtureConfig:
    def test_inline_and_constant_means(self):
        cfg = {"conditions": {"A": [{"w": 1.0, "mean": 0.25, "var": 2.0}]}}
        mixtures = mixtures_from_config(cfg, shape=(1, 4, 4))
        assert np.all(mixtures["A"].means == 0.25)
        assert mixtures["A"].variances[0] == 2.0

    def test_png_mean(self, tmp_path):
        img = np.full((1, 4, 4), 0.5)
        save_image(img, tmp_path / "mean.png")
        cfg = {"A": [{"w": 1.0, "mean": "mean.png", "var": 1.0}]}
        mixtures = mixtures_from_config(cfg, shape=(1, 4, 4), base_dir=str(tmp_path))
        assert np.max(np.abs(mixtures["A"].means[0] - img)) <= 1 / 127.5

    def test_weights_normalized(self):
        cfg = {"A": [{"w": 2.0, "mean": 0.0}, {"w": 2.0, "mean": 1.0}]}
        mixtures = mixtures_from_config(cfg, shape=(1, 2, 2))
        assert np.allclose(mixtures["A"].weights, [0.5, 0.5])

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError, match="non-empty list"):
            mixtures_from_config({"A": []}, shape=(1, 2, 2))
