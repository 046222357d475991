import numpy as np
import pytest

from noisefactor.schedule import Schedule


class TestLinearBeta:
    def test_default_endpoints(self):
        s = Schedule.linear_beta()
        assert s.T == 1000
        assert s.alpha_bar(0) == 1.0
        assert s.alpha_bar(1) == pytest.approx(1.0 - 1e-4, abs=1e-12)
        assert 0.0 < s.alpha_bar(1000) < 1e-4  # essentially fully noised

    def test_strictly_decreasing(self):
        s = Schedule.linear_beta(T=200)
        assert np.all(np.diff(s.alphas) < 0)

    def test_values_in_unit_interval(self):
        s = Schedule.linear_beta(T=50)
        assert np.all(s.alphas > 0)
        assert np.all(s.alphas <= 1)


class TestValidation:
    def test_non_monotone_names_index(self):
        with pytest.raises(ValueError, match="index 3"):
            Schedule([1.0, 0.9, 0.8, 0.85, 0.5])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match=r"\(0, 1\]"):
            Schedule([1.0, 0.5, -0.1])

    def test_first_entry_must_be_one(self):
        with pytest.raises(ValueError, match="must be 1.0"):
            Schedule([0.99, 0.5, 0.1])

    def test_from_alphas_prepends_clean_step(self):
        s = Schedule.from_alphas([0.9, 0.5, 0.1])
        assert s.T == 3
        assert s.alpha_bar(0) == 1.0
        assert s.alpha_bar(3) == pytest.approx(0.1)

    def test_alpha_bar_bounds_checked(self):
        s = Schedule.from_alphas([0.9, 0.5])
        with pytest.raises(ValueError, match="outside"):
            s.alpha_bar(3)


class TestSigmaZ:
    def test_zero_at_final_update(self):
        s = Schedule.linear_beta(T=100)
        assert s.sigma_z(1) == 0.0

    def test_nonnegative_everywhere(self):
        s = Schedule.linear_beta(T=100)
        assert all(s.sigma_z(t) >= 0 for t in range(1, 101))

    def test_matches_posterior_variance_formula(self):
        s = Schedule.linear_beta(T=10)
        t = 7
        abar_t, abar_prev = s.alpha_bar(t), s.alpha_bar(t - 1)
        beta_t = 1 - abar_t / abar_prev
        expected = np.sqrt((1 - abar_prev) / (1 - abar_t) * beta_t)
        assert s.sigma_z(t) == pytest.approx(expected, abs=1e-15)


class TestSubsample:
    def test_endpoints_kept(self):
        s = Schedule.linear_beta(T=1000)
        sub = s.subsample(50)
        assert sub.T == 50
        assert sub.alpha_bar(0) == 1.0
        assert sub.alpha_bar(50) == s.alpha_bar(1000)
        assert sub.timesteps[-1] == 1000

    def test_uniform_stride(self):
        s = Schedule.linear_beta(T=1000)
        sub = s.subsample(50)
        assert np.array_equal(np.diff(sub.timesteps), np.full(50, 20))

    def test_full_depth_is_same_schedule(self):
        s = Schedule.linear_beta(T=100)
        assert s.subsample(100) is s

    def test_values_come_from_parent(self):
        s = Schedule.linear_beta(T=100)
        sub = s.subsample(10)
        for t in range(sub.T + 1):
            assert sub.alpha_bar(t) == s.alpha_bar(int(sub.timesteps[t]))

    def test_invalid_steps_rejected(self):
        s = Schedule.linear_beta(T=100)
        with pytest.raises(ValueError, match="steps"):
            s.subsample(0)
        with pytest.raises(ValueError, match="steps"):
            s.subsample(101)


class TestDigest:
    def test_stable_and_distinct(self):
        a = Schedule.linear_beta(T=100)
        b = Schedule.linear_beta(T=100)
        c = Schedule.linear_beta(T=101)
        assert a.digest() == b.digest()
        assert a.digest() != c.digest()
        assert a.subsample(10).digest() != a.digest()
