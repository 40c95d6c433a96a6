import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_set
from pointset_diffusion.core import Domain, LabeledState, PointSet
from pointset_diffusion.posterior import (
    noise_keep_probability,
    noise_posterior_keep_prob,
    posterior_sample,
    readd_probability,
    thin_posterior_prob,
)
from pointset_diffusion.schedule import DiffusionSchedule, forward_marginal, make_schedule

UNIT = Domain.unit(2)


class TestProbabilities:
    def test_readd_hand_value(self):
        assert readd_probability(0.8, 0.6) == pytest.approx(0.5, abs=1e-15)

    def test_readd_equal(self):
        assert readd_probability(0.4, 0.4) == 0.0

    def test_readd_from_data(self):
        assert readd_probability(1.0, 0.5) == 1.0

    def test_noise_keep_hand_value(self):
        assert noise_keep_probability(0.4, 0.5) == pytest.approx(0.8, abs=1e-15)

    def test_noise_keep_edges(self):
        assert noise_keep_probability(0.5, 0.5) == 1.0
        assert noise_keep_probability(0.0, 0.5) == 0.0

    def test_errors(self):
        with pytest.raises(ValueError):
            noise_keep_probability(0.0, 0.0)
        with pytest.raises(ValueError):
            readd_probability(0.5, 1.0)

    def test_schedule_lookup(self):
        s = make_schedule(4)
        assert thin_posterior_prob(1, s) == pytest.approx((0.75 - 0.5) / 0.5)
        assert noise_posterior_keep_prob(1, s) == pytest.approx(0.25 / 0.5)
        assert thin_posterior_prob(0, s) == 1.0 and noise_posterior_keep_prob(0, s) == 0.0
        with pytest.raises(ValueError):
            thin_posterior_prob(4, s)

    @pytest.mark.parametrize("shape", ["linear", "cosine"])
    def test_in_unit_interval(self, shape):
        s = make_schedule(30, shape)
        for t in range(30):
            assert 0.0 <= thin_posterior_prob(t, s) <= 1.0
            assert 0.0 <= noise_posterior_keep_prob(t, s) <= 1.0


class TestPosteriorSample:
    def test_nothing_missing(self, rng):
        s = make_schedule(6, expected_count=3.0)
        X0 = random_set(rng, 5, UNIT)
        st = LabeledState(X0, PointSet.empty(UNIT), t=3)
        out = posterior_sample(X0, st, s, rng)
        assert out.t == 2 and out.retained.same_set(X0) and len(out.noise) == 0

    def test_last_step_is_exact(self, rng):
        s = make_schedule(6, expected_count=10.0, domain_volume=UNIT.volume)
        X0 = random_set(rng, 8, UNIT)
        for _ in range(50):
            out = posterior_sample(X0, forward_marginal(X0, 1, s, rng), s, rng)
            assert out.t == 0 and out.retained.same_set(X0) and len(out.noise) == 0

    def test_inconsistent_inputs(self, rng):
        s = make_schedule(6)
        X0 = random_set(rng, 3, UNIT)
        other = random_set(rng, 2, UNIT)
        with pytest.raises(ValueError):
            posterior_sample(X0, LabeledState(other, PointSet.empty(UNIT), t=2), s, rng)
        with pytest.raises(ValueError):
            posterior_sample(X0, LabeledState(X0.subset([0]), PointSet.empty(UNIT), t=0), s, rng)

    def test_marginal_consistency(self):
        rng = np.random.default_rng(21)
        T, t, n = 8, 3, 10_000
        s = make_schedule(T, expected_count=4.0, domain_volume=UNIT.volume)
        X0 = random_set(rng, 4, UNIT)
        hits = np.zeros(4)
        noise = np.zeros(n)
        for i in range(n):
            out = posterior_sample(X0, forward_marginal(X0, t + 1, s, rng), s, rng)
            hits[out.source_idx] += 1
            noise[i] = len(out.noise)
        p = s.alpha_bar[t]
        assert np.all(np.abs(hits / n - p) <= 3 * np.sqrt(p * (1 - p) / n))
        lam = s.beta_bar[t] * s.noise_rate * UNIT.volume
        assert abs(noise.mean() - lam) <= 3 * np.sqrt(lam / n)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(0, 8), T=st.integers(2, 12))
    def test_reverse_chain_monotone(self, seed, n, T):
        rng = np.random.default_rng(seed)
        s = make_schedule(T, expected_count=3.0, domain_volume=UNIT.volume)
        X0 = random_set(rng, n, UNIT)
        st_ = forward_marginal(X0, T, s, rng)
        while st_.t > 0:
            nxt = posterior_sample(X0, st_, s, rng)
            assert set(st_.source_idx) <= set(nxt.source_idx)
            assert set(map(tuple, nxt.noise.points)) <= set(map(tuple, st_.noise.points))
            st_ = nxt
        assert st_.retained.same_set(X0) and len(st_.noise) == 0

    def test_exact_recovery_with_exact_endpoints(self, rng):
        # schedule with exact abar_T = 0 is not allowed; the floor makes thinned
        # points return with probability 1 at the final step anyway
        s = DiffusionSchedule(np.array([1.0, 0.5, 1e-4]), np.array([0.0, 0.5, 1.0]), 3.0)
        X0 = random_set(rng, 10, UNIT)
        for _ in range(100):
            st_ = forward_marginal(X0, 2, s, rng)
            st_ = posterior_sample(X0, posterior_sample(X0, st_, s, rng), s, rng)
            assert st_.retained.same_set(X0) and len(st_.noise) == 0
