import numpy as np
import pytest
from scipy import stats

from conftest import random_set
from pointset_diffusion.core import Domain, PointSet
from pointset_diffusion.schedule import (
    ALPHA_FLOOR,
    DiffusionSchedule,
    forward_marginal,
    forward_step,
    initial_state,
    make_schedule,
    sample_noise,
)

UNIT = Domain.unit(2)


class TestMakeSchedule:
    def test_linear_t4_hand_values(self):
        s = make_schedule(4, "linear")
        np.testing.assert_allclose(s.alpha_bar, [1.0, 0.75, 0.5, 0.25, 1e-4], rtol=0, atol=1e-15)
        np.testing.assert_allclose(s.beta_bar, [0.0, 0.25, 0.5, 0.75, 1.0], rtol=0, atol=1e-15)

    def test_cosine_t2(self):
        s = make_schedule(2, "cosine")
        assert s.alpha_bar[1] == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("shape", ["linear", "cosine"])
    @pytest.mark.parametrize("T", [2, 3, 8, 50, 100])
    def test_invariants(self, shape, T):
        s = make_schedule(T, shape, expected_count=12.0, domain_volume=4.0)
        assert s.T == T
        assert np.all(np.diff(s.alpha_bar) < 0)
        assert s.alpha_bar[-1] <= 1e-3 and s.beta_bar[-1] == 1.0
        # alpha_bar + beta_bar = 1 up to the floor at t = T
        np.testing.assert_allclose(s.alpha_bar[:-1] + s.beta_bar[:-1], 1.0, rtol=0, atol=1e-15)
        assert s.alpha_bar[-1] + s.beta_bar[-1] == 1.0 + ALPHA_FLOOR
        assert s.noise_rate * 4.0 == pytest.approx(12.0)
        for t in range(1, T + 1):
            assert 0 < s.alpha(t) < 1
            assert s.beta(t) >= 0

    @pytest.mark.parametrize("kw", [dict(T=1), dict(T=5, expected_count=0.0), dict(T=5, shape="exp")])
    def test_errors(self, kw):
        with pytest.raises(ValueError):
            make_schedule(**kw)

    def test_dict_roundtrip(self):
        s = make_schedule(10, "cosine", 3.0, 2.0)
        r = DiffusionSchedule.from_dict(s.to_dict())
        assert np.array_equal(r.alpha_bar, s.alpha_bar) and r.noise_rate == s.noise_rate

    def test_rejects_increasing(self):
        with pytest.raises(ValueError):
            DiffusionSchedule(np.array([1.0, 0.5, 0.6, 1e-4]), np.array([0.0, 0.5, 0.4, 1.0]), 1.0)


class TestSampleNoise:
    def test_zero_rate(self, rng):
        s = DiffusionSchedule(make_schedule(3).alpha_bar, make_schedule(3).beta_bar, 0.0)
        assert all(len(sample_noise(s, UNIT, rng)) == 0 for _ in range(20))

    def test_mean_and_bounds(self):
        rng = np.random.default_rng(5)
        s = make_schedule(5, expected_count=20.0, domain_volume=UNIT.volume)
        n = 10_000
        draws = [sample_noise(s, UNIT, rng) for _ in range(n)]
        c = np.array([len(x) for x in draws])
        assert abs(c.mean() - 20.0) < 3 * np.sqrt(20.0 / n)
        assert all(np.all(np.abs(x.points) <= 1) for x in draws)


class TestForwardStep:
    def test_identity_step(self, rng):
        s = DiffusionSchedule(np.array([1.0, 1.0 - 1e-13, 1e-4]), np.array([0.0, 1e-13, 1.0]), 5.0)
        X0 = random_set(rng, 6, UNIT)
        # alpha_1 and beta_1 are 1e-13 away from 1 and 0: nothing changes except t
        out = forward_step(initial_state(X0), s, rng)
        assert out.t == 1 and out.retained.same_set(X0) and len(out.noise) == 0

    def test_empty_retained(self, rng):
        s = make_schedule(4, expected_count=3.0, domain_volume=UNIT.volume)
        st = initial_state(PointSet.empty(UNIT))
        for _ in range(4):
            st = forward_step(st, s, rng)
            assert len(st.retained) == 0

    def test_out_of_range(self, rng):
        s = make_schedule(2)
        st = forward_marginal(random_set(rng, 3, UNIT), 2, s, rng)
        with pytest.raises(ValueError):
            forward_step(st, s, rng)

    def test_labels_track_x0_rows(self, rng):
        s = make_schedule(6, expected_count=4.0, domain_volume=UNIT.volume)
        X0 = random_set(rng, 10, UNIT)
        st = initial_state(X0)
        for _ in range(6):
            st = forward_step(st, s, rng)
            np.testing.assert_array_equal(X0.points[st.source_idx], st.retained.points)

    def test_chain_retention_matches_alpha_bar(self):
        rng = np.random.default_rng(6)
        T, chains = 8, 10_000
        s = make_schedule(T, expected_count=1.0, domain_volume=UNIT.volume)
        X0 = random_set(rng, 3, UNIT)
        hits = np.zeros((T + 1, 3))
        for _ in range(chains):
            st = initial_state(X0)
            for t in range(1, T + 1):
                st = forward_step(st, s, rng)
                hits[t, st.source_idx] += 1
        for t in range(1, T + 1):
            p = s.alpha_bar[t]
            se = np.sqrt(p * (1 - p) / chains)
            assert np.all(np.abs(hits[t] / chains - p) <= 3 * se + 1e-12), t


class TestForwardMarginal:
    def test_t0_is_data(self, rng):
        s = make_schedule(5, expected_count=3.0)
        X0 = random_set(rng, 4, UNIT)
        st = forward_marginal(X0, 0, s, rng)
        assert st.retained.same_set(X0) and len(st.noise) == 0

    def test_out_of_range(self, rng):
        with pytest.raises(ValueError):
            forward_marginal(random_set(rng, 2, UNIT), 6, make_schedule(5), rng)

    @pytest.mark.parametrize("t", [1, 4, 7])
    def test_binomial_retained_count(self, t):
        rng = np.random.default_rng(7 + t)
        s = make_schedule(8, expected_count=5.0, domain_volume=UNIT.volume)
        X0 = random_set(rng, 5, UNIT)
        n = 10_000
        c = np.bincount([len(forward_marginal(X0, t, s, rng).retained) for _ in range(n)], minlength=6)
        exp = n * stats.binom.pmf(np.arange(6), 5, s.alpha_bar[t])
        keep = exp >= 5
        obs = np.r_[c[keep], c[~keep].sum()] if (~keep).any() else c
        ex = np.r_[exp[keep], exp[~keep].sum()] if (~keep).any() else exp
        assert stats.chisquare(obs, ex * obs.sum() / ex.sum()).pvalue > 1e-3

    def test_noise_independent_of_x0(self):
        rng = np.random.default_rng(8)
        s = make_schedule(8, expected_count=10.0, domain_volume=UNIT.volume)
        A = random_set(rng, 1, UNIT)
        B = random_set(rng, 40, UNIT)
        na = [len(forward_marginal(A, 3, s, rng).noise) for _ in range(10_000)]
        nb = [len(forward_marginal(B, 3, s, rng).noise) for _ in range(10_000)]
        # counts are discrete; a chi-square homogeneity test on the pooled support
        top = max(max(na), max(nb)) + 1
        table = np.vstack([np.bincount(na, minlength=top), np.bincount(nb, minlength=top)])
        table = table[:, table.sum(axis=0) >= 10]
        assert stats.chi2_contingency(table).pvalue > 1e-3

    def test_constant_expected_count(self):
        rng = np.random.default_rng(9)
        T, n = 8, 10_000
        dom = Domain((0.0, 0.0), (2.0, 1.0)).normalized()
        X0 = random_set(rng, 6, dom)
        s = make_schedule(T, expected_count=6.0, domain_volume=dom.volume)
        for t in range(T + 1):
            c = np.array([len(forward_marginal(X0, t, s, rng)) for _ in range(n)])
            # with a fixed X0, |X_t| = Bin(6, abar) + Poisson(6 * bbar)
            ab = s.alpha_bar[t]
            var = 6 * ab * (1 - ab) + 6 * s.beta_bar[t]
            mean = 6 * ab + 6 * s.beta_bar[t]
            assert abs(c.mean() - mean) <= 3 * np.sqrt(var / n) + 1e-12
            if t < T:
                assert mean == pytest.approx(6.0, abs=1e-12)
