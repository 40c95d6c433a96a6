import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_set
from pointset_diffusion.core import Domain, Mask, PointSet, split_by_mask
from pointset_diffusion.denoiser import NeuralDenoiser, OracleDenoiser
from pointset_diffusion.sampling import (
    MaskViolation,
    SampleTask,
    sample_batch,
    sample_conditional,
    sample_unconditional,
)
from pointset_diffusion.schedule import make_schedule

UNIT = Domain.unit(2)
TIME = Domain.unit(2, ordered_axis=0)


def small_model(T=6, seed=0, dim=2):
    return NeuralDenoiser(dim=dim, n_max=12, T=T, d_model=8, heads=2, depth=1, components=3, d_ff=16, seed=seed)


def as_arrays(batch):
    return [[x.points for x in samples] for samples in batch]


class TestOracle:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(0, 9), T=st.integers(2, 10))
    def test_unconditional_recovers_x0(self, seed, n, T):
        rng = np.random.default_rng(seed)
        X0 = random_set(rng, n, UNIT)
        s = make_schedule(T, expected_count=5.0, domain_volume=UNIT.volume)
        for out in sample_unconditional(OracleDenoiser(X0), s, rng, num=3):
            assert out.same_set(X0)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(0, 12), cut=st.floats(-1.0, 1.0))
    def test_forecast_gives_complement(self, seed, n, cut):
        rng = np.random.default_rng(seed)
        X0 = random_set(rng, n, TIME)
        C = Mask((((-1.0, -1.0), (cut, 1.0)),))
        known, future = split_by_mask(X0, C)
        s = make_schedule(8, expected_count=6.0, domain_volume=TIME.volume)
        for out in sample_conditional(OracleDenoiser(X0), s, known, C, rng, num=2):
            assert out.same_set(future)

    def test_imputation_gives_complement(self, rng):
        X0 = random_set(rng, 15, UNIT)
        C = Mask((((-1.0, -1.0), (0.0, 0.0)), ((0.2, 0.2), (1.0, 1.0))), invert=True)
        known, hidden = split_by_mask(X0, C)
        s = make_schedule(10, expected_count=15.0, domain_volume=UNIT.volume)
        out = sample_conditional(OracleDenoiser(X0), s, known, C, rng)[0]
        assert out.same_set(hidden)


class TestConditional:
    def test_mask_guarantee(self, rng):
        model = small_model()
        s = make_schedule(6, expected_count=8.0, domain_volume=UNIT.volume)
        C = Mask((((-1.0, -1.0), (0.3, 0.5)),))
        known = split_by_mask(random_set(rng, 10, UNIT), C)[0]
        outs = sample_conditional(model, s, known, C, rng, num=10)
        assert len(outs) == 10
        for out in outs:
            assert not np.any(C(out.points))

    def test_whole_domain_mask_gives_empty(self, rng):
        X = random_set(rng, 6, UNIT)
        s = make_schedule(5, expected_count=6.0, domain_volume=UNIT.volume)
        outs = sample_conditional(small_model(T=5), s, X, Mask.everywhere(), rng, num=3)
        assert all(len(o) == 0 for o in outs)

    def test_empty_mask_is_unconditional_shape(self, rng):
        s = make_schedule(4, expected_count=4.0, domain_volume=UNIT.volume)
        outs = sample_conditional(small_model(T=4), s, PointSet.empty(UNIT), Mask.nowhere(), rng, num=2)
        assert len(outs) == 2 and all(o.domain == UNIT for o in outs)

    def test_known_outside_mask(self, rng):
        s = make_schedule(4)
        C = Mask((((-1.0, -1.0), (0.0, 0.0)),))
        X = PointSet(np.array([[0.5, 0.5]]), UNIT)
        with pytest.raises(MaskViolation):
            sample_conditional(small_model(T=4), s, X, C, rng)


class TestUnconditional:
    def test_outputs_in_domain_and_simple(self, rng):
        s = make_schedule(6, expected_count=5.0, domain_volume=UNIT.volume)
        for out in sample_unconditional(small_model(), s, rng, num=8):
            assert np.all(UNIT.contains(out.points))
            out.check_simple()

    def test_num_validated(self, rng):
        with pytest.raises(ValueError):
            sample_unconditional(small_model(), make_schedule(6), rng, num=0)

    def test_deterministic(self):
        s = make_schedule(6, expected_count=5.0, domain_volume=UNIT.volume)
        model = small_model()
        a = sample_unconditional(model, s, np.random.default_rng(3), num=4)
        b = sample_unconditional(model, s, np.random.default_rng(3), num=4)
        assert all(np.array_equal(x.points, y.points) for x, y in zip(a, b))


class TestBatch:
    def test_workers_do_not_change_results(self, rng):
        s = make_schedule(6, expected_count=5.0, domain_volume=UNIT.volume)
        model = small_model()
        C = Mask((((-1.0, -1.0), (0.0, 1.0)),))
        known = split_by_mask(random_set(rng, 8, UNIT), C)[0]
        tasks = [SampleTask(3), SampleTask(2, known, C), SampleTask(1), SampleTask(2, known, C)]
        one = sample_batch(model, s, tasks, workers=1, seed=9)
        many = sample_batch(model, s, tasks, workers=3, seed=9)
        a, b = as_arrays(one), as_arrays(many)
        assert [len(x) for x in a] == [3, 2, 1, 2]
        for xs, ys in zip(a, b):
            assert all(np.array_equal(x, y) for x, y in zip(xs, ys))

    def test_int_tasks_and_seed(self):
        s = make_schedule(6, expected_count=5.0, domain_volume=UNIT.volume)
        model = small_model()
        a = as_arrays(sample_batch(model, s, [2, 2], seed=1))
        b = as_arrays(sample_batch(model, s, [2, 2], seed=2))
        assert [len(x) for x in a] == [2, 2]
        same = all(np.array_equal(x, y) for xs, ys in zip(a, b) for x, y in zip(xs, ys))
        assert not same

    def test_workers_validated(self):
        with pytest.raises(ValueError):
            sample_batch(small_model(), make_schedule(6), [1], workers=0)
