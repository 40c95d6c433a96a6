import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import random_set
from pointset_diffusion.core import (
    Domain,
    DomainError,
    LabeledState,
    Mask,
    PointSet,
    SimplicityError,
    count,
    split_by_mask,
    superpose,
    thin,
    uniform_poisson,
)

D1 = Domain((0.0,), (1.0,))


def ps(rows, domain=D1):
    return PointSet(np.array(rows, dtype=float).reshape(-1, domain.dim), domain)


class TestDomain:
    def test_rejects_degenerate_box(self):
        with pytest.raises(DomainError):
            Domain((0.0, 1.0), (1.0, 1.0))

    def test_normalize_roundtrip(self, rng):
        dom = Domain((-3.0, 10.0), (5.0, 12.5), ordered_axis=0)
        X = random_set(rng, 50, dom)
        Z = dom.normalize(X)
        assert Z.domain == dom.normalized()
        assert np.all(np.abs(Z.points) <= 1.0)
        np.testing.assert_allclose(dom.denormalize(Z).points, X.points, rtol=0, atol=1e-12)

    def test_dict_roundtrip(self):
        dom = Domain((0.0, -1.0, 2.0), (1.0, 1.0, 3.0), ordered_axis=2)
        assert Domain.from_dict(dom.to_dict()) == dom

    def test_volume(self):
        assert Domain((0.0, 0.0), (2.0, 3.0)).volume == 6.0


class TestPointSet:
    def test_outside_rejected(self):
        with pytest.raises(DomainError):
            ps([[1.5]])

    def test_duplicate_rejected_on_ingest(self):
        with pytest.raises(SimplicityError):
            PointSet.ingest([[0.3], [0.3]], D1)

    def test_points_read_only(self):
        X = ps([[0.1]])
        with pytest.raises(ValueError):
            X.points[0, 0] = 0.2

    def test_same_set_ignores_order(self):
        assert ps([[0.1], [0.5]]).same_set(ps([[0.5], [0.1]]))


class TestCount:
    def test_empty(self):
        assert count(PointSet.empty(D1), Mask.everywhere()) == 0

    def test_membership(self):
        assert count(ps([[0.1], [0.5]]), Mask((((0.0,), (0.3,)),))) == 1

    def test_poisson_mean(self, unit2):
        rng = np.random.default_rng(1)
        lam, n = 7.0, 10_000
        counts = np.array([count(uniform_poisson(lam / unit2.volume, unit2, rng), Mask.everywhere())
                           for _ in range(n)])
        assert abs(counts.mean() - lam) < 3 * np.sqrt(lam / n)


class TestSuperpose:
    def test_identity(self):
        X = ps([[0.1], [0.7]])
        assert superpose(X, PointSet.empty(D1)).same_set(X)

    def test_union(self):
        assert superpose(ps([[0.1]]), ps([[0.2]])).same_set(ps([[0.1], [0.2]]))

    def test_domain_mismatch(self):
        with pytest.raises(DomainError):
            superpose(ps([[0.1]]), PointSet.empty(Domain((0.0,), (2.0,))))

    def test_additive_counts_exact(self):
        X, Y = ps([[0.1], [0.4]]), ps([[0.35], [0.9]])
        A = Mask((((0.0,), (0.5,)),))
        assert count(superpose(X, Y), A) == count(X, A) + count(Y, A)

    def test_poisson_rates_add(self):
        rng = np.random.default_rng(2)
        l1, l2, n = 3.0, 5.0, 10_000
        c = np.array([len(superpose(uniform_poisson(l1, D1, rng), uniform_poisson(l2, D1, rng)))
                      for _ in range(n)])
        assert abs(c.mean() - (l1 + l2)) < 3 * np.sqrt((l1 + l2) / n)


class TestThin:
    def test_keep_all(self, rng):
        X = random_set(rng, 10, D1)
        assert thin(X, 1.0, rng).same_set(X)

    def test_keep_none(self, rng):
        assert len(thin(random_set(rng, 10, D1), 0.0, rng)) == 0

    @pytest.mark.parametrize("p", [-0.1, 1.1])
    def test_bad_prob(self, rng, p):
        with pytest.raises(ValueError):
            thin(random_set(rng, 3, D1), p, rng)

    def test_poisson_mean(self):
        rng = np.random.default_rng(3)
        lam, p, n = 12.0, 0.3, 10_000
        c = np.array([len(thin(uniform_poisson(lam, D1, rng), p, rng)) for _ in range(n)])
        assert abs(c.mean() - p * lam) < 3 * np.sqrt(p * lam / n)

    def test_binomial_chi_square(self):
        rng = np.random.default_rng(4)
        X = random_set(rng, 6, D1)
        p, n = 0.4, 10_000
        c = np.bincount([len(thin(X, p, rng)) for _ in range(n)], minlength=7)
        expected = n * stats.binom.pmf(np.arange(7), 6, p)
        assert stats.chisquare(c, expected).pvalue > 1e-3

    def test_result_is_subset(self, rng):
        X = random_set(rng, 20, D1)
        Y = thin(X, 0.5, rng)
        assert set(map(tuple, Y.points)) <= set(map(tuple, X.points))


class TestSplitByMask:
    def test_whole_domain(self, rng):
        X = random_set(rng, 5, D1)
        a, b = split_by_mask(X, Mask.everywhere())
        assert a.same_set(X) and len(b) == 0

    def test_empty_mask(self, rng):
        X = random_set(rng, 5, D1)
        a, b = split_by_mask(X, Mask.nowhere())
        assert len(a) == 0 and b.same_set(X)

    def test_direct(self):
        a, b = split_by_mask(ps([[0.1], [0.9]]), Mask((((0.0,), (0.5,)),)))
        assert a.same_set(ps([[0.1]])) and b.same_set(ps([[0.9]]))

    @settings(max_examples=200, deadline=None)
    @given(n=st.integers(0, 12), nbox=st.integers(0, 3), seed=st.integers(0, 2**32 - 1), invert=st.booleans())
    def test_partition(self, n, nbox, seed, invert):
        r = np.random.default_rng(seed)
        dom = Domain.unit(2)
        X = random_set(r, n, dom)
        boxes = []
        for _ in range(nbox):
            a, b = r.uniform(-1, 1, (2, 2))
            boxes.append((np.minimum(a, b), np.maximum(a, b)))
        C = Mask(tuple(boxes), invert=invert)
        inside, outside = split_by_mask(X, C)
        assert len(inside) + len(outside) == n
        assert superpose(inside, outside).same_set(X)
        assert not set(map(tuple, inside.points)) & set(map(tuple, outside.points))
        if n:
            assert np.all(C(inside.points)) and not np.any(C(outside.points))

    def test_predicate_mask(self, unit2, rng):
        X = random_set(rng, 30, unit2)
        C = Mask(predicate=lambda p: p[:, 0] < 0)
        a, b = split_by_mask(X, C)
        assert np.all(a.points[:, 0] < 0) and np.all(b.points[:, 0] >= 0)


class TestMask:
    def test_json_roundtrip(self):
        m = Mask((((0.0, 0.0), (0.5, 1.0)), ((0.6, 0.1), (0.7, 0.2))))
        assert Mask.from_json(m.to_json()) == m

    def test_invalid_box(self):
        with pytest.raises(DomainError):
            Mask((((1.0,), (0.0,)),))

    def test_transformed_agrees(self, rng):
        dom = Domain((0.0, 10.0), (4.0, 20.0))
        m = Mask((((1.0, 12.0), (3.0, 15.0)),))
        X = random_set(rng, 200, dom)
        np.testing.assert_array_equal(m(X.points), m.transformed(dom)(dom.normalize(X).points))


class TestLabeledState:
    def test_points_union(self, rng):
        dom = Domain.unit(2)
        a, b = random_set(rng, 3, dom), random_set(rng, 4, dom)
        s = LabeledState(a, b, t=2)
        assert len(s) == 7 and s.points.same_set(superpose(a, b))
        np.testing.assert_array_equal(s.source_idx, np.arange(3))

    def test_bad_index(self, rng):
        dom = Domain.unit(2)
        with pytest.raises(ValueError):
            LabeledState(random_set(rng, 3, dom), PointSet.empty(dom), t=1, source_idx=[0, 0, 1])
