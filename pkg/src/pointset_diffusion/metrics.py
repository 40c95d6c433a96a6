"""Model-agnostic distances between point sets and between distributions of
point sets: cardinality Wasserstein (SL), count MAE, counting distance (CD),
exact optimal-transport Wasserstein (WD) and MMD over a set distance.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import PointSet


@dataclass
class MetricReport:
    metric: str
    value: float
    n_a: int
    n_b: int
    bandwidth: Optional[float] = None
    seed: Optional[int] = None

    def row(self) -> dict:
        return {
            "metric": self.metric,
            "value": repr(float(self.value)),
            "n_a": self.n_a,
            "n_b": self.n_b,
            "bandwidth": "" if self.bandwidth is None else repr(float(self.bandwidth)),
            "seed": "" if self.seed is None else self.seed,
        }


def _counts(x) -> np.ndarray:
    c = np.array([len(v) if isinstance(v, PointSet) else v for v in x], dtype=np.int64)
    if len(c) == 0:
        raise ValueError("need at least one count on each side")
    if np.any(c < 0):
        raise ValueError("counts must be nonnegative")
    return c


def sl_wasserstein(counts_a, counts_b) -> float:
    """1-Wasserstein distance between two empirical distributions on the
    nonnegative integers: sum_k |CDF_a(k) - CDF_b(k)|.

    Accepts integer counts or point sets (their cardinalities are used).
    """
    a, b = _counts(counts_a), _counts(counts_b)
    top = int(max(a.max(), b.max())) + 1
    cdf_a = np.cumsum(np.bincount(a, minlength=top)) / len(a)
    cdf_b = np.cumsum(np.bincount(b, minlength=top)) / len(b)
    return float(np.abs(cdf_a - cdf_b).sum())


def count_mae(generated, truth) -> float:
    """Mean absolute difference of cardinalities over paired sets."""
    if len(generated) != len(truth):
        raise ValueError(f"length mismatch: {len(generated)} vs {len(truth)}")
    if len(generated) == 0:
        raise ValueError("need at least one pair")
    g, t = _counts(generated), _counts(truth)
    return float(np.mean(np.abs(g - t)))


def _ordered(X: PointSet) -> np.ndarray:
    axis = X.domain.ordered_axis
    if axis is None:
        raise ValueError("counting distance needs a domain with an ordered axis")
    pts = X.points
    if len(pts) == 0:
        return pts
    others = [pts[:, j] for j in range(pts.shape[1]) if j != axis]
    # np.lexsort uses the last key as the primary one
    order = np.lexsort(others[::-1] + [pts[:, axis]])
    return pts[order]


def counting_distance(X: PointSet, Y: PointSet) -> float:
    """Counting distance between two sequences sorted along the ordered axis.

    Matched pairs contribute their L1 distance divided by d; each unmatched
    point of the longer sequence contributes its L1 distance to the domain's
    upper corner U.
    """
    if X.domain != Y.domain:
        raise ValueError("domain mismatch")
    x, y = _ordered(X), _ordered(Y)
    if len(x) > len(y):
        x, y = y, x
    k, d = len(x), X.domain.dim
    U = X.domain.hi
    matched = np.abs(x - y[:k]).sum() / d
    penalty = np.abs(U - y[k:]).sum()
    return float(matched + penalty)


def _emd_solver():
    for key in ("PYTORCH", "JAX", "TENSORFLOW", "CUPY"):
        os.environ.setdefault(f"POT_BACKEND_DISABLE_{key}", "1")
    import ot

    return ot.emd


def _ground_cost(x: np.ndarray, y: np.ndarray, ground_cost: str) -> np.ndarray:
    diff = x[:, None, :] - y[None, :, :]
    if ground_cost == "l2":
        return np.sqrt(np.sum(diff**2, axis=-1))
    if ground_cost == "l1":
        return np.sum(np.abs(diff), axis=-1)
    raise ValueError(f"unknown ground cost {ground_cost!r}")


def ot_wasserstein(X: PointSet, Y: PointSet, ground_cost: str = "l2") -> float:
    """Exact 1-Wasserstein distance between the uniform empirical measures of X and Y.

    Masses are scaled to integers (|Y| per point of X, |X| per point of Y) so
    the network-simplex solution is an exact integral transport plan.
    """
    x = X.points if isinstance(X, PointSet) else np.atleast_2d(X)
    y = Y.points if isinstance(Y, PointSet) else np.atleast_2d(Y)
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise ValueError("Wasserstein distance is undefined when one point set is empty")
    # canonical argument order makes the float result exactly symmetric
    if (n, x.tobytes()) > (m, y.tobytes()):
        x, y, n, m = y, x, m, n
    M = _ground_cost(x, y, ground_cost)
    if n == 1 or m == 1:
        return float(M.mean())
    plan = _emd_solver()(np.full(n, float(m)), np.full(m, float(n)), M)
    return float(np.sum(plan * M) / (n * m))


def pairwise_set_distances(sets_a, sets_b, set_distance: str, ground_cost: str = "l2") -> np.ndarray:
    """Full symmetric distance matrix over the concatenation of both lists."""
    sets = list(sets_a) + list(sets_b)
    if set_distance == "wd":
        dist = lambda u, v: ot_wasserstein(u, v, ground_cost)  # noqa: E731
    elif set_distance == "cd":
        dist = counting_distance
    else:
        raise ValueError(f"unknown set distance {set_distance!r}")
    n = len(sets)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = dist(sets[i], sets[j])
    return D


def mmd(sets_a, sets_b, set_distance: str = "wd", bandwidth: float = None, return_report: bool = False,
        distances: np.ndarray = None):
    """Biased MMD (square root of the V-statistic) with the kernel
    exp(-d(X, Y)^2 / (2 sigma^2)) on a set distance.

    sigma defaults to the median of the pairwise distances between distinct
    sets in the pooled sample. If every such distance is zero the result is 0.
    """
    na, nb = len(sets_a), len(sets_b)
    if na == 0 or nb == 0:
        raise ValueError("both lists must be nonempty")
    D = pairwise_set_distances(sets_a, sets_b, set_distance) if distances is None else distances
    if bandwidth is None:
        off = D[np.triu_indices(len(D), k=1)]
        bandwidth = float(np.median(off)) if len(off) else 0.0
    if bandwidth <= 0:
        value = 0.0
    else:
        Kxx = np.exp(-(D**2) / (2.0 * bandwidth**2))
        kaa = Kxx[:na, :na].mean()
        kbb = Kxx[na:, na:].mean()
        kab = Kxx[:na, na:].mean()
        value = float(np.sqrt(max(kaa + kbb - 2.0 * kab, 0.0)))
    if return_report:
        return MetricReport(f"mmd_{set_distance}", value, na, nb, bandwidth)
    return value


def mean_pairwise(sets_a, sets_b, fn) -> float:
    """Average of a paired set distance (e.g. WD between generated and true completions)."""
    if len(sets_a) != len(sets_b) or not sets_a:
        raise ValueError("need equally many, nonempty, paired lists")
    return float(np.mean([fn(a, b) for a, b in zip(sets_a, sets_b)]))
