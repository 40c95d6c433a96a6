"""Synthetic point-process generators.

These are desk-scale ground-truth processes: homogeneous and inhomogeneous
Poisson processes (Lewis thinning), a spatio-temporal Hawkes process
(Ogata thinning in time, Gaussian offspring displacement in space) and a
pinwheel variant in which a multivariate Hawkes process drives arrivals on
the arms of a spiral.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Domain, PointSet, uniform_poisson


def gen_homogeneous_poisson(rate: float, domain: Domain, rng: np.random.Generator) -> PointSet:
    return uniform_poisson(rate, domain, rng)


def gen_inhomogeneous_poisson(rate_field: Callable, rate_max: float, domain: Domain,
                              rng: np.random.Generator) -> PointSet:
    """Lewis thinning: sample at ``rate_max`` and keep x w.p. rate_field(x) / rate_max."""
    if rate_max < 0:
        raise ValueError("rate_max must be nonnegative")
    cand = uniform_poisson(rate_max, domain, rng)
    if len(cand) == 0:
        return cand
    rates = np.asarray(rate_field(cand.points), dtype=np.float64).reshape(len(cand))
    if np.any(rates > rate_max * (1 + 1e-12)) or np.any(rates < 0):
        raise ValueError(f"rate_field value {rates.max():.6g} exceeds rate_max={rate_max:.6g} or is negative")
    keep = rng.random(len(cand)) * rate_max < rates
    return cand.subset(keep)


@dataclass
class GaussianBumps:
    """Rate field: base + sum_j peak_j * exp(-|x - c_j|^2 / (2 w_j^2))."""

    centers: np.ndarray
    widths: np.ndarray
    peaks: np.ndarray
    base: float = 0.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        d2 = np.sum((x[:, None, :] - np.asarray(self.centers)[None]) ** 2, axis=-1)
        return self.base + np.sum(np.asarray(self.peaks) * np.exp(-d2 / (2 * np.asarray(self.widths) ** 2)), axis=1)

    @property
    def rate_max(self) -> float:
        # bumps can overlap, so bound by the sum of peaks
        return float(self.base + np.sum(self.peaks))


def three_clusters(domain: Domain, expected_per_cluster: float = 10.0, width_frac: float = 0.08) -> GaussianBumps:
    """Three well-separated Gaussian clusters inside the domain."""
    lo, hi = domain.lo, domain.hi
    span = hi - lo
    rel = np.array([[0.25, 0.3], [0.7, 0.25], [0.5, 0.75]])
    if domain.dim != 2:
        rel = np.random.default_rng(7).uniform(0.2, 0.8, size=(3, domain.dim))
    centers = lo + rel * span
    width = width_frac * float(np.min(span))
    peak = expected_per_cluster / ((2 * np.pi) ** (domain.dim / 2) * width**domain.dim)
    return GaussianBumps(centers, np.full(3, width), np.full(3, peak))


def _time_axis(domain: Domain) -> tuple:
    axis = domain.ordered_axis
    if axis is None:
        raise ValueError("Hawkes generators need a domain with an ordered (time) axis")
    space = [j for j in range(domain.dim) if j != axis]
    return axis, space


def gen_hawkes_st(mu: float, alpha: float, beta: float, kernel_width: float, domain: Domain,
                  rng: np.random.Generator) -> PointSet:
    """Spatio-temporal Hawkes process with exponential temporal kernel alpha * exp(-beta s).

    Background events arrive at rate ``mu`` per unit time, uniformly in space.
    Each offspring is displaced from its parent by N(0, kernel_width^2 I) and
    clipped to the spatial box.
    """
    if alpha < 0 or beta <= 0 or mu < 0:
        raise ValueError("need mu >= 0, alpha >= 0, beta > 0")
    if alpha / beta >= 1:
        raise ValueError(f"unstable Hawkes process: branching ratio alpha/beta = {alpha / beta:.3g} >= 1")
    axis, space = _time_axis(domain)
    t0, t1 = domain.lower[axis], domain.upper[axis]
    s_lo, s_hi = domain.lo[space], domain.hi[space]
    times, locs = [], []
    if mu == 0:
        return PointSet.empty(domain)
    t = t0
    while True:
        excite = alpha * np.exp(-beta * (t - np.asarray(times))) if times else np.zeros(0)
        lam_bar = mu + excite.sum()
        t = t + rng.exponential(1.0 / lam_bar)
        if t > t1:
            break
        contrib = alpha * np.exp(-beta * (t - np.asarray(times))) if times else np.zeros(0)
        lam = mu + contrib.sum()
        if rng.random() * lam_bar > lam:
            continue
        if rng.random() * lam < mu:
            loc = rng.uniform(s_lo, s_hi)
        else:
            parent = rng.choice(len(times), p=contrib / contrib.sum())
            loc = np.clip(locs[parent] + kernel_width * rng.standard_normal(len(space)), s_lo, s_hi)
        times.append(t)
        locs.append(loc)
    pts = np.zeros((len(times), domain.dim))
    pts[:, axis] = times
    if times:
        pts[:, space] = np.array(locs)
    return PointSet(pts, domain)


def hawkes_expected_count(mu: float, alpha: float, beta: float, span: float) -> float:
    """Exact E[N(0, span]] for an exponential Hawkes process started empty."""
    kappa = beta - alpha
    return mu * beta * span / kappa - mu * alpha / kappa**2 * (1.0 - np.exp(-kappa * span))


def pinwheel_location(arm: int, num_arms: int, rng: np.random.Generator, radial_std: float = 0.3,
                      tangential_std: float = 0.05, rate: float = 0.25) -> np.ndarray:
    """A point on arm ``arm`` of a pinwheel in [-1, 1]^2."""
    r = rng.normal(1.0, radial_std)
    tang = rng.normal(0.0, tangential_std)
    angle = 2 * np.pi * arm / num_arms + rate * np.exp(r)
    c, s = np.cos(angle), np.sin(angle)
    x = np.array([c * r - s * tang, s * r + c * tang]) / 2.5
    return np.clip(x, -1.0, 1.0)


def gen_pinwheel_hawkes(num_arms: int, mu: float, alpha: float, beta: float, domain: Domain,
                        rng: np.random.Generator) -> PointSet:
    """Multivariate Hawkes process with one dimension per pinwheel arm.

    Each arm has background rate mu / num_arms. An event on arm k excites its
    own arm and arm k+1 with equal weight alpha / 2, so the branching ratio
    is alpha / beta. Needs a 3-D domain: one time axis and two spatial axes.
    """
    if domain.dim != 3:
        raise ValueError("pinwheel needs a 3-D (time, x, y) domain")
    if alpha / beta >= 1:
        raise ValueError("unstable Hawkes process")
    axis, space = _time_axis(domain)
    t0, t1 = domain.lower[axis], domain.upper[axis]
    base = mu / num_arms
    times, arms = [], []
    t = t0
    while mu > 0:
        dt = t - np.asarray(times)
        decay = np.exp(-beta * dt) if times else np.zeros(0)
        lam_bar = mu + alpha * decay.sum()
        t = t + rng.exponential(1.0 / lam_bar)
        if t > t1:
            break
        decay = np.exp(-beta * (t - np.asarray(times))) if times else np.zeros(0)
        lam_k = np.full(num_arms, base)
        if times:
            a = np.asarray(arms)
            np.add.at(lam_k, a, 0.5 * alpha * decay)
            np.add.at(lam_k, (a + 1) % num_arms, 0.5 * alpha * decay)
        lam = lam_k.sum()
        if rng.random() * lam_bar > lam:
            continue
        times.append(t)
        arms.append(int(rng.choice(num_arms, p=lam_k / lam)))
    pts = np.zeros((len(times), 3))
    pts[:, axis] = times
    lo, hi = domain.lo[space], domain.hi[space]
    for i, k in enumerate(arms):
        unit = pinwheel_location(k, num_arms, rng)
        pts[i, space] = lo + (unit + 1.0) * 0.5 * (hi - lo)
    return PointSet(pts, domain)


KINDS = ("homogeneous_poisson", "inhomogeneous_poisson", "hawkes_st", "pinwheel_hawkes")


@dataclass
class SyntheticSpec:
    """Recipe for a synthetic dataset. ``params`` are kind-specific:

    homogeneous_poisson: rate
    inhomogeneous_poisson: expected_per_cluster, width_frac (three Gaussian clusters)
    hawkes_st: mu, alpha, beta, kernel_width
    pinwheel_hawkes: num_arms, mu, alpha, beta
    """

    kind: str
    domain: Domain
    num_instances: int = 100
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        p = self.params
        if "alpha" in p and p["alpha"] / p.get("beta", 1.0) >= 1:
            raise ValueError("Hawkes stability requires alpha / beta < 1")
        for key in ("rate", "mu", "expected_per_cluster"):
            if p.get(key, 0) < 0:
                raise ValueError(f"{key} must be nonnegative")


def instance_rng(seed: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))


def generate(spec: SyntheticSpec) -> list:
    """Draw ``spec.num_instances`` independent point sets; instance i uses stream (seed, i)."""
    p, dom = spec.params, spec.domain
    if spec.kind == "homogeneous_poisson":
        draw = lambda r: gen_homogeneous_poisson(p.get("rate", 10.0), dom, r)  # noqa: E731
    elif spec.kind == "inhomogeneous_poisson":
        field_ = three_clusters(dom, p.get("expected_per_cluster", 10.0), p.get("width_frac", 0.08))
        draw = lambda r: gen_inhomogeneous_poisson(field_, field_.rate_max, dom, r)  # noqa: E731
    elif spec.kind == "hawkes_st":
        draw = lambda r: gen_hawkes_st(p.get("mu", 1.0), p.get("alpha", 0.5), p.get("beta", 1.0),  # noqa: E731
                                       p.get("kernel_width", 0.05), dom, r)
    else:
        draw = lambda r: gen_pinwheel_hawkes(int(p.get("num_arms", 5)), p.get("mu", 2.0),  # noqa: E731
                                             p.get("alpha", 0.5), p.get("beta", 1.0), dom, r)
    return [draw(instance_rng(spec.seed, i)) for i in range(spec.num_instances)]
