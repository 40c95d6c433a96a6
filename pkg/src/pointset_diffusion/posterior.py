"""Exact reverse posterior q(X_t | X_0, X_{t+1}).

The posterior factorizes into a thinning part (each data point thinned by
step t+1 is re-added with probability (abar_t - abar_{t+1}) / (1 - abar_{t+1}))
and a noise part (each noise point of X_{t+1} survives to X_t with
probability bbar_t / bbar_{t+1}).
"""

from __future__ import annotations

import numpy as np

from .core import LabeledState, PointSet, thin_indices
from .schedule import DiffusionSchedule


def readd_probability(abar_t: float, abar_next: float) -> float:
    if abar_next >= 1.0:
        raise ValueError("alpha_bar_{t+1} must be < 1")
    if abar_t < abar_next:
        raise ValueError("alpha_bar must be nonincreasing")
    return (abar_t - abar_next) / (1.0 - abar_next)


def noise_keep_probability(bbar_t: float, bbar_next: float) -> float:
    if bbar_next <= 0.0:
        raise ValueError("beta_bar_{t+1} must be positive")
    if bbar_t > bbar_next:
        raise ValueError("beta_bar must be nondecreasing")
    return bbar_t / bbar_next


def thin_posterior_prob(t: int, schedule: DiffusionSchedule) -> float:
    """Probability that a data point absent from X_{t+1} was present in X_t."""
    schedule._check_step(t, 0, schedule.T - 1)
    return readd_probability(float(schedule.alpha_bar[t]), float(schedule.alpha_bar[t + 1]))


def noise_posterior_keep_prob(t: int, schedule: DiffusionSchedule) -> float:
    """Probability that a noise point of X_{t+1} is already in X_t."""
    schedule._check_step(t, 0, schedule.T - 1)
    return noise_keep_probability(float(schedule.beta_bar[t]), float(schedule.beta_bar[t + 1]))


def posterior_sample(
    X0: PointSet, x_next: LabeledState, schedule: DiffusionSchedule, rng: np.random.Generator
) -> LabeledState:
    """Draw X_t given X_0 and the labeled latent X_{t+1}.

    ``x_next.source_idx`` must index rows of ``X0``; the thinned data points
    are found as the complement of those indices.
    """
    if x_next.t < 1:
        raise ValueError("posterior_sample needs x_next.t >= 1")
    if X0.domain != x_next.domain:
        raise ValueError("X0 and x_next live on different domains")
    idx = x_next.source_idx
    if len(idx) and (idx.min() < 0 or idx.max() >= len(X0)):
        raise ValueError("retained points are not a subset of X0")
    if not np.array_equal(X0.points[idx], x_next.retained.points):
        raise ValueError("retained points are not a subset of X0")

    t = x_next.t - 1
    thinned = np.ones(len(X0), dtype=bool)
    thinned[idx] = False
    thinned_idx = np.flatnonzero(thinned)
    back = thinned_idx[thin_indices(len(thinned_idx), thin_posterior_prob(t, schedule), rng)]
    keep_noise = thin_indices(len(x_next.noise), noise_posterior_keep_prob(t, schedule), rng)

    new_idx = np.concatenate([idx, back])
    return LabeledState(
        retained=X0.subset(new_idx),
        noise=x_next.noise.subset(keep_noise),
        t=t,
        source_idx=new_idx,
    )
