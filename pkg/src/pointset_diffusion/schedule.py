"""Noise schedules and the forward chain.

The forward chain thins the data points (keep probability alpha_{t+1} per
step) and superposes fresh Poisson noise (intensity beta_{t+1} * noise_rate
per step). Index 0 of the cumulative arrays is the data endpoint:
``alpha_bar[0] == 1`` and ``beta_bar[0] == 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Domain, LabeledState, PointSet, superpose, thin_indices, uniform_poisson

ALPHA_FLOOR = 1e-4


@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    alpha_bar: np.ndarray
    beta_bar: np.ndarray
    noise_rate: float

    def __post_init__(self):
        ab = np.array(self.alpha_bar, dtype=np.float64)
        bb = np.array(self.beta_bar, dtype=np.float64)
        if ab.ndim != 1 or ab.shape != bb.shape or len(ab) < 3:
            raise ValueError("alpha_bar and beta_bar must be 1-D arrays of equal length T+1 >= 3")
        if ab[0] != 1.0 or bb[0] != 0.0:
            raise ValueError("alpha_bar[0] must be 1 and beta_bar[0] must be 0")
        if np.any(np.diff(ab) >= 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if np.any(np.diff(bb) < 0) or bb.min() < 0 or bb.max() > 1:
            raise ValueError("beta_bar must be nondecreasing within [0, 1]")
        if ab[-1] > 1e-3 or bb[-1] != 1.0:
            raise ValueError("schedule must end at alpha_bar <= 1e-3 and beta_bar == 1")
        if not np.allclose(ab[1:-1] + bb[1:-1], 1.0, rtol=0, atol=1e-12):
            raise ValueError("alpha_bar + beta_bar must equal 1 before the last step")
        if not self.noise_rate >= 0:
            raise ValueError("noise_rate must be nonnegative")
        for a in (ab, bb):
            a.setflags(write=False)
        object.__setattr__(self, "alpha_bar", ab)
        object.__setattr__(self, "beta_bar", bb)
        object.__setattr__(self, "noise_rate", float(self.noise_rate))

    @property
    def T(self) -> int:
        return len(self.alpha_bar) - 1

    def alpha(self, t: int) -> float:
        """Per-step keep probability alpha_t for 1 <= t <= T."""
        self._check_step(t, lo=1)
        return float(self.alpha_bar[t] / self.alpha_bar[t - 1])

    def beta(self, t: int) -> float:
        """Per-step noise increment beta_t = beta_bar_t - beta_bar_{t-1}."""
        self._check_step(t, lo=1)
        return float(self.beta_bar[t] - self.beta_bar[t - 1])

    def _check_step(self, t: int, lo: int = 0, hi: int = None) -> None:
        hi = self.T if hi is None else hi
        if not lo <= t <= hi:
            raise ValueError(f"step {t} outside [{lo}, {hi}]")

    def to_dict(self) -> dict:
        return {
            "alpha_bar": self.alpha_bar.tolist(),
            "beta_bar": self.beta_bar.tolist(),
            "noise_rate": self.noise_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiffusionSchedule":
        return cls(np.asarray(d["alpha_bar"]), np.asarray(d["beta_bar"]), d["noise_rate"])


def make_schedule(
    T: int, shape: str = "linear", expected_count: float = 1.0, domain_volume: float = 1.0
) -> DiffusionSchedule:
    """Build a schedule with alpha_bar_t = 1 - beta_bar_t and a calibrated noise rate.

    ``linear`` uses alpha_bar_t = 1 - t/T, ``cosine`` uses cos^2(pi t / 2T).
    Interior values are clipped into [1e-4, 1 - 1e-4]; the last step is
    pinned to alpha_bar_T = 1e-4 and beta_bar_T = 1.
    """
    if int(T) != T or T < 2:
        raise ValueError("T must be an integer >= 2")
    if not expected_count > 0:
        raise ValueError("expected_count must be positive")
    if not domain_volume > 0:
        raise ValueError("domain_volume must be positive")
    t = np.arange(1, T + 1, dtype=np.float64)
    if shape == "linear":
        ab = 1.0 - t / T
    elif shape == "cosine":
        ab = np.cos(0.5 * np.pi * t / T) ** 2
    else:
        raise ValueError(f"unknown schedule shape {shape!r}")
    ab = np.clip(ab, ALPHA_FLOOR, 1.0 - ALPHA_FLOOR)
    ab[-1] = ALPHA_FLOOR
    bb = 1.0 - ab
    bb[-1] = 1.0
    alpha_bar = np.concatenate([[1.0], ab])
    beta_bar = np.concatenate([[0.0], bb])
    return DiffusionSchedule(alpha_bar, beta_bar, expected_count / domain_volume)


def sample_noise(schedule: DiffusionSchedule, domain: Domain, rng: np.random.Generator) -> PointSet:
    """Draw X_T ~ p_noise: homogeneous Poisson with the schedule's noise rate."""
    return uniform_poisson(schedule.noise_rate, domain, rng)


def forward_step(state: LabeledState, schedule: DiffusionSchedule, rng: np.random.Generator) -> LabeledState:
    """One transition q(X_{t+1} | X_t)."""
    t = state.t
    if not 0 <= t < schedule.T:
        raise ValueError(f"forward_step needs 0 <= t < T, got t={t}")
    keep = thin_indices(len(state.retained), schedule.alpha(t + 1), rng)
    added = uniform_poisson(schedule.beta(t + 1) * schedule.noise_rate, state.domain, rng)
    return LabeledState(
        retained=state.retained.subset(keep),
        noise=superpose(state.noise, added),
        t=t + 1,
        source_idx=state.source_idx[keep],
    )


def forward_marginal(X0: PointSet, t: int, schedule: DiffusionSchedule, rng: np.random.Generator) -> LabeledState:
    """Sample X_t ~ q(X_t | X_0) directly; t = 0 returns (X_0, {})."""
    schedule._check_step(t)
    keep = thin_indices(len(X0), float(schedule.alpha_bar[t]), rng)
    noise = uniform_poisson(float(schedule.beta_bar[t]) * schedule.noise_rate, X0.domain, rng)
    return LabeledState(retained=X0.subset(keep), noise=noise, t=t, source_idx=keep)


def initial_state(X0: PointSet) -> LabeledState:
    return LabeledState(retained=X0, noise=PointSet.empty(X0.domain), t=0)
