"""Continuous-state deterioration/replacement benchmark.

Action ``a`` in [0, 1] blends pure deterioration (``a = 0``) with full
replacement (``a = 1``). Both mean and standard deviation of the next state
are blended with the same weights. Observations are Gaussian around the
state with standard deviation ``0.005 * exp(state)``.

Note that the deterioration mean is zero for every state below about 1, so
a freshly replaced component (state 0.96) collapses towards 0 with a wide
spread on the next do-nothing step. The formula is kept as is.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import GaussianBelief

REPLACE_MEAN = 0.96
REPLACE_STD = 0.02
OBS_NOISE = 0.005


def cont_deterioration(s):
    """Mean and standard deviation of the next state under do-nothing."""
    s = np.asarray(s, dtype=np.float64)
    mean = np.maximum(0.0, s - np.exp(-5.0 * s) * 0.5 - 1.0)
    std = (np.maximum(0.0, s) - np.maximum(0.0, mean)) / 2.0 + 0.02
    if mean.ndim == 0:
        return float(mean), float(std)
    return mean, std


@dataclass(frozen=True)
class ContinuousMaintenanceModel:
    """True dynamics; the optional initial distribution is Normal(mean, std), std 0 meaning a point mass."""

    initial_mean: float = REPLACE_MEAN
    initial_std: float = 0.0
    replace_mean: float = REPLACE_MEAN
    replace_std: float = REPLACE_STD
    obs_noise: float = OBS_NOISE

    def transition_moments(self, s, a):
        det_mean, det_std = cont_deterioration(s)
        a = np.asarray(a, dtype=np.float64)
        mean = self.replace_mean * a + np.asarray(det_mean) * (1.0 - a)
        std = self.replace_std * a + np.asarray(det_std) * (1.0 - a)
        return mean, std

    def obs_mean(self, s):
        return np.asarray(s, dtype=np.float64)

    def obs_std(self, s):
        return self.obs_noise * np.exp(np.asarray(s, dtype=np.float64))

    def sample_initial(self, rng, size=None):
        if self.initial_std <= 0.0:
            return np.full(size, self.initial_mean) if size is not None else float(self.initial_mean)
        return rng.normal(self.initial_mean, self.initial_std, size=size)

    def sample_observation(self, s, rng):
        return rng.normal(s, self.obs_std(s))


DEFAULT_CONTINUOUS = ContinuousMaintenanceModel()


def _check_action(a):
    if np.any(np.asarray(a) < 0.0) or np.any(np.asarray(a) > 1.0):
        raise ValueError(f"continuous action must lie in [0, 1], got {a}")


def cont_step(s, a, rng, model: ContinuousMaintenanceModel = DEFAULT_CONTINUOUS):
    """Advance the state and observe the new one."""
    _check_action(a)
    mean, std = model.transition_moments(s, a)
    nxt = rng.normal(mean, std)
    obs = model.sample_observation(nxt, rng)
    return float(nxt), float(obs)


def cont_true_next_distribution(s, a, model: ContinuousMaintenanceModel = DEFAULT_CONTINUOUS) -> GaussianBelief:
    _check_action(a)
    mean, std = model.transition_moments(s, a)
    return GaussianBelief(float(mean), float(std))


class ContinuousEnv:
    """Stateful wrapper; the exact belief is not computable so none is tracked."""

    def __init__(self, model: ContinuousMaintenanceModel = DEFAULT_CONTINUOUS):
        self.model = model
        self.state: Optional[float] = None
        self.belief = None
        self.t = 0

    def reset(self, rng) -> float:
        self.state = float(self.model.sample_initial(rng))
        self.t = 0
        return float(self.model.sample_observation(self.state, rng))

    def step(self, action: float, rng) -> float:
        self.state, obs = cont_step(self.state, float(action), rng, self.model)
        self.t += 1
        return obs

    def true_state_and_belief(self):
        return self.state, None
