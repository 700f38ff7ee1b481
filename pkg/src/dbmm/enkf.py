"""Ensemble Kalman filter using the true continuous model, and an exact Kalman filter oracle.

The update is the stochastic (perturbed-observation) EnKF. For each particle
``x_i`` a predicted observation is drawn from the true observation law at
that particle::

    y_i = h(x_i) + e_i,   e_i ~ N(0, obs_std(x_i)^2)

and the particle moves by ``K (o - y_i)`` with ``K = cov(x, y) / var(y)``.
The noise ``e_i`` is both the spread that enters ``var(y)`` and the
per-particle observation perturbation. It is drawn once and used in both
places, so the analysis spread matches the Kalman posterior in the
linear-Gaussian case.

Any model with ``transition_moments(s, a)``, ``obs_mean(s)``, ``obs_std(s)``
and ``sample_initial(rng, size)`` works with these functions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .core import GaussianBelief, ShapeError

STD_FLOOR = 1e-8


class DegenerateEnsemble(UserWarning):
    pass


@dataclass(frozen=True)
class Ensemble:
    particles: np.ndarray

    def __post_init__(self):
        p = np.array(self.particles, dtype=np.float64).reshape(-1)
        if p.size < 2:
            raise ShapeError("an ensemble needs at least 2 particles")
        if not np.all(np.isfinite(p)):
            raise ValueError("ensemble particles must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "particles", p)

    def __len__(self):
        return self.particles.size


@dataclass(frozen=True)
class LinearGaussianSpec:
    """``x' = a x + N(0, q^2)``, ``o = h x + N(0, r^2)``, ``x_0 ~ N(m0, s0^2)``."""

    a: float
    q: float
    h: float
    r: float
    m0: float = 0.0
    s0: float = 1.0

    def __post_init__(self):
        if self.q <= 0 or self.r <= 0 or self.s0 < 0:
            raise ValueError("q and r must be > 0 and s0 >= 0")

    def transition_moments(self, s, a=None):
        s = np.asarray(s, dtype=np.float64)
        return self.a * s, np.full(s.shape, self.q)

    def obs_mean(self, s):
        return self.h * np.asarray(s, dtype=np.float64)

    def obs_std(self, s):
        return np.full(np.shape(s), self.r)

    def sample_initial(self, rng, size=None):
        return rng.normal(self.m0, self.s0, size=size)

    def sample_observation(self, s, rng):
        return rng.normal(self.obs_mean(s), self.r)


def enkf_init(model, n: int, rng) -> Ensemble:
    return Ensemble(np.broadcast_to(model.sample_initial(rng, size=n), (n,)))


def enkf_predict(ens: Ensemble, action, model, rng) -> Ensemble:
    mean, std = model.transition_moments(ens.particles, action)
    return Ensemble(mean + std * rng.standard_normal(len(ens)))


def enkf_update(ens: Ensemble, observation: float, model, rng) -> Ensemble:
    x = ens.particles
    y = model.obs_mean(x) + model.obs_std(x) * rng.standard_normal(x.size)
    var_y = np.var(y, ddof=1)
    if not var_y > 0.0:
        warnings.warn("predicted observations have zero variance; update skipped",
                      DegenerateEnsemble, stacklevel=2)
        return ens
    cov_xy = np.cov(x, y, ddof=1)[0, 1]
    gain = cov_xy / var_y
    return Ensemble(x + gain * (observation - y))


def enkf_moments(ens: Ensemble) -> GaussianBelief:
    p = ens.particles
    return GaussianBelief(float(p.mean()), max(float(p.std(ddof=1)), STD_FLOOR))


def enkf_filter(observations: Sequence[float], actions: Sequence, model, n_particles: int, rng) -> List[GaussianBelief]:
    """Posterior moments for ``o_0..o_T``: update on ``o_0``, then predict/update per action."""
    if len(actions) != len(observations) - 1:
        raise ShapeError("need one action fewer than observations")
    ens = enkf_update(enkf_init(model, n_particles, rng), observations[0], model, rng)
    out = [enkf_moments(ens)]
    for a, o in zip(actions, observations[1:]):
        ens = enkf_update(enkf_predict(ens, a, model, rng), o, model, rng)
        out.append(enkf_moments(ens))
    return out


def kalman_filter(spec: LinearGaussianSpec, observations: Sequence[float]) -> List[GaussianBelief]:
    """Exact filtered posteriors with the same ordering as :func:`enkf_filter`."""
    m, v = spec.m0, spec.s0 ** 2
    out = []
    for t, o in enumerate(observations):
        if t > 0:
            m, v = spec.a * m, spec.a ** 2 * v + spec.q ** 2
        s = spec.h ** 2 * v + spec.r ** 2
        k = v * spec.h / s
        m, v = m + k * (o - spec.h * m), (1.0 - k * spec.h) * v
        out.append(GaussianBelief(float(m), float(np.sqrt(max(v, 0.0))) or STD_FLOOR))
    return out


def steady_state_variance(spec: LinearGaussianSpec) -> float:
    """Filtered variance at the fixed point of the scalar Riccati recursion.

    With prior variance ``p``, ``p = a^2 p r^2 / (h^2 p + r^2) + q^2`` is a
    quadratic ``h^2 p^2 + (r^2 - a^2 r^2 - h^2 q^2) p - q^2 r^2 = 0``; the
    positive root is the steady prior, and the filtered variance follows.
    """
    a2, q2, h2, r2 = spec.a ** 2, spec.q ** 2, spec.h ** 2, spec.r ** 2
    if h2 == 0.0:
        if a2 >= 1.0:
            return float("inf")
        return q2 / (1.0 - a2)
    b = r2 - a2 * r2 - h2 * q2
    p = (-b + np.sqrt(b * b + 4.0 * h2 * q2 * r2)) / (2.0 * h2)
    return float(p * r2 / (h2 * p + r2))
