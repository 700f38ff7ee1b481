"""Student's t distribution truncated above at ``ub``."""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln, stdtr, stdtrit

# Below this truncation mass the inverse CDF runs out of precision.
_REJECTION_MASS = 1e-6


def _t_log_pdf_std(z, nu):
    return (gammaln(0.5 * (nu + 1.0)) - gammaln(0.5 * nu) - 0.5 * np.log(nu * np.pi)
            - 0.5 * (nu + 1.0) * np.log1p(z * z / nu))


def ts_log_pdf(x, mu, sigma, nu, ub=0.0):
    """Log density of TS(mu, sigma, nu, ub); ``-inf`` for ``x > ub``.

    Works elementwise on broadcastable arrays. ``ub = inf`` gives the plain
    location-scale Student's t.
    """
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    ub = np.asarray(ub, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_mass = np.where(np.isposinf(ub), 0.0, np.log(stdtr(nu, (ub - mu) / sigma)))
    out = _t_log_pdf_std((x - mu) / sigma, nu) - np.log(sigma) - log_mass
    out = np.where(x <= ub, out, -np.inf)
    return out if out.ndim else float(out)


def ts_sample(mu, sigma, nu, ub, rng, size=None):
    """Draw from TS(mu, sigma, nu, ub).

    Inverse CDF through the regularised incomplete beta function; when the
    retained mass is below 1e-6 a Pareto-tail rejection sampler takes over,
    which is exact for the lower tail of the t.
    """
    mu, sigma, nu, ub = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (mu, sigma, nu, ub)))
    shape = mu.shape if size is None else tuple(np.atleast_1d(size))
    mu, sigma, nu, ub = (np.broadcast_to(v, shape) for v in (mu, sigma, nu, ub))
    b = (ub - mu) / sigma
    mass = np.where(np.isposinf(b), 1.0, stdtr(nu, b))
    u = rng.uniform(size=shape)
    z = stdtrit(nu, u * mass)
    deep = mass < _REJECTION_MASS
    if np.any(deep):
        z = np.array(z, dtype=np.float64, copy=True)
        for idx in zip(*np.nonzero(deep)):
            z[idx] = _tail_rejection(float(b[idx]), float(nu[idx]), rng)
    x = mu + sigma * np.minimum(z, b)
    x = np.minimum(x, ub)
    return x if x.ndim else float(x)


def _tail_rejection(b: float, nu: float, rng) -> float:
    # proposal density ~ |z|^-(nu+1) on z <= b < 0
    a = -b
    while True:
        z = -a * (1.0 - rng.uniform()) ** (-1.0 / nu)
        accept = (z * z / (nu + z * z)) ** (0.5 * (nu + 1.0))
        if rng.uniform() < accept:
            return z
