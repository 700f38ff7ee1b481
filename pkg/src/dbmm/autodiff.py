"""Hand-written reverse mode for one-hidden-layer networks and distribution heads.

Every differentiable function here comes as a forward function plus a
vector-Jacobian product (``*_vjp``) or explicit partial derivatives. Arrays
carry a leading batch axis where that makes sense; all arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, MutableMapping, Optional

import numpy as np
from scipy.special import expit, log_ndtr, ndtri_exp

from .core import DBMMError, ShapeError

STD_FLOOR = 1e-4
PROB_FLOOR = 1e-12
LOG_2PI = float(np.log(2.0 * np.pi))


class TapeError(DBMMError):
    pass


class NonFiniteGradient(DBMMError, FloatingPointError):
    pass


@dataclass
class Tape:
    """Intermediates of one :meth:`DenseNet.forward` call."""

    net_id: int
    version: int
    x: np.ndarray
    h: np.ndarray
    squeeze: bool


@dataclass
class Gradient:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    x: np.ndarray

    def params(self) -> Dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}


class DenseNet:
    """``y = W2 @ tanh(W1 @ x + b1) + b2``.

    ``forward`` accepts a single input vector or a ``(batch, input_dim)``
    matrix. The returned tape is tied to the current parameter version and
    becomes stale once :meth:`bump` is called (Adam does this).
    """

    def __init__(self, input_dim: int, output_dim: int, hidden_dim: int = 100, rng=None, zero=False,
                 linear=False):
        self.input_dim = int(input_dim)
        self.hidden_dim = int(hidden_dim)
        self.output_dim = int(output_dim)
        self.linear = linear
        self.version = 0
        if zero or rng is None:
            self.W1 = np.zeros((hidden_dim, input_dim))
            self.W2 = np.zeros((output_dim, hidden_dim))
        else:
            lim1 = np.sqrt(6.0 / (input_dim + hidden_dim))
            lim2 = np.sqrt(6.0 / (hidden_dim + output_dim))
            self.W1 = rng.uniform(-lim1, lim1, size=(hidden_dim, input_dim))
            self.W2 = rng.uniform(-lim2, lim2, size=(output_dim, hidden_dim))
        self.b1 = np.zeros(hidden_dim)
        self.b2 = np.zeros(output_dim)

    @property
    def params(self) -> Dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def set_params(self, params: Mapping[str, np.ndarray]) -> None:
        for k in ("W1", "b1", "W2", "b2"):
            new = np.asarray(params[k], dtype=np.float64)
            if new.shape != getattr(self, k).shape:
                raise ShapeError(f"{k}: expected {getattr(self, k).shape}, got {new.shape}")
            getattr(self, k)[...] = new
        self.bump()

    def bump(self) -> None:
        self.version += 1

    def copy(self) -> "DenseNet":
        other = DenseNet(self.input_dim, self.output_dim, self.hidden_dim, zero=True, linear=self.linear)
        for k, v in self.params.items():
            getattr(other, k)[...] = v
        return other

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError(f"expected input of width {self.input_dim}, got shape {x.shape}")
        a = x @ self.W1.T + self.b1
        h = a if self.linear else np.tanh(a)
        y = h @ self.W2.T + self.b2
        tape = Tape(id(self), self.version, x, h, squeeze)
        return (y[0] if squeeze else y), tape

    __call__ = forward

    def backward(self, tape: Tape, upstream) -> Gradient:
        """Gradient of ``sum(upstream * y)`` with respect to parameters and input."""
        if tape.net_id != id(self) or tape.version != self.version:
            raise TapeError("tape was produced by a different network or before a parameter update")
        gy = np.asarray(upstream, dtype=np.float64)
        if tape.squeeze:
            gy = gy[None, :]
        if gy.shape != (tape.x.shape[0], self.output_dim):
            raise ShapeError(f"upstream shape {gy.shape} does not match output")
        gW2 = gy.T @ tape.h
        gb2 = gy.sum(axis=0)
        gh = gy @ self.W2
        ga = gh if self.linear else gh * (1.0 - tape.h * tape.h)
        gW1 = ga.T @ tape.x
        gb1 = ga.sum(axis=0)
        gx = ga @ self.W1
        return Gradient(gW1, gb1, gW2, gb2, gx[0] if tape.squeeze else gx)


# ---------------------------------------------------------------- optimiser


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: MutableMapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
              state: AdamState) -> AdamState:
    """In-place bias-corrected Adam update of ``params``.

    Raises :class:`NonFiniteGradient` before touching anything if a gradient
    entry is NaN or infinite.
    """
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for {k}")
        if g.shape != params[k].shape:
            raise ShapeError(f"gradient {k} has shape {g.shape}, parameter {params[k].shape}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for k, g in grads.items():
        if k not in state.m:
            state.m[k] = np.zeros_like(g)
            state.v[k] = np.zeros_like(g)
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[k] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return state


def clip_by_global_norm(grads: MutableMapping[str, np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * scale
    return norm


# ---------------------------------------------------------------- heads


def softmax(logits, axis=-1):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def softmax_vjp(probs, g):
    return probs * (g - np.sum(probs * g, axis=-1, keepdims=True))


def log_softmax_vjp(log_probs, g):
    return g - np.exp(log_probs) * np.sum(g, axis=-1, keepdims=True)


def categorical_head(logits):
    """Softmax; an alias kept for symmetry with :func:`gaussian_head`."""
    return softmax(logits)


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.logaddexp(0.0, x)


def gaussian_head(raw):
    """Map raw ``[..., 2]`` outputs to ``[..., 2]`` rows of ``(mean, std)``."""
    raw = np.asarray(raw, dtype=np.float64)
    out = np.empty_like(raw)
    out[..., 0] = raw[..., 0]
    out[..., 1] = softplus(raw[..., 1]) + STD_FLOOR
    return out


def gaussian_head_vjp(raw, g):
    graw = np.empty_like(np.asarray(g, dtype=np.float64))
    graw[..., 0] = g[..., 0]
    graw[..., 1] = g[..., 1] * expit(raw[..., 1])
    return graw


def gaussian_rsample(mean, std, eps):
    """Reparameterised draw ``mean + std * eps``.

    The partials are ``d/dmean = 1`` and ``d/dstd = eps``; callers pass
    ``eps`` back in on the backward pass.
    """
    return mean + std * eps


# ---------------------------------------------------------------- log densities


def gaussian_log_prob(x, mu, sigma):
    z = (x - mu) / sigma
    return -0.5 * z * z - np.log(sigma) - 0.5 * LOG_2PI


def gaussian_log_prob_grad(x, mu, sigma):
    """Partials of :func:`gaussian_log_prob` w.r.t. ``(x, mu, sigma)``."""
    z = (x - mu) / sigma
    dmu = z / sigma
    dsigma = (z * z - 1.0) / sigma
    return -dmu, dmu, dsigma


def _mills(beta):
    """phi(beta) / Phi(beta), stable in both tails."""
    log_phi = -0.5 * beta * beta - 0.5 * LOG_2PI
    return np.exp(log_phi - log_ndtr(beta))


def trunc_normal_log_prob(x, mu, sigma, ub=0.0):
    """Log density of a Normal(mu, sigma) restricted to ``(-inf, ub]``.

    Points above ``ub`` get ``-inf``.
    """
    x = np.asarray(x, dtype=np.float64)
    beta = (ub - mu) / sigma
    out = gaussian_log_prob(x, mu, sigma) - log_ndtr(beta)
    return np.where(x <= ub, out, -np.inf)


def trunc_normal_log_prob_grad(x, mu, sigma, ub=0.0):
    """Partials w.r.t. ``(mu, sigma)``; zero wherever ``x > ub``."""
    beta = (ub - mu) / sigma
    lam = _mills(beta)
    z = (x - mu) / sigma
    dmu = z / sigma + lam / sigma
    dsigma = (z * z - 1.0) / sigma + lam * beta / sigma
    inside = np.asarray(x) <= ub
    return np.where(inside, dmu, 0.0), np.where(inside, dsigma, 0.0)


def trunc_normal_sample(mu, sigma, ub, rng, size=None):
    """Inverse-CDF draw from Normal(mu, sigma) truncated above at ``ub``."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    shape = np.broadcast(mu, sigma, np.asarray(ub)).shape if size is None else size
    log_mass = log_ndtr((ub - mu) / sigma)
    u = rng.uniform(size=shape)
    # invert u * Phi(beta) in log space so deep truncation does not underflow
    z = ndtri_exp(np.log(np.maximum(u, 1e-300)) + log_mass)
    x = mu + sigma * z
    return np.minimum(x, ub)


# ---------------------------------------------------------------- KL divergences


def kl_categorical(q, p):
    """``KL(q || p)`` along the last axis; ``p`` floored at 1e-12 inside the log."""
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    logq = np.log(np.maximum(q, PROB_FLOOR))
    logp = np.log(np.maximum(p, PROB_FLOOR))
    return np.sum(np.where(q > 0, q * (logq - logp), 0.0), axis=-1)


def kl_categorical_grad(q, p):
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    logq = np.log(np.maximum(q, PROB_FLOOR))
    logp = np.log(np.maximum(p, PROB_FLOOR))
    dq = np.where(q > 0, logq - logp + 1.0, 0.0)
    dp = np.where(p > PROB_FLOOR, -q / np.maximum(p, PROB_FLOOR), 0.0)
    return dq, dp


def kl_gaussian(q, p):
    """``KL(N(q) || N(p))`` for ``[..., 2]`` arrays of ``(mean, std)`` rows."""
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    mq, sq = q[..., 0], q[..., 1]
    mp, sp = p[..., 0], p[..., 1]
    return np.log(sp / sq) + (sq * sq + (mq - mp) ** 2) / (2.0 * sp * sp) - 0.5


def kl_gaussian_grad(q, p):
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    mq, sq = q[..., 0], q[..., 1]
    mp, sp = p[..., 0], p[..., 1]
    d = mq - mp
    var_p = sp * sp
    gq = np.empty_like(q)
    gp = np.empty_like(p)
    gq[..., 0] = d / var_p
    gq[..., 1] = -1.0 / sq + sq / var_p
    gp[..., 0] = -d / var_p
    gp[..., 1] = 1.0 / sp - (sq * sq + d * d) / (var_p * sp)
    return gq, gp


def max_relative_error(a, b, floor: float = 1e-8) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def finite_difference(fn, x: np.ndarray, index, h: float = 1e-5) -> float:
    """Central difference of scalar ``fn()`` w.r.t. ``x[index]`` (mutated and restored)."""
    orig = x[index]
    x[index] = orig + h
    fp = fn()
    x[index] = orig - h
    fm = fn()
    x[index] = orig
    return (fp - fm) / (2.0 * h)


def as_param_dict(prefix: str, net: DenseNet, out: Optional[dict] = None) -> dict:
    out = {} if out is None else out
    for k, v in net.params.items():
        out[f"{prefix}.{k}"] = v
    return out
