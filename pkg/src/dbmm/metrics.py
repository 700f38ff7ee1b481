"""Evaluation statistics for beliefs against hidden states.

Every function flattens its inputs, so a whole evaluation (many trials of
many steps) can be passed as one stacked array.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import stats
from scipy.special import ndtr

from .autodiff import kl_gaussian
from .core import CategoricalBelief, GaussianBelief, InsufficientData, ShapeError

PROB_FLOOR = 1e-12
RELIABILITY_GRID = np.round(np.arange(101) * 0.01, 2)


@dataclass
class MetricReport:
    name: str
    values: List[float] = field(default_factory=list)
    per_class: Optional[np.ndarray] = None

    def __post_init__(self):
        if not all(np.isfinite(v) for v in self.values):
            raise ValueError(f"metric {self.name} has non-finite values")


@dataclass(frozen=True)
class ReliabilityCurve:
    grid: np.ndarray
    cdf: np.ndarray
    ks: float
    n: int


def _categorical_rows(beliefs) -> np.ndarray:
    if isinstance(beliefs, np.ndarray):
        arr = beliefs
    else:
        arr = np.array([b.probs if isinstance(b, CategoricalBelief) else np.asarray(b) for b in beliefs])
    arr = np.asarray(arr, dtype=np.float64)
    return arr.reshape(-1, arr.shape[-1])


def _gaussian_rows(beliefs) -> np.ndarray:
    if isinstance(beliefs, np.ndarray):
        arr = beliefs
    else:
        arr = np.array([[b.mean, b.std] if isinstance(b, GaussianBelief) else b for b in beliefs])
    arr = np.asarray(arr, dtype=np.float64)
    return arr.reshape(-1, 2)


def _flat(x) -> np.ndarray:
    return np.asarray(x).reshape(-1)


def _check_len(a, b):
    if len(a) != len(b):
        raise ShapeError(f"length mismatch: {len(a)} vs {len(b)}")


def cross_entropy(beliefs, states) -> float:
    """Mean of ``-log b_t[s_t]`` with probabilities floored at 1e-12."""
    p = _categorical_rows(beliefs)
    s = _flat(states).astype(np.int64)
    _check_len(p, s)
    return float(-np.mean(np.log(np.maximum(p[np.arange(len(s)), s], PROB_FLOOR))))


def kl_to_onehot(beliefs, states) -> float:
    """KL from the point mass on the realised state; this equals the cross-entropy."""
    return cross_entropy(beliefs, states)


def mca(beliefs, states, n_classes: int):
    """Per-class accuracy of the belief argmax.

    Returns
    -------
    acc : array (n_classes,)
        NaN where a class never occurs.
    counts : array (n_classes,)
    """
    p = _categorical_rows(beliefs)
    s = _flat(states).astype(np.int64)
    _check_len(p, s)
    pred = np.argmax(p, axis=1)   # first maximum on ties
    counts = np.bincount(s, minlength=n_classes)
    hits = np.bincount(s[pred == s], minlength=n_classes)
    with np.errstate(invalid="ignore", divide="ignore"):
        acc = np.where(counts > 0, hits / np.maximum(counts, 1), np.nan)
    return acc, counts


def mse(estimates, states) -> float:
    x, s = _flat(estimates).astype(np.float64), _flat(states).astype(np.float64)
    _check_len(x, s)
    return float(np.mean((x - s) ** 2))


def kl_gaussian_sequence(pred, truth) -> float:
    """Mean closed-form KL(pred_t || truth_t)."""
    p, q = _gaussian_rows(pred), _gaussian_rows(truth)
    _check_len(p, q)
    return float(np.mean(kl_gaussian(p, q)))


def pit_values(beliefs, states) -> np.ndarray:
    g = _gaussian_rows(beliefs)
    s = _flat(states).astype(np.float64)
    _check_len(g, s)
    return ndtr((s - g[:, 0]) / g[:, 1])


def reliability_curve(beliefs, states) -> ReliabilityCurve:
    """Empirical CDF of the probability-integral-transform values on a 0.01 grid.

    ``ks`` is the exact Kolmogorov-Smirnov distance between that empirical
    CDF and the uniform CDF (the diagonal).
    """
    u = pit_values(beliefs, states)
    if u.size < 10:
        raise InsufficientData(f"need at least 10 belief/state pairs, got {u.size}")
    u_sorted = np.sort(u)
    cdf = np.searchsorted(u_sorted, RELIABILITY_GRID, side="right") / u.size
    ks = float(stats.kstest(u, "uniform").statistic)
    return ReliabilityCurve(RELIABILITY_GRID.copy(), cdf, ks, int(u.size))


def best_permutation(beliefs, states, n_classes: Optional[int] = None):
    """Relabelling of belief columns that minimises the cross-entropy.

    Learned latent states are only defined up to a permutation of labels;
    ``perm[j]`` is the belief column that plays the role of true state ``j``.
    Brute force over all ``n!`` orders, so only for small state spaces.
    """
    p = _categorical_rows(beliefs)
    s = _flat(states).astype(np.int64)
    _check_len(p, s)
    n = n_classes or p.shape[1]
    if n > 8:
        raise ValueError("brute-force alignment is limited to 8 classes")
    logp = np.log(np.maximum(p, PROB_FLOOR))
    # totals[j, k]: summed log-prob of column k over steps whose true state is j
    totals = np.zeros((n, n))
    np.add.at(totals, s, logp)
    best, best_score = None, -np.inf
    for perm in itertools.permutations(range(n)):
        score = totals[np.arange(n), perm].sum()
        if score > best_score:
            best, best_score = perm, score
    return np.array(best)


def aligned_cross_entropy(beliefs, states):
    """Cross-entropy after :func:`best_permutation`; returns ``(ce, perm)``."""
    p = _categorical_rows(beliefs)
    perm = best_permutation(p, states)
    return cross_entropy(p[:, perm], states), perm
