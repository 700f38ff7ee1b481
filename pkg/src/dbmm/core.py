"""Shared belief types, seeded random streams and small numerical helpers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

BELIEF_TOL = 1e-9


class DBMMError(Exception):
    """Base class for package errors."""


class DegenerateBelief(DBMMError):
    pass


class EmptyInput(DBMMError):
    pass


class ShapeError(DBMMError, ValueError):
    pass


class ConfigError(DBMMError, ValueError):
    pass


class InsufficientData(DBMMError, ValueError):
    pass


@dataclass(frozen=True)
class CategoricalBelief:
    """Probability vector over a finite state space."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ShapeError(f"belief must be a non-empty vector, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or np.any(p < -BELIEF_TOL) or np.any(p > 1 + BELIEF_TOL):
            raise DegenerateBelief(f"belief entries outside [0, 1]: {p}")
        if abs(p.sum() - 1.0) > BELIEF_TOL:
            raise DegenerateBelief(f"belief sums to {p.sum()!r}, not 1")
        p = np.clip(p, 0.0, 1.0)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def n(self) -> int:
        return self.probs.size

    @classmethod
    def uniform(cls, n: int) -> "CategoricalBelief":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point(cls, index: int, n: int) -> "CategoricalBelief":
        return cls(one_hot(index, n))


@dataclass(frozen=True)
class GaussianBelief:
    """Normal belief over a scalar state, parameterised by mean and standard deviation."""

    mean: float
    std: float

    def __post_init__(self):
        mean, std = float(self.mean), float(self.std)
        if not (np.isfinite(mean) and np.isfinite(std)):
            raise DegenerateBelief(f"non-finite Gaussian belief ({mean}, {std})")
        if std <= 0.0:
            raise DegenerateBelief(f"Gaussian belief std must be positive, got {std}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


@dataclass(frozen=True)
class DiscreteAction:
    index: int
    n: int

    def __post_init__(self):
        if not 0 <= int(self.index) < int(self.n):
            raise IndexError(f"action {self.index} outside [0, {self.n})")


@dataclass(frozen=True)
class ContinuousAction:
    value: float

    def __post_init__(self):
        if not 0.0 <= float(self.value) <= 1.0:
            raise ValueError(f"continuous action must lie in [0, 1], got {self.value}")


@dataclass
class Trial:
    """One rollout: ``T + 1`` observations and states, ``T`` actions.

    Beliefs are stored as arrays: ``(T + 1, |S|)`` probability rows for
    categorical beliefs or ``(T + 1, 2)`` ``[mean, std]`` rows for Gaussian ones.
    """

    observations: np.ndarray
    actions: np.ndarray
    true_states: Optional[np.ndarray]
    seed: int = 0
    true_beliefs: Optional[np.ndarray] = None
    predicted_beliefs: Optional[np.ndarray] = None

    def __post_init__(self):
        self.observations = np.asarray(self.observations)
        self.actions = np.asarray(self.actions)
        n_obs = len(self.observations)
        if self.true_states is not None:
            self.true_states = np.asarray(self.true_states)
        n_states = n_obs if self.true_states is None else len(self.true_states)
        if len(self.actions) != n_obs - 1 or n_states != n_obs:
            raise ShapeError(
                f"inconsistent trial lengths: {n_obs} observations, "
                f"{len(self.actions)} actions, {n_states} states"
            )
        for name in ("true_beliefs", "predicted_beliefs"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=np.float64)
                if len(arr) != n_obs:
                    raise ShapeError(f"{name} has length {len(arr)}, expected {n_obs}")
                setattr(self, name, arr)

    @property
    def horizon(self) -> int:
        return len(self.actions)

    def to_dict(self) -> dict:
        out = {
            "seed": int(self.seed),
            "observations": self.observations.tolist(),
            "actions": self.actions.tolist(),
            "true_states": None if self.true_states is None else self.true_states.tolist(),
        }
        if self.true_beliefs is not None:
            out["true_beliefs"] = self.true_beliefs.tolist()
        if self.predicted_beliefs is not None:
            out["predicted_beliefs"] = self.predicted_beliefs.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Trial":
        return cls(
            observations=np.asarray(d["observations"]),
            actions=np.asarray(d["actions"]),
            true_states=None if d.get("true_states") is None else np.asarray(d["true_states"]),
            seed=int(d.get("seed", 0)),
            true_beliefs=None if d.get("true_beliefs") is None else np.asarray(d["true_beliefs"]),
            predicted_beliefs=None
            if d.get("predicted_beliefs") is None
            else np.asarray(d["predicted_beliefs"]),
        )


_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Addressable random stream.

    A ``(seed, stream)`` pair always maps to the same generator state, so
    trial ``k`` of evaluation ``i`` can be replayed without running the
    trials before it.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream", int(self.stream) & _MASK64)

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))

    def split(self, child_id: int) -> "RngStream":
        return split_stream(self, child_id)


def split_stream(parent: RngStream, child_id: int) -> RngStream:
    """Derive an independent child stream from ``parent`` and ``child_id``."""
    ss = np.random.SeedSequence(entropy=[parent.seed, parent.stream, int(child_id) & _MASK64])
    child = int(ss.generate_state(2, np.uint64)[0])
    return RngStream(parent.seed, child)


def normalize(weights) -> CategoricalBelief:
    """Rescale a nonnegative weight vector onto the simplex."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise DegenerateBelief(f"cannot normalise array of shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise DegenerateBelief(f"weights must be finite and nonnegative: {w}")
    total = w.sum()
    if total <= 0.0:
        raise DegenerateBelief("all-zero weights")
    p = w / total
    # one more pass absorbs the rounding from the first division
    return CategoricalBelief(p / p.sum())


def normalize_rows(w: np.ndarray) -> np.ndarray:
    """Vectorised row normalisation; raises on any zero row."""
    w = np.asarray(w, dtype=np.float64)
    total = w.sum(axis=-1, keepdims=True)
    if np.any(~np.isfinite(total)) or np.any(total <= 0.0):
        raise DegenerateBelief("zero or non-finite normaliser in row normalisation")
    return w / total


def log_sum_exp(xs: Sequence[float] | np.ndarray, axis=None) -> float | np.ndarray:
    x = np.asarray(xs, dtype=np.float64)
    if x.size == 0:
        raise EmptyInput("log_sum_exp of an empty array")
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def one_hot(index: int, n: int) -> np.ndarray:
    if not 0 <= index < n:
        raise IndexError(f"index {index} out of range for one_hot of size {n}")
    v = np.zeros(n)
    v[index] = 1.0
    return v


def one_hot_rows(indices, n: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    if np.any(idx < 0) or np.any(idx >= n):
        raise IndexError(f"indices out of range for one_hot of size {n}")
    return np.eye(n)[idx]
