"""Discrete-state bridge maintenance POMDP and its exact Bayes filter."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import CategoricalBelief, DegenerateBelief, ShapeError, normalize

# Actions: 0 do-nothing, 1 minor repair, 2 major repair, 3 replace.
# States run from 0 (intact) to 4 (failed); observations 0..2.
BRIDGE_TRANSITIONS = np.array([
    [[0.80, 0.13, 0.02, 0.00, 0.05],
     [0.00, 0.70, 0.17, 0.05, 0.08],
     [0.00, 0.00, 0.75, 0.15, 0.10],
     [0.00, 0.00, 0.00, 0.60, 0.40],
     [0.00, 0.00, 0.00, 0.00, 1.00]],
    [[0.80, 0.13, 0.02, 0.00, 0.05],
     [0.00, 0.80, 0.10, 0.02, 0.08],
     [0.00, 0.00, 0.80, 0.10, 0.10],
     [0.00, 0.00, 0.00, 0.60, 0.40],
     [0.00, 0.00, 0.00, 0.00, 1.00]],
    [[0.80, 0.13, 0.02, 0.00, 0.05],
     [0.19, 0.65, 0.08, 0.02, 0.06],
     [0.10, 0.20, 0.56, 0.08, 0.06],
     [0.00, 0.10, 0.25, 0.55, 0.10],
     [0.00, 0.00, 0.00, 0.00, 1.00]],
    [[0.80, 0.13, 0.02, 0.00, 0.05],
     [0.80, 0.13, 0.02, 0.00, 0.05],
     [0.80, 0.13, 0.02, 0.00, 0.05],
     [0.80, 0.13, 0.02, 0.00, 0.05],
     [0.80, 0.13, 0.02, 0.00, 0.05]],
])

BRIDGE_OBSERVATIONS = np.array([
    [0.80, 0.20, 0.00],
    [0.20, 0.60, 0.20],
    [0.05, 0.70, 0.25],
    [0.00, 0.30, 0.70],
    [0.00, 0.00, 1.00],
])


def _check_stochastic(m: np.ndarray, name: str) -> None:
    if np.any(m < 0) or np.any(m > 1) or not np.allclose(m.sum(axis=-1), 1.0, rtol=0, atol=1e-9):
        raise ShapeError(f"{name} rows must be probability vectors")


@dataclass(frozen=True)
class DiscretePOMDPModel:
    """Tabular POMDP.

    ``transition[a, s, s']`` is ``p(s' | s, a)``; ``observation[s, o]`` is
    ``p(o | s)`` and does not depend on the action.
    """

    transition: np.ndarray
    observation: np.ndarray
    initial_belief: CategoricalBelief

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=np.float64)
        O = np.asarray(self.observation, dtype=np.float64)
        if P.ndim != 3 or P.shape[1] != P.shape[2]:
            raise ShapeError(f"transition must be (A, S, S), got {P.shape}")
        if O.ndim != 2 or O.shape[0] != P.shape[1]:
            raise ShapeError(f"observation must be (S, O), got {O.shape}")
        _check_stochastic(P, "transition")
        _check_stochastic(O, "observation")
        if self.initial_belief.n != P.shape[1]:
            raise ShapeError("initial belief size does not match state count")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "observation", O)

    @property
    def n_states(self) -> int:
        return self.transition.shape[1]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[0]

    @property
    def n_obs(self) -> int:
        return self.observation.shape[1]


def bridge_model(initial_belief: Optional[CategoricalBelief] = None) -> DiscretePOMDPModel:
    """The 5-state / 4-action / 3-observation bridge benchmark (starts intact by default)."""
    if initial_belief is None:
        initial_belief = CategoricalBelief.point(0, 5)
    return DiscretePOMDPModel(BRIDGE_TRANSITIONS, BRIDGE_OBSERVATIONS, initial_belief)


def _draw(p: np.ndarray, rng) -> int:
    # inverse-CDF draw; one uniform per call keeps streams easy to reason about
    c = np.cumsum(p)
    return int(min(np.searchsorted(c, rng.uniform() * c[-1], side="right"), len(p) - 1))


def discrete_reset(model: DiscretePOMDPModel, rng):
    state = _draw(model.initial_belief.probs, rng)
    obs = _draw(model.observation[state], rng)
    return state, obs


def discrete_step(model: DiscretePOMDPModel, state: int, action: int, rng):
    if not 0 <= state < model.n_states:
        raise IndexError(f"state {state} out of range")
    if not 0 <= action < model.n_actions:
        raise IndexError(f"action {action} out of range")
    nxt = _draw(model.transition[action, state], rng)
    return nxt, _draw(model.observation[nxt], rng)


def _probs(b) -> np.ndarray:
    return b.probs if isinstance(b, CategoricalBelief) else np.asarray(b, dtype=np.float64)


def exact_belief_propagate(b, action: int, model: DiscretePOMDPModel) -> CategoricalBelief:
    """Prior for the next step: ``b @ P[action]``."""
    return normalize(_probs(b) @ model.transition[action])


def exact_belief_update(b, action: int, observation: int, model: DiscretePOMDPModel) -> CategoricalBelief:
    """Bayes filter step: propagate through ``P[action]``, reweight by ``O[:, observation]``."""
    prior = _probs(b) @ model.transition[action]
    post = prior * model.observation[:, observation]
    if post.sum() <= 0.0:
        raise DegenerateBelief(f"observation {observation} has zero probability under the prior")
    return normalize(post)


def exact_initial_belief(observation: int, model: DiscretePOMDPModel) -> CategoricalBelief:
    post = model.initial_belief.probs * model.observation[:, observation]
    if post.sum() <= 0.0:
        raise DegenerateBelief(f"observation {observation} impossible under the initial belief")
    return normalize(post)


def hmm_log_likelihood(observations, actions, model: DiscretePOMDPModel) -> float:
    """Forward-algorithm ``log p(o_0..o_T | a_0..a_{T-1})``."""
    alpha = model.initial_belief.probs * model.observation[:, observations[0]]
    total = np.log(alpha.sum())
    alpha = alpha / alpha.sum()
    for a, o in zip(actions, observations[1:]):
        alpha = (alpha @ model.transition[a]) * model.observation[:, o]
        eta = alpha.sum()
        total += np.log(eta)
        alpha = alpha / eta
    return float(total)


class DiscreteEnv:
    """Stateful simulator that also tracks the exact belief."""

    def __init__(self, model: DiscretePOMDPModel):
        self.model = model
        self.state: Optional[int] = None
        self.belief: Optional[CategoricalBelief] = None
        self.t = 0

    def reset(self, rng) -> int:
        self.state, obs = discrete_reset(self.model, rng)
        self.belief = exact_initial_belief(obs, self.model)
        self.t = 0
        return obs

    def step(self, action: int, rng) -> int:
        self.state, obs = discrete_step(self.model, self.state, int(action), rng)
        self.belief = exact_belief_update(self.belief, int(action), obs, self.model)
        self.t += 1
        return obs

    def true_state_and_belief(self):
        return self.state, self.belief
