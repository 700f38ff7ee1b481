"""Railway track maintenance benchmark.

Hidden track condition ``s`` (4 classes), actions do-nothing / minor repair /
major repair, and a non-positive condition signal ``z`` generated by an
autoregressive truncated Student's t process:

* ``t = 0``: ``z ~ TS(mu[s], sigma[s], nu[s], ub=0)``
* do-nothing: ``z - z_prev ~ TS(mu_d[s], sigma_d[s], nu_d[s], ub=-z_prev)``
* repair ``a``: ``z ~ TS(k[a] * z_prev + mu_r[s], sigma_r[s], nu_r[s], ub=0)``

Parameters are read from a JSON file; ``data/railway_default.json`` ships
illustrative placeholders.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import CategoricalBelief, ConfigError, DegenerateBelief
from .discrete import _draw
from .truncated import ts_log_pdf, ts_sample

FORMAT_VERSION = 1


@dataclass(frozen=True)
class TSParams:
    mu: np.ndarray
    sigma: np.ndarray
    nu: np.ndarray


@dataclass(frozen=True)
class RailwayModelConfig:
    transition: np.ndarray          # (A, S, S)
    initial: TSParams
    deterioration: TSParams
    repair: TSParams
    repair_k: np.ndarray            # one coefficient per repair action (actions 1..A-1)
    initial_belief: CategoricalBelief

    @property
    def n_states(self) -> int:
        return self.transition.shape[1]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[0]

    def to_dict(self) -> dict:
        def ts(p):
            return {"mu": p.mu.tolist(), "sigma": p.sigma.tolist(), "nu": p.nu.tolist()}
        return {
            "format_version": FORMAT_VERSION,
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "initial_belief": self.initial_belief.probs.tolist(),
            "transition": self.transition.tolist(),
            "initial": ts(self.initial),
            "deterioration": ts(self.deterioration),
            "repair": {"k": self.repair_k.tolist(), **ts(self.repair)},
        }


def _ts_block(d: dict, where: str, n: int) -> TSParams:
    try:
        mu, sigma, nu = (np.asarray(d[k], dtype=np.float64) for k in ("mu", "sigma", "nu"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: needs numeric 'mu', 'sigma', 'nu' lists ({exc})") from None
    for name, arr in (("mu", mu), ("sigma", sigma), ("nu", nu)):
        if arr.shape != (n,) or not np.all(np.isfinite(arr)):
            raise ConfigError(f"{where}.{name}: expected {n} finite values, got {arr.tolist()}")
    if np.any(sigma <= 0):
        raise ConfigError(f"{where}.sigma: all entries must be > 0")
    if np.any(nu <= 2):
        raise ConfigError(f"{where}.nu: all entries must be > 2")
    return TSParams(mu, sigma, nu)


def railway_config_from_dict(d: dict) -> RailwayModelConfig:
    if not isinstance(d, dict):
        raise ConfigError("railway config must be a JSON object")
    version = d.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ConfigError(f"format_version: unsupported value {version!r}")
    try:
        P = np.asarray(d["transition"], dtype=np.float64)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"transition: missing or malformed ({exc})") from None
    if P.ndim != 3 or P.shape[1] != P.shape[2]:
        raise ConfigError(f"transition: expected (A, S, S) nested lists, got shape {P.shape}")
    n_actions, n_states = P.shape[0], P.shape[1]
    if d.get("n_states", n_states) != n_states or d.get("n_actions", n_actions) != n_actions:
        raise ConfigError("n_states / n_actions disagree with the transition array")
    if n_actions < 2:
        raise ConfigError("transition: need a do-nothing action and at least one repair action")
    if np.any(P < 0) or np.any(P > 1):
        raise ConfigError("transition: entries must lie in [0, 1]")
    bad = np.argwhere(np.abs(P.sum(axis=-1) - 1.0) > 1e-9)
    if bad.size:
        a, s = bad[0]
        raise ConfigError(f"transition[{a}][{s}]: row sums to {P[a, s].sum()!r}, not 1")
    for key in ("initial", "deterioration", "repair"):
        if key not in d:
            raise ConfigError(f"{key}: missing block")
    initial = _ts_block(d["initial"], "initial", n_states)
    det = _ts_block(d["deterioration"], "deterioration", n_states)
    rep = _ts_block(d["repair"], "repair", n_states)
    k = np.asarray(d["repair"].get("k", []), dtype=np.float64)
    if k.shape != (n_actions - 1,):
        raise ConfigError(f"repair.k: expected {n_actions - 1} coefficients, got {k.tolist()}")
    try:
        b0 = CategoricalBelief(np.asarray(d.get("initial_belief", np.full(n_states, 1.0 / n_states))))
    except Exception as exc:
        raise ConfigError(f"initial_belief: {exc}") from None
    if b0.n != n_states:
        raise ConfigError(f"initial_belief: expected {n_states} entries")
    return RailwayModelConfig(P, initial, det, rep, k, b0)


def load_railway_config(path: Optional[str | Path] = None) -> RailwayModelConfig:
    """Load and validate a railway parameter file (the packaged default if ``path`` is None)."""
    if path is None:
        text = resources.files("dbmm.data").joinpath("railway_default.json").read_text()
        where = "railway_default.json"
    else:
        where = str(path)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{where}: cannot read ({exc})") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{where}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return railway_config_from_dict(d)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _obs_params(config: RailwayModelConfig, state, z_prev: float, t: int, action: Optional[int]):
    """(loc, scale, dof, upper bound, offset) of the TS law of z for each candidate state.

    The draw is ``z = offset + TS(loc, scale, dof, ub)``.
    """
    s = np.asarray(state)
    if t == 0:
        p = config.initial
        return p.mu[s], p.sigma[s], p.nu[s], 0.0, 0.0
    if action == 0:
        p = config.deterioration
        return p.mu[s], p.sigma[s], p.nu[s], -z_prev, z_prev
    if action is None or not 0 < action < config.n_actions:
        raise IndexError(f"action {action} out of range")
    p = config.repair
    loc = config.repair_k[action - 1] * z_prev + p.mu[s]
    return loc, p.sigma[s], p.nu[s], 0.0, 0.0


def railway_obs_log_likelihood(z: float, z_prev: float, t: int, action: Optional[int],
                               config: RailwayModelConfig, states=None) -> np.ndarray:
    """``log p(z | s, z_prev, a)`` for every state (or the given ones)."""
    states = np.arange(config.n_states) if states is None else states
    loc, scale, dof, ub, offset = _obs_params(config, states, z_prev, t, action)
    return np.asarray(ts_log_pdf(z - offset, loc, scale, dof, ub))


def railway_reset(config: RailwayModelConfig, rng):
    state = _draw(config.initial_belief.probs, rng)
    return railway_step(state, 0.0, 0, None, config, rng)


def railway_step(state: int, z_prev: float, t: int, action: Optional[int], config: RailwayModelConfig, rng):
    """Sample ``(s_t, z_t)``. At ``t = 0`` the state is kept and ``action`` is ignored."""
    if t > 0:
        if z_prev > 0:
            raise ValueError(f"z_prev must be <= 0, got {z_prev}")
        if action is None or not 0 <= action < config.n_actions:
            raise IndexError(f"action {action} out of range")
        state = _draw(config.transition[action, state], rng)
    loc, scale, dof, ub, offset = _obs_params(config, state, z_prev, t, action)
    z = offset + ts_sample(loc, scale, dof, ub, rng)
    return int(state), float(min(z, 0.0))


def railway_exact_belief_update(b, action: Optional[int], z: float, z_prev: float, t: int,
                                config: RailwayModelConfig) -> CategoricalBelief:
    """Bayes filter step with the truncated Student's t likelihood.

    At ``t = 0`` ``b`` is taken as the prior directly (no propagation).
    """
    probs = b.probs if isinstance(b, CategoricalBelief) else np.asarray(b, dtype=np.float64)
    prior = probs if t == 0 else probs @ config.transition[action]
    loglik = railway_obs_log_likelihood(z, z_prev, t, action, config)
    with np.errstate(divide="ignore"):
        logw = np.log(prior) + loglik
    m = np.max(logw)
    if not np.isfinite(m):
        raise DegenerateBelief(f"observation {z} has zero likelihood under the prior")
    w = np.exp(logw - m)
    p = w / w.sum()
    return CategoricalBelief(p / p.sum())


class RailwayEnv:
    def __init__(self, config: RailwayModelConfig):
        self.config = config
        self.state: Optional[int] = None
        self.z: Optional[float] = None
        self.belief: Optional[CategoricalBelief] = None
        self.t = 0

    def reset(self, rng) -> float:
        self.t = 0
        self.state, self.z = railway_reset(self.config, rng)
        self.belief = railway_exact_belief_update(self.config.initial_belief, None, self.z, 0.0, 0, self.config)
        return self.z

    def step(self, action: int, rng) -> float:
        self.t += 1
        z_prev = self.z
        self.state, self.z = railway_step(self.state, z_prev, self.t, int(action), self.config, rng)
        self.belief = railway_exact_belief_update(self.belief, int(action), self.z, z_prev, self.t, self.config)
        return self.z

    def true_state_and_belief(self):
        return self.state, self.belief
