"""Deep Belief Markov Model.

Three one-hidden-layer networks:

* ``omega`` -- belief transition: (posterior belief, action) -> prior belief
* ``psi``   -- belief inference: (prior belief, observation) -> posterior belief
* ``kappa`` -- observation model: state -> observation distribution

plus a learnable prior on the initial state. Beliefs are probability
vectors in the ``discrete`` and ``railway`` modes and ``(mean, std)`` pairs
in the ``gaussian`` mode.

The training objective summed over ``t = 0..T`` is::

    E_{q_t}[log p_kappa(o_t | s)] - KL(q_t || omega(q_{t-1}, a_{t-1}))

with ``q_t = psi(omega(q_{t-1}, a_{t-1}), o_t)`` and the learnable initial
prior in place of ``omega(...)`` at ``t = 0``. The KL's second argument is
produced by the same ``omega`` that drives inference. Expectations are
enumerated exactly over states for categorical beliefs and estimated with
reparameterised draws for Gaussian beliefs.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .checkpoint import config_hash, load_params, save_params
from .core import (
    CategoricalBelief,
    ConfigError,
    DBMMError,
    GaussianBelief,
    ShapeError,
    Trial,
)

log = logging.getLogger(__name__)

MODES = ("discrete", "gaussian", "railway")
_NET_NAMES = ("omega", "psi", "kappa")
ANCHOR_STD_BIAS = -5.0    # softplus(-5) + 1e-4 ~= 0.0068


class NonFiniteLoss(DBMMError, FloatingPointError):
    pass


class NoImprovement(UserWarning):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 30
    batch_size: int = 10
    mc_samples: int = 1
    clip_norm: float = 10.0
    seed: int = 0
    kl_warmup: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size <= 0 or self.mc_samples <= 0 or self.clip_norm <= 0:
            raise ConfigError(f"training hyper-parameters must be positive: {self}")
        if self.epochs < 0 or self.kl_warmup < 0:
            raise ConfigError("epochs must be >= 0")


@dataclass
class TrainReport:
    initial_loss: float
    final_loss: float
    epoch_losses: List[float] = field(default_factory=list)
    steps: int = 0


# ---------------------------------------------------------------- belief families


class _Categorical:
    @staticmethod
    def head(raw):
        return ad.softmax(raw)

    @staticmethod
    def head_vjp(raw, belief, g):
        return ad.softmax_vjp(belief, g)

    kl = staticmethod(ad.kl_categorical)
    kl_grad = staticmethod(ad.kl_categorical_grad)


class _Gaussian:
    @staticmethod
    def head(raw):
        return ad.gaussian_head(raw)

    @staticmethod
    def head_vjp(raw, belief, g):
        return ad.gaussian_head_vjp(raw, g)

    kl = staticmethod(ad.kl_gaussian)
    kl_grad = staticmethod(ad.kl_gaussian_grad)


# ---------------------------------------------------------------- observation models
#
# Each emission exposes forward(kappa, q, t, data, noise) -> (value (B,), cache)
# and backward(kappa, cache, g (B,), grads) -> dvalue/dq (B, dim), accumulating
# kappa's parameter gradients into ``grads``.


class _TableEmission:
    """Categorical observations; kappa maps a one-hot state to observation logits."""

    def __init__(self, n_states):
        self.eye = np.eye(n_states)

    def prepare(self, kappa):
        raw, tape = kappa.forward(self.eye)
        logp = ad.log_softmax(raw)
        return {"tape": tape, "logp": logp, "g": np.zeros_like(logp)}

    def forward(self, kappa, ctx, q, t, data, noise):
        o = data["obs"][:, t].astype(np.int64)
        ll = ctx["logp"][:, o].T                    # (B, S)
        return np.sum(q * ll, axis=1), (o, ll, q)

    def backward(self, kappa, ctx, cache, g):
        o, ll, q = cache
        np.add.at(ctx["g"].T, o, g[:, None] * q)
        return g[:, None] * ll

    def finish(self, kappa, ctx, grads):
        graw = ad.log_softmax_vjp(ctx["logp"], ctx["g"])
        _accumulate(grads, "kappa", kappa.backward(ctx["tape"], graw))


class _GaussianEmission:
    """Gaussian observations; kappa maps a sampled scalar state to (mean, std).

    With ``anchored`` kappa outputs only the (raw) std and the observation
    mean is the state itself, so the latent lives on the observation scale.
    """

    def __init__(self, anchored=False):
        self.anchored = anchored

    def prepare(self, kappa):
        return {}

    def _raw2(self, raw):
        return np.concatenate([np.zeros_like(raw), raw], axis=1) if self.anchored else raw

    def forward(self, kappa, ctx, q, t, data, noise):
        o = data["obs"][:, t]
        eps = noise[:, t, :]                        # (B, M)
        s = ad.gaussian_rsample(q[:, :1], q[:, 1:2], eps)
        raw, tape = kappa.forward(s.reshape(-1, 1))
        raw = self._raw2(raw)
        par = ad.gaussian_head(raw)
        B, M = eps.shape
        mu = s if self.anchored else par[:, 0].reshape(B, M)
        sd = par[:, 1].reshape(B, M)
        ll = ad.gaussian_log_prob(o[:, None], mu, sd)
        return ll.mean(axis=1), (tape, raw, eps, o, mu, sd)

    def backward(self, kappa, ctx, cache, g):
        tape, raw, eps, o, mu, sd = cache
        B, M = eps.shape
        _, dmu, dsd = ad.gaussian_log_prob_grad(o[:, None], mu, sd)
        w = (g / M)[:, None]
        gpar = np.stack([(w * dmu).ravel(), (w * dsd).ravel()], axis=1)
        graw = ad.gaussian_head_vjp(raw, gpar)
        if self.anchored:
            graw = graw[:, 1:]
        grad = kappa.backward(tape, graw)
        _accumulate(ctx.setdefault("grads", {}), "kappa", grad)
        ds = grad.x.reshape(B, M)
        if self.anchored:
            ds = ds + w * dmu
        return np.stack([ds.sum(axis=1), (ds * eps).sum(axis=1)], axis=1)

    def finish(self, kappa, ctx, grads):
        for k, v in ctx.get("grads", {}).items():
            grads[k] += v


class _RailwayEmission:
    """Autoregressive truncated-normal observations with upper bound 0.

    kappa input: (one-hot state, one-hot previous action, previous
    observation). At ``t = 0`` the action block is all zeros and the
    previous observation is 0, which marks the initial-condition case.
    """

    def __init__(self, n_states, n_actions):
        self.S, self.A = n_states, n_actions

    def prepare(self, kappa):
        return {}

    def _inputs(self, data, t):
        B = data["obs"].shape[0]
        S, A = self.S, self.A
        x = np.zeros((B, S, S + A + 1))
        x[:, :, :S] = np.eye(S)
        if t > 0:
            a = data["act"][:, t - 1].astype(np.int64)
            x[np.arange(B), :, S + a] = 1.0
            x[:, :, -1] = data["obs"][:, t - 1][:, None]
        return x.reshape(B * S, S + A + 1)

    def forward(self, kappa, ctx, q, t, data, noise):
        z = data["obs"][:, t]
        raw, tape = kappa.forward(self._inputs(data, t))
        par = ad.gaussian_head(raw)
        B = z.shape[0]
        mu = par[:, 0].reshape(B, self.S)
        sd = par[:, 1].reshape(B, self.S)
        ll = ad.trunc_normal_log_prob(z[:, None], mu, sd, 0.0)
        return np.sum(q * ll, axis=1), (tape, raw, z, mu, sd, ll, q)

    def backward(self, kappa, ctx, cache, g):
        tape, raw, z, mu, sd, ll, q = cache
        dmu, dsd = ad.trunc_normal_log_prob_grad(z[:, None], mu, sd, 0.0)
        w = g[:, None] * q
        gpar = np.stack([(w * dmu).ravel(), (w * dsd).ravel()], axis=1)
        _accumulate(ctx.setdefault("grads", {}), "kappa",
                    kappa.backward(tape, ad.gaussian_head_vjp(raw, gpar)))
        return g[:, None] * ll

    def finish(self, kappa, ctx, grads):
        for k, v in ctx.get("grads", {}).items():
            grads[k] += v


def _accumulate(grads: dict, prefix: str, grad: ad.Gradient) -> None:
    for k, v in grad.params().items():
        key = f"{prefix}.{k}"
        if key in grads:
            grads[key] += v
        else:
            grads[key] = v.copy()


# ---------------------------------------------------------------- the model


class DBMM:
    """Belief-transition, belief-inference and observation networks.

    Parameters
    ----------
    mode : {"discrete", "gaussian", "railway"}
    n_states, n_actions, n_obs : int
        Sizes of the finite spaces. ``n_obs`` is only used in discrete mode;
        ``n_states``/``n_actions`` are ignored in gaussian mode.
    hidden_dim : int
        Width of every hidden layer.
    seed : int
        Seeds the weight initialisation.
    zero : bool
        Start from all-zero weights (uniform / standard beliefs everywhere).
    """

    def __init__(self, mode: str, n_states: int = 0, n_actions: int = 0, n_obs: int = 0,
                 hidden_dim: int = 100, seed: int = 0, zero: bool = False, anchored: bool = False):
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        self.mode = mode
        self.hidden_dim = int(hidden_dim)
        self.anchored = bool(anchored) and mode == "gaussian"
        rng = np.random.default_rng(seed)
        if mode == "gaussian":
            self.n_states, self.n_actions, self.n_obs = 0, 0, 0
            self.belief_dim = 2
            dims = {"omega": (3, 2), "psi": (3, 2), "kappa": (1, 1 if self.anchored else 2)}
            self.family = _Gaussian
            self.emission = _GaussianEmission(anchored)
            # mean 0, std softplus(0.5413) = 1
            self.init_raw = np.array([0.0, 0.5413248546129181])
        else:
            if n_states < 2 or n_actions < 1:
                raise ConfigError("categorical modes need n_states >= 2 and n_actions >= 1")
            self.n_states, self.n_actions = int(n_states), int(n_actions)
            self.belief_dim = self.n_states
            S, A = self.n_states, self.n_actions
            if mode == "discrete":
                if n_obs < 2:
                    raise ConfigError("discrete mode needs n_obs >= 2")
                self.n_obs = int(n_obs)
                dims = {"omega": (S + A, S), "psi": (S + self.n_obs, S), "kappa": (S, self.n_obs)}
                self.emission = _TableEmission(S)
            else:
                self.n_obs = 0
                dims = {"omega": (S + A, S), "psi": (S + 2, S), "kappa": (S + A + 1, 2)}
                self.emission = _RailwayEmission(S, A)
            self.family = _Categorical
            self.init_raw = np.zeros(S)
        self.omega = ad.DenseNet(*dims["omega"], hidden_dim, rng=rng, zero=zero)
        self.psi = ad.DenseNet(*dims["psi"], hidden_dim, rng=rng, zero=zero)
        self.kappa = ad.DenseNet(*dims["kappa"], hidden_dim, rng=rng, zero=zero)
        if self.anchored and not zero:
            # start from "posterior = observation" with small spreads
            for net in (self.psi, self.kappa):
                net.W2[...] = 0.0
                net.b2[-1] = ANCHOR_STD_BIAS
        self.optimizer = ad.AdamState()

    # -- construction helpers

    @classmethod
    def for_benchmark(cls, benchmark: str, hidden_dim: int = 100, seed: int = 0, zero: bool = False,
                      n_states: int = 0, n_actions: int = 0, n_obs: int = 0,
                      anchored: bool = True) -> "DBMM":
        if benchmark == "discrete":
            return cls("discrete", n_states or 5, n_actions or 4, n_obs or 3, hidden_dim, seed, zero)
        if benchmark == "continuous":
            return cls("gaussian", hidden_dim=hidden_dim, seed=seed, zero=zero, anchored=anchored)
        if benchmark == "railway":
            return cls("railway", n_states or 4, n_actions or 3, 0, hidden_dim, seed, zero)
        raise ConfigError(f"unknown benchmark {benchmark!r}")

    # -- parameters

    def params(self) -> Dict[str, np.ndarray]:
        """Live references to every trainable array (mutating them mutates the model)."""
        out = {"init": self.init_raw}
        for name in _NET_NAMES:
            ad.as_param_dict(name, getattr(self, name), out)
        return out

    def bump(self) -> None:
        for name in _NET_NAMES:
            getattr(self, name).bump()

    def header(self) -> dict:
        return {"mode": self.mode, "n_states": self.n_states, "n_actions": self.n_actions,
                "n_obs": self.n_obs, "hidden_dim": self.hidden_dim, "anchored": self.anchored}

    def save(self, path, config: Optional[dict] = None):
        head = self.header()
        head["config_hash"] = config_hash(config) if config is not None else None
        return save_params(path, self.params(), head)

    @classmethod
    def load(cls, path) -> "DBMM":
        params, head = load_params(path)
        model = cls(head["mode"], head["n_states"], head["n_actions"], head["n_obs"],
                    head["hidden_dim"], zero=True, anchored=head.get("anchored", False))
        live = model.params()
        if set(live) != set(params):
            raise ConfigError(f"{path}: parameter names do not match a {head['mode']} model")
        for k, v in params.items():
            live[k][...] = v
        model.bump()
        return model

    def copy(self) -> "DBMM":
        other = DBMM(self.mode, self.n_states, self.n_actions, self.n_obs, self.hidden_dim, zero=True,
                     anchored=self.anchored)
        live = other.params()
        for k, v in self.params().items():
            live[k][...] = v
        other.bump()
        return other

    # -- encodings

    def _enc_action(self, a) -> np.ndarray:
        a = np.asarray(a)
        if self.mode == "gaussian":
            return a.astype(np.float64).reshape(-1, 1)
        idx = a.astype(np.int64).reshape(-1)
        if np.any(idx < 0) or np.any(idx >= self.n_actions):
            raise IndexError(f"action out of range [0, {self.n_actions})")
        return np.eye(self.n_actions)[idx]

    def _enc_obs(self, data, t) -> np.ndarray:
        obs = data["obs"]
        if self.mode == "discrete":
            idx = obs[:, t].astype(np.int64)
            if np.any(idx < 0) or np.any(idx >= self.n_obs):
                raise IndexError(f"observation out of range [0, {self.n_obs})")
            return np.eye(self.n_obs)[idx]
        if self.mode == "gaussian":
            return obs[:, t:t + 1].astype(np.float64)
        prev = obs[:, t - 1] if t > 0 else np.zeros(obs.shape[0])
        return np.stack([obs[:, t], prev], axis=1).astype(np.float64)

    def initial_prior(self) -> np.ndarray:
        return self.family.head(self.init_raw)

    # -- batched core

    def _transition(self, q, a_enc):
        raw, tape = self.omega.forward(np.concatenate([q, a_enc], axis=1))
        return raw, self.family.head(raw), tape

    def _inference(self, prior, o_enc):
        raw, tape = self.psi.forward(np.concatenate([prior, o_enc], axis=1))
        q = self.family.head(raw)
        if self.anchored:
            # posterior mean as a correction to the observation
            q[:, 0] += o_enc[:, 0]
        return raw, q, tape

    def infer_batch(self, observations, actions) -> np.ndarray:
        """Posterior beliefs for a batch of equal-length trials, shape ``(B, T + 1, dim)``."""
        data = _batch_arrays(observations, actions)
        B, T1 = data["obs"].shape
        out = np.empty((B, T1, self.belief_dim))
        prior = np.tile(self.initial_prior(), (B, 1))
        for t in range(T1):
            if t > 0:
                _, prior, _ = self._transition(q, self._enc_action(data["act"][:, t - 1]))
            _, q, _ = self._inference(prior, self._enc_obs(data, t))
            out[:, t] = q
        return out

    def elbo(self, observations, actions, rng=None, mc_samples: int = 1, noise=None,
             with_grad: bool = True, kl_weight: float = 1.0):
        """Mean negative variational bound per time step and its gradient.

        Parameters
        ----------
        observations : array (B, T + 1)
        actions : array (B, T)
        rng : numpy Generator, optional
            Source of the reparameterisation noise (gaussian mode only).
        noise : array (B, T + 1, M), optional
            Explicit standard-normal noise; overrides ``rng``.
        kl_weight : float
            Multiplier on the KL terms; below one during warm-up.

        Returns
        -------
        loss : float
        grads : dict or None
            Keyed like :meth:`params`.
        """
        data = _batch_arrays(observations, actions)
        B, T1 = data["obs"].shape
        if self.mode == "gaussian" and noise is None:
            if rng is None:
                raise ConfigError("gaussian mode needs an rng or explicit noise")
            noise = rng.standard_normal((B, T1, mc_samples))
        fam, em = self.family, self.emission
        ctx = em.prepare(self.kappa)

        init = self.initial_prior()
        prior = np.tile(init, (B, 1))
        steps = []
        total = 0.0
        for t in range(T1):
            if t > 0:
                a_enc = self._enc_action(data["act"][:, t - 1])
                raw_p, prior, tape_w = self._transition(q, a_enc)
            else:
                raw_p, tape_w = None, None
            o_enc = self._enc_obs(data, t)
            raw_q, q, tape_psi = self._inference(prior, o_enc)
            ll, em_cache = em.forward(self.kappa, ctx, q, t, data, noise)
            kl = fam.kl(q, prior)
            term = ll - kl_weight * kl
            if not np.all(np.isfinite(term)):
                bad = int(np.flatnonzero(~np.isfinite(term))[0])
                raise NonFiniteLoss(
                    f"non-finite bound at trial {bad}, step {t}: "
                    f"log-lik {ll[bad]!r}, KL {kl[bad]!r}")
            total += float(term.sum())
            steps.append((raw_p, prior, tape_w, raw_q, q, tape_psi, em_cache))
        loss = -total / (B * T1)
        if not with_grad:
            return loss, None

        g = -1.0 / (B * T1)
        gvec = np.full(B, g)
        grads = {k: np.zeros_like(v) for k, v in self.params().items()}
        g_q_next = np.zeros((B, self.belief_dim))
        for t in range(T1 - 1, -1, -1):
            raw_p, prior, tape_w, raw_q, q, tape_psi, em_cache = steps[t]
            g_q = g_q_next + em.backward(self.kappa, ctx, em_cache, gvec)
            kq, kp = fam.kl_grad(q, prior)
            g_q -= (g * kl_weight) * kq
            g_prior = (-g * kl_weight) * kp
            gpsi = self.psi.backward(tape_psi, fam.head_vjp(raw_q, q, g_q))
            _accumulate(grads, "psi", gpsi)
            g_prior += gpsi.x[:, :self.belief_dim]
            if t > 0:
                gw = self.omega.backward(tape_w, fam.head_vjp(raw_p, prior, g_prior))
                _accumulate(grads, "omega", gw)
                g_q_next = gw.x[:, :self.belief_dim]
            else:
                grads["init"] += fam.head_vjp(self.init_raw, init, g_prior.sum(axis=0))
        em.finish(self.kappa, ctx, grads)
        return loss, grads

    # -- single-belief API

    def _belief_array(self, b) -> np.ndarray:
        if self.mode == "gaussian":
            if not isinstance(b, GaussianBelief):
                raise ShapeError("gaussian mode expects a GaussianBelief")
            return np.array([[b.mean, b.std]])
        probs = b.probs if isinstance(b, CategoricalBelief) else np.asarray(b, dtype=np.float64)
        if probs.shape != (self.n_states,):
            raise ShapeError(f"expected a belief over {self.n_states} states, got shape {probs.shape}")
        return probs[None, :]

    def _wrap(self, arr):
        row = arr[0]
        if self.mode == "gaussian":
            return GaussianBelief(row[0], row[1])
        return CategoricalBelief(row / row.sum())

    def belief_transition(self, b, action):
        _, prior, _ = self._transition(self._belief_array(b), self._enc_action([action]))
        return self._wrap(prior)

    def belief_inference(self, prior, observation, prev_observation=None):
        if self.mode == "railway" and prev_observation is None:
            raise ConfigError("railway mode needs the previous observation")
        if self.mode != "railway" and prev_observation is not None:
            raise ConfigError("prev_observation is only used in railway mode")
        obs = [[observation]] if self.mode != "railway" else [[prev_observation, observation]]
        data = {"obs": np.asarray(obs, dtype=np.float64 if self.mode != "discrete" else np.int64)}
        _, q, _ = self._inference(self._belief_array(prior), self._enc_obs(data, data["obs"].shape[1] - 1))
        return self._wrap(q)

    def observation_log_likelihood(self, state, action, observation, prev_observation=None) -> float:
        """``log p_kappa(o | s, a)``; ``action=None`` marks the initial step in railway mode."""
        if self.mode == "discrete":
            raw, _ = self.kappa.forward(np.eye(self.n_states)[int(state)])
            return float(ad.log_softmax(raw)[int(observation)])
        if self.mode == "gaussian":
            mu, sd = self._kappa_gaussian(float(state))
            return float(ad.gaussian_log_prob(float(observation), mu, sd))
        if prev_observation is None and action is not None:
            raise ConfigError("railway mode needs the previous observation")
        x = self._railway_kappa_input(int(state), action, prev_observation)
        raw, _ = self.kappa.forward(x)
        mu, sd = ad.gaussian_head(raw)
        return float(ad.trunc_normal_log_prob(float(observation), mu, sd, 0.0))

    def _kappa_gaussian(self, state: float):
        raw, _ = self.kappa.forward(np.array([state]))
        if self.anchored:
            return state, float(ad.softplus(raw[0]) + ad.STD_FLOOR)
        mu, sd = ad.gaussian_head(raw)
        return float(mu), float(sd)

    def _railway_kappa_input(self, state, action, prev_observation):
        S, A = self.n_states, self.n_actions
        x = np.zeros(S + A + 1)
        x[state] = 1.0
        if action is not None:
            x[S + int(action)] = 1.0
            x[-1] = float(prev_observation)
        return x

    def infer_trial_beliefs(self, trial: Trial) -> np.ndarray:
        return self.infer_batch(trial.observations[None, :], trial.actions[None, :])[0]

    def generate(self, policy: Callable, T: int, rng, seed: int = 0) -> Trial:
        """Sample a synthetic trial from the learned model.

        The latent state at each step is drawn from the current prior belief,
        the observation from kappa, and the belief is then updated with psi
        and propagated with omega. Sampled latent states are not returned.
        """
        prior = self.initial_prior()[None, :]
        obs: List = []
        acts: List = []
        prev_obs = 0.0
        for t in range(T + 1):
            if t > 0:
                a = policy(rng)
                acts.append(a)
                _, prior, _ = self._transition(q, self._enc_action([a]))
            o = self._sample_observation(prior[0], acts[-1] if t > 0 else None, prev_obs, rng)
            obs.append(o)
            if self.mode == "railway":
                enc = np.array([[o, prev_obs]])
            elif self.mode == "discrete":
                enc = np.eye(self.n_obs)[[o]]
            else:
                enc = np.array([[o]], dtype=np.float64)
            _, q, _ = self._inference(prior, enc)
            prev_obs = o
        dtype = np.int64 if self.mode == "discrete" else np.float64
        return Trial(np.asarray(obs, dtype=dtype), np.asarray(acts), None, seed=seed)

    def _sample_observation(self, prior, action, prev_obs, rng):
        if self.mode == "gaussian":
            s = rng.normal(prior[0], prior[1])
            mu, sd = self._kappa_gaussian(s)
            return float(rng.normal(mu, sd))
        s = int(min(np.searchsorted(np.cumsum(prior), rng.uniform() * prior.sum(), side="right"),
                    self.n_states - 1))
        if self.mode == "discrete":
            p = ad.softmax(self.kappa.forward(np.eye(self.n_states)[s])[0])
            return int(min(np.searchsorted(np.cumsum(p), rng.uniform() * p.sum(), side="right"),
                           self.n_obs - 1))
        raw, _ = self.kappa.forward(self._railway_kappa_input(s, action, prev_obs))
        mu, sd = ad.gaussian_head(raw)
        return float(ad.trunc_normal_sample(mu, sd, 0.0, rng))


def _batch_arrays(observations, actions) -> dict:
    obs = np.asarray(observations)
    act = np.asarray(actions)
    if obs.ndim != 2 or act.ndim != 2 or act.shape != (obs.shape[0], obs.shape[1] - 1):
        raise ShapeError(f"expected observations (B, T+1) and actions (B, T); got {obs.shape}, {act.shape}")
    return {"obs": obs, "act": act}


def stack_trials(trials: Sequence[Trial]):
    lengths = {len(tr.observations) for tr in trials}
    if len(lengths) != 1:
        raise ShapeError(f"trials in a batch must share a horizon, got lengths {sorted(lengths)}")
    return np.stack([tr.observations for tr in trials]), np.stack([tr.actions for tr in trials])


# ---------------------------------------------------------------- training


def train_update(model: DBMM, trials: Sequence[Trial], config: TrainConfig, rng=None) -> TrainReport:
    """Minibatched Adam on the negative bound, ``config.epochs`` passes over ``trials``.

    ``rng`` drives minibatch order and reparameterisation noise; it defaults
    to a generator seeded with ``config.seed``.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if len(trials) == 0:
        raise ConfigError("train_update needs at least one trial")
    obs, act = stack_trials(trials)
    n = obs.shape[0]
    model.optimizer.lr = config.lr
    eval_noise = None
    if model.mode == "gaussian":
        eval_noise = rng.standard_normal((n, obs.shape[1], config.mc_samples))
    initial, _ = model.elbo(obs, act, noise=eval_noise, with_grad=False)
    report = TrainReport(initial_loss=initial, final_loss=initial)
    params = model.params()
    for _ in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            beta = 1.0
            if config.kl_warmup > 0:
                beta = min(1.0, (model.optimizer.step + 1) / config.kl_warmup)
            loss, grads = model.elbo(obs[idx], act[idx], rng=rng, mc_samples=config.mc_samples,
                                     kl_weight=beta)
            ad.clip_by_global_norm(grads, config.clip_norm)
            ad.adam_step(params, grads, model.optimizer)
            model.bump()
            losses.append(loss)
            report.steps += 1
        report.epoch_losses.append(float(np.mean(losses)))
    if config.epochs > 0:
        report.final_loss, _ = model.elbo(obs, act, noise=eval_noise, with_grad=False)
        if report.final_loss > report.initial_loss:
            warnings.warn(
                f"training did not reduce the loss ({report.initial_loss:.4f} -> {report.final_loss:.4f})",
                NoImprovement, stacklevel=2)
    log.debug("train_update: %d steps, loss %.4f -> %.4f", report.steps, report.initial_loss, report.final_loss)
    return report


def train_config_to_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
