import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dbmm import autodiff as ad
from dbmm.core import CategoricalBelief, ConfigError, GaussianBelief, ShapeError, Trial
from dbmm.model import DBMM, NonFiniteLoss, NoImprovement, TrainConfig, train_update

H = 12   # small hidden width keeps these tests fast


def _discrete(seed=0, **kw):
    return DBMM("discrete", 5, 4, 3, hidden_dim=H, seed=seed, **kw)


def _railway(seed=0, **kw):
    return DBMM("railway", 4, 3, hidden_dim=H, seed=seed, **kw)


def _gaussian(seed=0, **kw):
    return DBMM("gaussian", hidden_dim=H, seed=seed, **kw)


def _batch(mode, rng, B=3, T=4):
    if mode == "discrete":
        return rng.integers(0, 3, (B, T + 1)), rng.integers(0, 4, (B, T))
    if mode == "railway":
        return -rng.uniform(0.05, 2.0, (B, T + 1)), rng.integers(0, 3, (B, T))
    return rng.normal(0.5, 0.3, (B, T + 1)), rng.uniform(0, 1, (B, T))


def _kl_cat(q, p):
    return float(np.sum(q * (np.log(q) - np.log(p))))


def _kl_gauss(q, p):
    return np.log(p.std / q.std) + (q.std ** 2 + (q.mean - p.mean) ** 2) / (2 * p.std ** 2) - 0.5


def reference_bound(model, obs, act, noise=None):
    """The negative bound assembled from the single-belief API, one trial and one step at a time."""
    terms = []
    for b in range(obs.shape[0]):
        raw = model.initial_prior()
        prior = GaussianBelief(*raw) if model.mode == "gaussian" else CategoricalBelief(raw)
        for t in range(obs.shape[1]):
            if t > 0:
                prior = model.belief_transition(q, act[b, t - 1])
            prev = None
            if model.mode == "railway":
                prev = obs[b, t - 1] if t > 0 else 0.0
            q = model.belief_inference(prior, obs[b, t], prev)
            a_prev = act[b, t - 1] if t > 0 else None
            if model.mode == "gaussian":
                s = q.mean + q.std * noise[b, t]
                ll = np.mean([model.observation_log_likelihood(x, a_prev, obs[b, t]) for x in s])
                kl = _kl_gauss(q, prior)
            else:
                lls = [model.observation_log_likelihood(s, a_prev, obs[b, t], prev)
                       for s in range(model.n_states)]
                ll = float(q.probs @ np.array(lls))
                kl = _kl_cat(q.probs, prior.probs)
            terms.append(ll - kl)
    return -float(np.mean(terms))


class TestConstruction:
    def test_dims(self):
        m = _discrete()
        assert m.omega.input_dim == 9 and m.omega.output_dim == 5
        assert m.psi.input_dim == 8 and m.kappa.output_dim == 3
        g = _gaussian()
        assert g.omega.input_dim == 3 and g.omega.output_dim == 2
        r = _railway()
        assert r.kappa.input_dim == 4 + 3 + 1 and r.psi.input_dim == 6

    def test_bad_mode(self):
        with pytest.raises(ConfigError):
            DBMM("hmm", 2, 2, 2)

    def test_single_omega(self):
        m = _discrete()
        assert m.params()["omega.W1"] is m.omega.W1
        b = CategoricalBelief.uniform(5)
        before = m.belief_transition(b, 1).probs
        m.params()["omega.b2"][0] += 3.0
        m.bump()
        assert m.belief_transition(b, 1).probs[0] > before[0]

    @pytest.mark.parametrize("make", [_discrete, _gaussian, _railway])
    def test_checkpoint_round_trip(self, make, tmp_path):
        m = make(seed=4)
        m.save(tmp_path / "m.npz", {"x": 1})
        back = DBMM.load(tmp_path / "m.npz")
        for k, v in m.params().items():
            np.testing.assert_array_equal(back.params()[k], v)
        assert back.header() == m.header()


class TestBeliefOperators:
    def test_zero_nets_uniform(self):
        m = _discrete(zero=True)
        b = CategoricalBelief(np.array([0.7, 0.1, 0.1, 0.05, 0.05]))
        np.testing.assert_allclose(m.belief_transition(b, 2).probs, 0.2)
        np.testing.assert_allclose(m.belief_inference(b, 1).probs, 0.2)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            _discrete().belief_transition(CategoricalBelief.uniform(3), 0)
        with pytest.raises(ShapeError):
            _gaussian().belief_transition(CategoricalBelief.uniform(3), 0.5)

    def test_railway_needs_previous(self):
        with pytest.raises(ConfigError):
            _railway().belief_inference(CategoricalBelief.uniform(4), -0.3)

    def test_valid_beliefs_on_random_inputs(self, rng):
        m = _discrete(seed=3)
        for _ in range(2000):
            b = CategoricalBelief(rng.dirichlet(np.ones(5)))
            q = m.belief_inference(m.belief_transition(b, int(rng.integers(4))), int(rng.integers(3)))
            assert abs(q.probs.sum() - 1) < 1e-9
        g = _gaussian(seed=3)
        for _ in range(2000):
            b = GaussianBelief(rng.normal(0, 3), rng.uniform(1e-3, 3))
            assert g.belief_inference(g.belief_transition(b, rng.uniform()), rng.normal()).std > 0

    def test_deterministic(self):
        m = _railway(seed=2)
        b = CategoricalBelief(np.array([0.1, 0.2, 0.3, 0.4]))
        a = m.belief_inference(m.belief_transition(b, 1), -0.4, -0.2).probs
        c = m.belief_inference(m.belief_transition(b, 1), -0.4, -0.2).probs
        np.testing.assert_array_equal(a, c)


class TestObservationModel:
    def test_discrete_normalised(self):
        m = _discrete(seed=1)
        for s in range(5):
            total = sum(np.exp(m.observation_log_likelihood(s, None, o)) for o in range(3))
            assert total == pytest.approx(1.0, abs=1e-9)

    def test_gaussian_unit_std_at_mean(self):
        m = _gaussian(anchored=True)
        m.kappa.W2[...] = 0.0
        # softplus(b) + floor = 1
        m.kappa.b2[...] = np.log(np.expm1(1.0 - ad.STD_FLOOR))
        m.bump()
        assert m.observation_log_likelihood(0.37, 0.2, 0.37) == pytest.approx(-0.9189385, abs=1e-7)

    def test_railway_positive_is_impossible(self):
        assert _railway().observation_log_likelihood(1, 0, 0.5, -0.1) == -np.inf


class TestBound:
    def test_zero_nets(self, rng):
        obs, act = _batch("discrete", rng)
        loss, _ = _discrete(zero=True).elbo(obs, act)
        assert loss == pytest.approx(np.log(3), abs=1e-12)

    def test_single_step_toy(self):
        m = DBMM("discrete", 2, 1, 2, hidden_dim=4, seed=7)
        m.init_raw[...] = [0.4, -0.1]
        obs = np.array([[1]])
        loss, _ = m.elbo(obs, np.zeros((1, 0), dtype=int))
        p0 = np.exp([0.4, -0.1]) / np.exp([0.4, -0.1]).sum()
        q = m.psi.forward(np.concatenate([p0, [0.0, 1.0]]))[0]
        q = np.exp(q) / np.exp(q).sum()
        logits = np.array([m.kappa.forward(np.eye(2)[s])[0] for s in range(2)])
        lik = np.exp(logits[:, 1]) / np.exp(logits).sum(axis=1)
        expected = -(q @ np.log(lik) - _kl_cat(q, p0))
        assert loss == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize("mode", ["discrete", "railway", "gaussian"])
    def test_matches_stepwise_reference(self, mode, rng):
        m = {"discrete": _discrete, "railway": _railway, "gaussian": _gaussian}[mode](seed=5)
        obs, act = _batch(mode, rng, B=2, T=3)
        noise = rng.standard_normal((2, 4, 3)) if mode == "gaussian" else None
        loss, _ = m.elbo(obs, act, noise=noise, with_grad=False)
        assert loss == pytest.approx(reference_bound(m, obs, act, noise), abs=1e-9)

    @pytest.mark.parametrize("make,mode", [(_discrete, "discrete"), (_railway, "railway"),
                                           (_gaussian, "gaussian"),
                                           (lambda seed: _gaussian(seed, anchored=True), "gaussian")])
    def test_gradient_finite_differences(self, make, mode, rng):
        m = make(seed=11)
        obs, act = _batch(mode, rng, B=1, T=3)
        noise = rng.standard_normal((1, 4, 2)) if mode == "gaussian" else None
        _, grads = m.elbo(obs, act, noise=noise)

        def f():
            m.bump()
            return m.elbo(obs, act, noise=noise, with_grad=False)[0]

        for name, arr in m.params().items():
            for _ in range(3):
                idx = tuple(int(rng.integers(n)) for n in arr.shape)
                fd = ad.finite_difference(f, arr, idx)
                assert ad.max_relative_error(grads[name][idx], fd, floor=1e-6) <= 1e-4, name

    def test_gaussian_needs_noise(self, rng):
        obs, act = _batch("gaussian", rng)
        with pytest.raises(ConfigError):
            _gaussian().elbo(obs, act)

    def test_non_finite(self, rng):
        obs, act = _batch("railway", rng)
        obs[0, 2] = 0.3
        with pytest.raises(NonFiniteLoss, match="trial 0, step 2"):
            _railway().elbo(obs, act)

    def test_bad_shapes(self):
        with pytest.raises(ShapeError):
            _discrete().elbo(np.zeros((2, 4), int), np.zeros((2, 4), int))


def _closed_loop_bound(q, obs, P, O, b0):
    """Per-step sum of E_q[log O] - KL(q_t || q_{t-1} P)."""
    prior, total = b0, 0.0
    for t, o in enumerate(obs):
        total += q[t] @ np.log(O[:, o]) - _kl_cat(q[t], prior)
        prior = q[t] @ P
    return total


class TestBoundAtExactFilter:
    """With the exact filter plugged in, the closed-loop objective is the HMM evidence."""

    @settings(max_examples=25)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_equals_forward_algorithm(self, seed):
        from dbmm.envs import DiscretePOMDPModel, exact_belief_update, exact_initial_belief, hmm_log_likelihood
        r = np.random.default_rng(seed)
        S = int(r.integers(2, 5))
        P = r.dirichlet(np.ones(S), size=(1, S))
        O = r.dirichlet(np.ones(3), size=S)
        model = DiscretePOMDPModel(P, O, CategoricalBelief(r.dirichlet(np.ones(S))))
        obs = r.integers(0, 3, 6)
        q = [exact_initial_belief(obs[0], model).probs]
        for o in obs[1:]:
            q.append(exact_belief_update(q[-1], 0, o, model).probs)
        bound = _closed_loop_bound(np.array(q), obs, P[0], O, model.initial_belief.probs)
        assert bound == pytest.approx(hmm_log_likelihood(obs, [0] * 5, model), abs=1e-9)


class TestInference:
    def test_zero_nets_uniform(self, rng):
        tr = Trial(rng.integers(0, 3, 8), rng.integers(0, 4, 7), rng.integers(0, 5, 8))
        b = _discrete(zero=True).infer_trial_beliefs(tr)
        assert b.shape == (8, 5)
        np.testing.assert_allclose(b, 0.2)

    @pytest.mark.parametrize("mode", ["discrete", "railway", "gaussian"])
    def test_no_future_leakage(self, mode, rng):
        m = {"discrete": _discrete, "railway": _railway, "gaussian": _gaussian}[mode](seed=8)
        obs, act = _batch(mode, rng, B=1, T=10)
        base = m.infer_batch(obs, act)[0]
        for t in (0, 4, 9):
            alt = obs.copy()
            alt[0, t + 1:] = _batch(mode, rng, B=1, T=10)[0][0, t + 1:]
            np.testing.assert_array_equal(m.infer_batch(alt, act)[0, :t + 1], base[:t + 1])

    def test_matches_step_composition(self, rng):
        m = _discrete(seed=9)
        obs, act = _batch("discrete", rng, B=1, T=5)
        batch = m.infer_batch(obs, act)[0]
        q = m.belief_inference(CategoricalBelief(m.initial_prior()), obs[0, 0])
        np.testing.assert_allclose(batch[0], q.probs, atol=1e-14)
        for t in range(1, 6):
            q = m.belief_inference(m.belief_transition(q, act[0, t - 1]), obs[0, t])
            np.testing.assert_allclose(batch[t], q.probs, atol=1e-12)


def _toy_trials(rng, n=10, T=8):
    from dbmm.envs import DiscreteEnv, bridge_model
    env = DiscreteEnv(bridge_model())
    out = []
    for _ in range(n):
        obs = [env.reset(rng)]
        acts = [int(a) for a in rng.integers(0, 4, T)]
        obs += [env.step(a, rng) for a in acts]
        out.append(Trial(np.array(obs), np.array(acts), None))
    return out


class TestTraining:
    def test_zero_epochs(self, rng):
        m = _discrete()
        before = {k: v.copy() for k, v in m.params().items()}
        train_update(m, _toy_trials(rng), TrainConfig(epochs=0))
        for k, v in m.params().items():
            np.testing.assert_array_equal(v, before[k])

    def test_loss_decreases(self, rng):
        m = _discrete(seed=1)
        rep = train_update(m, _toy_trials(rng), TrainConfig(lr=3e-3, epochs=50, batch_size=5))
        assert rep.final_loss < rep.initial_loss
        assert np.mean(rep.epoch_losses[-10:]) < np.mean(rep.epoch_losses[:10])

    def test_bit_identical(self, rng):
        trials = _toy_trials(rng)
        runs = []
        for _ in range(2):
            m = _gaussian(seed=3, anchored=True)
            g = [Trial(t.observations * 0.1, np.full(t.horizon, 0.5), None) for t in trials]
            train_update(m, g, TrainConfig(epochs=3, batch_size=4, mc_samples=2, seed=9))
            runs.append(m.params())
        for k in runs[0]:
            np.testing.assert_array_equal(runs[0][k], runs[1][k])

    def test_empty(self):
        with pytest.raises(ConfigError):
            train_update(_discrete(), [], TrainConfig())

    def test_no_improvement_warning(self, rng):
        m = _discrete(seed=1)
        with pytest.warns(NoImprovement):
            # an absurd step size overshoots
            train_update(m, _toy_trials(rng), TrainConfig(lr=5.0, epochs=3, batch_size=2, clip_norm=1e6))

    @pytest.mark.parametrize("bad", [dict(lr=0.0), dict(batch_size=0), dict(epochs=-1)])
    def test_config_validation(self, bad):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


class TestGenerate:
    def test_discrete_support(self, rng):
        tr = _discrete(seed=2).generate(lambda r: int(r.integers(4)), 20, rng)
        assert tr.true_states is None and tr.horizon == 20
        assert set(tr.observations.tolist()) <= {0, 1, 2}

    def test_railway_nonpositive(self, rng):
        m = _railway(seed=2)
        for _ in range(5):
            tr = m.generate(lambda r: int(r.integers(3)), 30, rng)
            assert tr.observations.max() <= 0.0

    @pytest.mark.parametrize("make,policy", [(_discrete, lambda r: int(r.integers(4))),
                                             (_gaussian, lambda r: float(r.uniform()))])
    def test_reproducible(self, make, policy):
        m = make(seed=6)
        a = m.generate(policy, 15, np.random.default_rng(1))
        b = m.generate(policy, 15, np.random.default_rng(1))
        np.testing.assert_array_equal(a.observations, b.observations)
        np.testing.assert_array_equal(a.actions, b.actions)
