import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dbmm import autodiff as ad
from dbmm.core import ShapeError


def _fd_check(fn, x, h=1e-5):
    """Central differences of a scalar function at every entry of x."""
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        g[i] = ad.finite_difference(fn, x, i, h)
    return g


class TestDenseNet:
    def test_zero_net(self):
        net = ad.DenseNet(3, 2, 8, zero=True)
        np.testing.assert_array_equal(net.forward(np.ones(3))[0], 0.0)

    def test_constant_output(self, rng):
        net = ad.DenseNet(3, 2, 8, rng=rng)
        net.W2[...] = 0.0
        net.b2[...] = [1.5, -2.0]
        for x in rng.normal(size=(5, 3)):
            np.testing.assert_array_equal(net(x)[0], [1.5, -2.0])

    def test_init_bounds(self, rng):
        net = ad.DenseNet(4, 3, 100, rng=rng)
        assert np.abs(net.W1).max() <= np.sqrt(6 / 104)
        assert np.abs(net.W2).max() <= np.sqrt(6 / 103)
        np.testing.assert_array_equal(net.b1, 0.0)

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            ad.DenseNet(3, 2, 4, zero=True).forward(np.ones(4))

    def test_zero_upstream(self, rng):
        net = ad.DenseNet(3, 2, 5, rng=rng)
        _, tape = net(rng.normal(size=3))
        g = net.backward(tape, np.zeros(2))
        for v in g.params().values():
            np.testing.assert_array_equal(v, 0.0)

    def test_linear_w2_gradient(self, rng):
        net = ad.DenseNet(3, 2, 4, rng=rng, linear=True)
        x, up = rng.normal(size=3), rng.normal(size=2)
        _, tape = net(x)
        h = net.W1 @ x + net.b1
        np.testing.assert_allclose(net.backward(tape, up).W2, np.outer(up, h), atol=1e-14)

    def test_stale_tape(self, rng):
        net = ad.DenseNet(3, 2, 4, rng=rng)
        _, tape = net(np.ones(3))
        net.bump()
        with pytest.raises(ad.TapeError):
            net.backward(tape, np.ones(2))

    def test_gradients_match_finite_differences(self, rng):
        net = ad.DenseNet(3, 2, 6, rng=rng)
        x = rng.normal(size=(4, 3))
        up = rng.normal(size=(4, 2))
        _, tape = net(x)
        g = net.backward(tape, up)
        f = lambda: float(np.sum(up * net.forward(x)[0]))
        for name, arr in net.params.items():
            assert ad.max_relative_error(getattr(g, name), _fd_check(f, arr)) < 1e-6
        assert ad.max_relative_error(g.x, _fd_check(f, x)) < 1e-6

    def test_copy_is_independent(self, rng):
        net = ad.DenseNet(2, 2, 3, rng=rng)
        other = net.copy()
        other.W1[...] = 0
        assert np.any(net.W1 != 0)


class TestAdam:
    def test_zero_gradient_is_noop(self):
        p = {"w": np.array([1.0, -2.0])}
        s = ad.AdamState(lr=0.1)
        for _ in range(20):
            ad.adam_step(p, {"w": np.zeros(2)}, s)
        np.testing.assert_array_equal(p["w"], [1.0, -2.0])

    @given(st.floats(1e-3, 1e3), st.sampled_from([-1.0, 1.0]))
    def test_first_step_sign(self, mag, sign):
        p = {"w": np.zeros(1)}
        g = sign * mag
        ad.adam_step(p, {"w": np.array([g])}, ad.AdamState(lr=1e-3))
        assert p["w"][0] == pytest.approx(-1e-3 * g / (abs(g) + 1e-8), rel=1e-6)
        assert p["w"][0] == pytest.approx(-1e-3 * sign, rel=1e-5)

    def test_constant_gradient_monotone(self):
        p = {"w": np.zeros(1)}
        s = ad.AdamState(lr=0.01)
        ad.adam_step(p, {"w": np.array([2.0])}, s)
        first = p["w"][0]
        ad.adam_step(p, {"w": np.array([2.0])}, s)
        assert p["w"][0] < first < 0

    def test_non_finite_skips(self):
        p = {"w": np.ones(2)}
        s = ad.AdamState()
        with pytest.raises(ad.NonFiniteGradient):
            ad.adam_step(p, {"w": np.array([1.0, np.nan])}, s)
        np.testing.assert_array_equal(p["w"], 1.0)
        assert s.step == 0

    def test_clip(self):
        g = {"a": np.array([3.0]), "b": np.array([4.0])}
        assert ad.clip_by_global_norm(g, 1.0) == pytest.approx(5.0)
        np.testing.assert_allclose([g["a"][0], g["b"][0]], [0.6, 0.8])


class TestHeads:
    def test_categorical(self):
        np.testing.assert_allclose(ad.categorical_head([0, 0, 0]), 1 / 3)
        np.testing.assert_allclose(ad.categorical_head([np.log(2), 0]), [2 / 3, 1 / 3], atol=1e-12)

    @given(arrays(np.float64, 6, elements=st.floats(-500, 500)))
    def test_categorical_on_simplex(self, z):
        p = ad.categorical_head(z)
        assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-12

    def test_gaussian(self):
        np.testing.assert_allclose(ad.gaussian_head([0.0, 0.0]), [0.0, np.log(2) + 1e-4], atol=1e-12)
        np.testing.assert_allclose(ad.gaussian_head([3.0, 10.0]), [3.0, 10.0001], atol=1e-4)
        assert ad.gaussian_head([0.0, -1e6])[1] == pytest.approx(1e-4)

    @given(arrays(np.float64, (5, 2), elements=st.floats(-1e3, 1e3)))
    def test_gaussian_positive_std(self, raw):
        assert np.all(ad.gaussian_head(raw)[:, 1] > 0)

    def test_rsample_zero_std(self):
        assert ad.gaussian_rsample(1.5, 0.0, 3.0) == 1.5

    def test_vjps(self, rng):
        z = rng.normal(size=4)
        g = rng.normal(size=4)
        f = lambda: float(np.sum(g * ad.softmax(z)))
        np.testing.assert_allclose(ad.softmax_vjp(ad.softmax(z), g), _fd_check(f, z), atol=1e-8)
        f = lambda: float(np.sum(g * ad.log_softmax(z)))
        np.testing.assert_allclose(ad.log_softmax_vjp(ad.log_softmax(z), g), _fd_check(f, z), atol=1e-8)
        raw, g2 = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
        f = lambda: float(np.sum(g2 * ad.gaussian_head(raw)))
        np.testing.assert_allclose(ad.gaussian_head_vjp(raw, g2), _fd_check(f, raw), atol=1e-8)


class TestLogDensities:
    def test_standard_normal(self):
        assert ad.gaussian_log_prob(0.0, 0.0, 1.0) == pytest.approx(-0.9189385, abs=1e-6)

    def test_half_normal(self):
        assert ad.trunc_normal_log_prob(-1.0, 0.0, 1.0, 0.0) == pytest.approx(-0.7257913, abs=1e-6)

    def test_above_bound(self):
        assert ad.trunc_normal_log_prob(0.5, 0.0, 1.0, 0.0) == -np.inf

    def test_no_truncation_limit(self):
        x = np.linspace(-2, 2, 9)
        np.testing.assert_allclose(ad.trunc_normal_log_prob(x, 0.1, 0.8, 1e6),
                                   ad.gaussian_log_prob(x, 0.1, 0.8), atol=1e-9)

    @settings(max_examples=25)
    @given(st.floats(-3, 3), st.floats(0.1, 3), st.floats(-1, 1))
    def test_trunc_normal_grad(self, mu, sigma, ub):
        x = ub - 0.3
        dmu, dsig = ad.trunc_normal_log_prob_grad(x, mu, sigma, ub)
        h = 1e-6
        fmu = (ad.trunc_normal_log_prob(x, mu + h, sigma, ub) - ad.trunc_normal_log_prob(x, mu - h, sigma, ub)) / (2 * h)
        fsig = (ad.trunc_normal_log_prob(x, mu, sigma + h, ub) - ad.trunc_normal_log_prob(x, mu, sigma - h, ub)) / (2 * h)
        assert dmu == pytest.approx(fmu, rel=1e-5, abs=1e-6)
        assert dsig == pytest.approx(fsig, rel=1e-5, abs=1e-6)

    def test_gaussian_grad(self, rng):
        x, mu, sig = rng.normal(), rng.normal(), 0.7
        dx, dmu, dsig = ad.gaussian_log_prob_grad(x, mu, sig)
        h = 1e-6
        assert dx == pytest.approx((ad.gaussian_log_prob(x + h, mu, sig) - ad.gaussian_log_prob(x - h, mu, sig)) / (2 * h), rel=1e-6)
        assert dsig == pytest.approx((ad.gaussian_log_prob(x, mu, sig + h) - ad.gaussian_log_prob(x, mu, sig - h)) / (2 * h), rel=1e-6)
        assert dmu == -dx

    def test_trunc_sampler(self, rng):
        x = ad.trunc_normal_sample(np.full(100_000, 0.5), 1.0, 0.0, rng)
        assert x.max() <= 0.0
        # far tail: mass ~1e-350, still finite and just below the bound
        y = ad.trunc_normal_sample(np.full(1000, 40.0), 1.0, 0.0, rng)
        assert np.all(np.isfinite(y)) and y.max() <= 0.0 and y.min() > -1.0


class TestKL:
    def test_self_kl(self):
        q = np.array([0.2, 0.3, 0.5])
        assert ad.kl_categorical(q, q) == pytest.approx(0.0, abs=1e-15)
        assert ad.kl_gaussian(np.array([0.3, 2.0]), np.array([0.3, 2.0])) == pytest.approx(0.0, abs=1e-15)

    def test_closed_forms(self):
        assert ad.kl_categorical([1, 0], [0.5, 0.5]) == pytest.approx(np.log(2))
        assert ad.kl_gaussian(np.array([1.0, 1.0]), np.array([0.0, 1.0])) == pytest.approx(0.5)
        assert ad.kl_gaussian(np.array([0.0, 2.0]), np.array([0.0, 1.0])) == pytest.approx(1.5 - np.log(2), abs=1e-12)

    def test_nonnegative(self, rng):
        q = rng.dirichlet(np.ones(5) * 0.3, size=10_000)
        p = rng.dirichlet(np.ones(5) * 0.3, size=10_000)
        assert ad.kl_categorical(q, p).min() >= -1e-12
        g1 = np.stack([rng.normal(size=10_000), rng.uniform(0.01, 5, 10_000)], -1)
        g2 = np.stack([rng.normal(size=10_000), rng.uniform(0.01, 5, 10_000)], -1)
        assert ad.kl_gaussian(g1, g2).min() >= -1e-12

    def test_grads(self, rng):
        q, p = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
        dq, dp = ad.kl_categorical_grad(q, p)
        np.testing.assert_allclose(dq, _fd_check(lambda: float(ad.kl_categorical(q, p)), q), rtol=1e-6)
        np.testing.assert_allclose(dp, _fd_check(lambda: float(ad.kl_categorical(q, p)), p), rtol=1e-6)
        gq_, gp_ = np.array([0.3, 0.8]), np.array([-0.2, 1.3])
        gq, gp = ad.kl_gaussian_grad(gq_, gp_)
        np.testing.assert_allclose(gq, _fd_check(lambda: float(ad.kl_gaussian(gq_, gp_)), gq_), atol=1e-8)
        np.testing.assert_allclose(gp, _fd_check(lambda: float(ad.kl_gaussian(gq_, gp_)), gp_), atol=1e-8)
