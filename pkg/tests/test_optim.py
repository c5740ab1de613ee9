import numpy as np
import pytest

from loyalfuse.network import NetworkSpec, init_params, zeros_like_params
from loyalfuse.optim import (OPTIMIZERS, OptimizerConfig, OptimizerError,
                             default_config, make_optimizer)


def tiny_params(seed=0):
    return init_params(NetworkSpec("X2", j_in=3, x2_hidden=(4,), out_hidden=(4,)), seed)


def constant_grads(params, value):
    grads = zeros_like_params(params)
    for _, arr in grads.param_arrays():
        arr[:] = value
    return grads


class TestConfig:
    def test_defaults(self):
        assert default_config("adam").lr == 0.001
        assert default_config("nadam").lr == 0.001
        assert default_config("adamax").lr == 0.002
        cfg = default_config("adam")
        assert (cfg.beta1, cfg.beta2, cfg.epsilon) == (0.9, 0.999, 1e-8)

    @pytest.mark.parametrize("kwargs", [
        dict(kind="sgd"),
        dict(kind="adam", lr=0.0),
        dict(kind="adam", lr=-1.0),
        dict(kind="adam", beta1=1.0),
        dict(kind="adam", beta2=-0.1),
        dict(kind="adam", epsilon=0.0),
    ])
    def test_rejects_bad_hypers(self, kwargs):
        with pytest.raises(OptimizerError):
            OptimizerConfig(**{"lr": 0.001, **kwargs})

    def test_make_from_string(self):
        for kind in OPTIMIZERS:
            opt = make_optimizer(kind)
            assert opt.lr == default_config(kind).lr
            assert (opt.beta1, opt.beta2) == (0.9, 0.999)


class TestSingleStep:
    """First-step sizes derived by hand from the update rules."""

    def run_one(self, kind, grad_value):
        params = tiny_params()
        before = {p: a.copy() for p, a in params.param_arrays()}
        opt = make_optimizer(kind)
        opt.step(params, constant_grads(params, grad_value))
        return {p: a - before[p] for p, a in params.param_arrays()}

    def test_adam_first_step(self):
        # m-hat = g, v-hat = g^2 -> delta = -lr * g/(|g| + eps)
        expected = -0.001 * 1.0 / (1.0 + 1e-8)
        for delta in self.run_one("adam", 1.0).values():
            np.testing.assert_allclose(delta, expected, rtol=0, atol=1e-18)

    def test_adam_sign_symmetry(self):
        expected = 0.001 * 3.0 / (3.0 + 1e-8)
        for delta in self.run_one("adam", -3.0).values():
            np.testing.assert_allclose(delta, expected, rtol=0, atol=1e-18)

    def test_adamax_first_step(self):
        # u = |g|, scaled m/u = sign(g) after bias correction -> delta = -lr
        for delta in self.run_one("adamax", 0.7).values():
            np.testing.assert_allclose(delta, -0.002, rtol=0, atol=1e-15)

    def test_nadam_first_step(self):
        # t=1: m-hat = g, and the look-ahead term adds (1-b1)*g/(1-b1) = g,
        # so m-bar = 0.9g + g = 1.9g while v-hat stays g^2
        expected = -0.001 * 1.9 / (1.0 + 1e-8)
        for delta in self.run_one("nadam", 1.0).values():
            np.testing.assert_allclose(delta, expected, rtol=1e-12)

    @pytest.mark.parametrize("kind", OPTIMIZERS)
    def test_zero_gradient_is_fixed_point(self, kind):
        params = tiny_params()
        before = {p: a.copy() for p, a in params.param_arrays()}
        opt = make_optimizer(kind)
        for _ in range(3):
            opt.step(params, constant_grads(params, 0.0))
        for path, arr in params.param_arrays():
            np.testing.assert_array_equal(arr, before[path])

    @pytest.mark.parametrize("kind", ["adam", "adamax"])
    @pytest.mark.parametrize("scale", [0.1, 1.0, 10.0])
    def test_first_step_scale_invariant(self, kind, scale):
        # normalized updates: first-step magnitude barely depends on |g|
        lr = default_config(kind).lr
        for delta in self.run_one(kind, scale).values():
            np.testing.assert_allclose(np.abs(delta), lr, rtol=1e-6)


# --- independent scalar references, written from the update rules ---

def ref_adam(g_seq, lr=0.001, b1=0.9, b2=0.999, eps=1e-8):
    theta, m, v = 0.0, 0.0, 0.0
    out = []
    for t, g in enumerate(g_seq, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        theta -= lr * mhat / (np.sqrt(vhat) + eps)
        out.append(theta)
    return out


def ref_adamax(g_seq, lr=0.002, b1=0.9, b2=0.999):
    theta, m, u = 0.0, 0.0, 0.0
    out = []
    for t, g in enumerate(g_seq, start=1):
        m = b1 * m + (1 - b1) * g
        u = max(b2 * u, abs(g))
        step = 0.0 if m == 0.0 and u == 0.0 else lr / (1 - b1 ** t) * m / u
        theta -= step
        out.append(theta)
    return out


def ref_nadam(g_seq, lr=0.001, b1=0.9, b2=0.999, eps=1e-8):
    theta, m, v = 0.0, 0.0, 0.0
    out = []
    for t, g in enumerate(g_seq, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mbar = b1 * (m / (1 - b1 ** t)) + (1 - b1) * g / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        theta -= lr * mbar / (np.sqrt(vhat) + eps)
        out.append(theta)
    return out


REFS = {"adam": ref_adam, "adamax": ref_adamax, "nadam": ref_nadam}


class TestTrajectories:
    @pytest.mark.parametrize("kind", OPTIMIZERS)
    def test_hundred_steps_match_reference(self, kind):
        """Drive one coordinate of a real parameter tree through 100 steps."""
        spec = NetworkSpec("X2", j_in=1, x2_hidden=(1,), out_hidden=(1,))
        params = init_params(spec, 0)
        for _, arr in params.param_arrays():
            arr[:] = 0.0
        rng = np.random.default_rng(42)
        g_seq = rng.normal(size=100).tolist()

        opt = make_optimizer(kind)
        got = []
        for g in g_seq:
            grads = zeros_like_params(params)
            grads.x2_layers[0].weights[:] = g
            opt.step(params, grads)
            got.append(params.x2_layers[0].weights[0, 0])

        want = REFS[kind](g_seq)
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-10)

    @pytest.mark.parametrize("kind", OPTIMIZERS)
    def test_descends_a_quadratic(self, kind):
        # f(theta) = 0.5*||theta - target||^2, gradient = theta - target.
        # steps are normalized to ~lr, so give it room to travel.
        spec = NetworkSpec("X2", j_in=2, x2_hidden=(2,), out_hidden=(2,))
        params = init_params(spec, 1)
        targets = {p: np.full_like(a, 0.3) for p, a in params.param_arrays()}

        def objective():
            return sum(float(np.sum((a - targets[p]) ** 2))
                       for p, a in params.param_arrays())

        opt = make_optimizer(OptimizerConfig(kind=kind, lr=0.05))
        start = objective()
        for _ in range(1000):
            grads = zeros_like_params(params)
            for (p, ga), (_, pa) in zip(grads.param_arrays(), params.param_arrays()):
                ga[:] = pa - targets[p]
            opt.step(params, grads)
        assert objective() < 0.05 * start

    @pytest.mark.parametrize("kind", OPTIMIZERS)
    def test_state_is_per_array(self, kind):
        """Two arrays with different gradient histories evolve independently."""
        spec = NetworkSpec("X2", j_in=1, x2_hidden=(1,), out_hidden=(1,))
        a = init_params(spec, 0)
        b = init_params(spec, 0)
        opt_a, opt_b = make_optimizer(kind), make_optimizer(kind)
        rng = np.random.default_rng(7)
        for _ in range(10):
            g = float(rng.normal())
            ga = zeros_like_params(a)
            ga.x2_layers[0].weights[:] = g
            ga.out_layers[0].weights[:] = 99.0  # noise on a different array
            gb = zeros_like_params(b)
            gb.x2_layers[0].weights[:] = g
            opt_a.step(a, ga)
            opt_b.step(b, gb)
        np.testing.assert_array_equal(a.x2_layers[0].weights, b.x2_layers[0].weights)


class TestStepValidation:
    def test_mismatched_structure(self):
        params = tiny_params()
        other = init_params(NetworkSpec("X2", j_in=3, x2_hidden=(4, 4), out_hidden=(4,)), 0)
        with pytest.raises(OptimizerError):
            make_optimizer("adam").step(params, zeros_like_params(other))

    def test_shape_change_between_steps(self):
        params = tiny_params()
        opt = make_optimizer("adam")
        opt.step(params, constant_grads(params, 0.1))
        grads = constant_grads(params, 0.1)
        grads.x2_layers[0].weights = np.zeros((2, 2))
        with pytest.raises(OptimizerError):
            opt.step(params, grads)

    def test_non_finite_gradient_names_array(self):
        params = tiny_params()
        grads = constant_grads(params, 0.0)
        grads.out_layers[1].biases[0] = np.nan
        with pytest.raises(OptimizerError, match=r"out_layers\[1\]\.biases"):
            make_optimizer("nadam").step(params, grads)
