import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import central_diff
from pinnlab import autodiff as ad
from pinnlab import network as nw
from pinnlab import physics as ph
from pinnlab import simulate as sm
from pinnlab.autodiff import Jet2


def test_data_loss_examples():
    assert float(ph.data_loss(np.array([1.0, 3.0]), np.array([0.0, 0.0]))) == 5.0
    assert float(ph.data_loss(np.ones(4), np.ones(4))) == 0.0
    with pytest.raises(ValueError):
        ph.data_loss(np.zeros(0), np.zeros(0))
    with pytest.raises(ValueError):
        ph.data_loss(np.zeros(3), np.zeros(2))


@given(st.floats(-10, 10), st.integers(0, 100))
def test_data_loss_homogeneous(c, seed):
    rng = np.random.default_rng(seed)
    r = rng.normal(size=6)
    base = float(ph.data_loss(r, np.zeros(6)))
    scaled = float(ph.data_loss(c * r, np.zeros(6)))
    assert scaled == pytest.approx(c * c * base, rel=1e-12, abs=1e-300)


def test_pendulum_residual_constants():
    params = ph.PendulumParams()
    assert float(ph.pendulum_residual(Jet2(0.0, 0.0, 0.0), params)) == 0.0
    r = float(ph.pendulum_residual(Jet2(math.pi / 2, 0.0, 0.0), params))
    assert r == pytest.approx(9.8 / 0.325, abs=1e-12)


def test_pendulum_params_validation():
    with pytest.raises(ValueError):
        ph.PendulumParams(g=0)
    with pytest.raises(ValueError):
        ph.PendulumParams(L=-1)


def test_heat_residual_examples():
    hp = ph.HeatParams()
    const = Jet2(5.0, 0.0, 0.0)
    assert float(ph.heat_residual((const, const, const), hp)) == 0.0
    # u = 2t: u_t = 2
    assert float(ph.heat_residual((Jet2(0.0, 2.0, 0.0), const, const), hp)) == 2.0
    # u = x^2, alpha = 10: u_xx = 2
    assert float(ph.heat_residual((const, Jet2(1.0, 2.0, 2.0), const), hp)) == -20.0


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_heat_residual_linear_in_alpha(uxx, alpha, delta):
    hp = ph.HeatParams()
    jets = (Jet2(0.0, 1.3, 0.0), Jet2(0.0, 0.0, uxx), Jet2(0.0, 0.0, 0.7))
    r0 = ph.heat_residual(jets, hp, alpha=alpha)
    r1 = ph.heat_residual(jets, hp, alpha=alpha + delta)
    assert float(r1) - float(r0) == pytest.approx(-delta * uxx, abs=1e-12)


def test_residual_on_simulated_trajectory_shrinks_with_dt():
    # A cubic spline through an undamped run, probed between the samples.
    from scipy.interpolate import CubicSpline

    def msr(n):
        cfg = sm.PendulumSimConfig(n_points=n, b=0.0)
        s = sm.euler_cromer(cfg)
        spline = CubicSpline(s.times, s.values)
        t = (s.times[1:] + s.times[:-1])[10:-10] / 2
        jet = Jet2(spline(t), spline(t, 1), spline(t, 2))
        r = ph.pendulum_residual(jet, ph.PendulumParams(b=0.0))
        return float(np.mean(np.asarray(r) ** 2))

    coarse, fine = msr(1500), msr(2999)
    assert 0 < fine < coarse


def _pendulum_setup(trainable):
    net = nw.init(nw.MlpSpec(1, (6, 6)), 1)
    rng = np.random.default_rng(0)
    x = np.linspace(0, 6, 9)[:, None]
    y = np.sin(x[:, 0])
    col = rng.uniform(0, 6, size=(7, 1))
    physics = ph.PendulumParams(b=0.2, b_trainable=trainable)
    return ph.PinnObjective(net, physics, x, y, col, 0.3)


def _heat_setup():
    net = nw.init(nw.MlpSpec(3, (6, 5), 1, "tanh"), 2)
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 3, size=(8, 3))
    y = rng.normal(20, 2, size=8)
    col = rng.uniform(0, 3, size=(6, 3))
    nw.fit_scaling(net, x, y)
    return ph.PinnObjective(net, ph.HeatParams(4.0, 6.0, trainable=True), x, y, col, 0.5)


@pytest.mark.parametrize("setup", [lambda: _pendulum_setup(True), lambda: _pendulum_setup(False), _heat_setup])
def test_total_gradient_matches_fd(setup):
    obj = setup()
    flat = obj.initial()
    _, g = obj(flat)
    fd = central_diff(lambda p: obj(p)[0], flat)
    scale = np.maximum(np.abs(g), np.abs(fd))
    assert np.all(np.abs(g - fd) <= 1e-4 * scale + 1e-7)


def test_trainable_coefficients_appended_to_flat_vector():
    obj = _heat_setup()
    flat = obj.initial()
    assert flat.size == obj.net.spec.n_params + 2
    assert flat[-2:].tolist() == [4.0, 6.0]
    assert obj.coefficients(flat) == {"alpha": 4.0, "beta": 6.0}
    assert _pendulum_setup(False).coefficients(_pendulum_setup(False).initial()) == {"b": 0.2}


@given(st.integers(0, 1000), st.floats(0, 2))
def test_total_is_data_plus_weighted_physics(seed, lam):
    obj = _pendulum_setup(True)
    rng = np.random.default_rng(seed)
    flat = obj.initial() + rng.normal(scale=0.1, size=obj.initial().size)
    obj.lambda_p = lam
    parts = obj.breakdown(flat)
    assert parts.total == pytest.approx(parts.data_loss + lam * parts.physics_loss, rel=1e-15, abs=0)


def test_lambda_zero_or_no_collocation_is_data_loss():
    net = nw.init(nw.MlpSpec(1, (4,)), 0)
    x = np.linspace(0, 1, 5)[:, None]
    y = x[:, 0] ** 2
    tape = ad.Tape()
    theta = tape.param(net.params)
    plain = float(ph.data_loss(nw.forward(net, x)[:, 0], y))
    for col, lam in ((np.ones((3, 1)), 0.0), (None, 0.5), (np.zeros((0, 1)), 0.5)):
        total, parts = ph.pinn_loss(net, theta, x, y, col, ph.PendulumParams(), lam)
        assert float(total.value) == plain
        assert parts.physics_loss == 0.0 and parts.total == parts.data_loss


def test_exact_equilibrium_gives_zero_loss():
    spec = nw.MlpSpec(1, (3,))
    net = nw.Mlp(spec, np.zeros(spec.n_params))
    obj = ph.PinnObjective(net, ph.PendulumParams(), np.ones((4, 1)), np.zeros(4), np.ones((5, 1)), 1.0)
    assert obj(obj.initial())[0] == 0.0


def test_ideal_objective_shape():
    s = sm.euler_cromer(sm.PendulumSimConfig())
    idx = np.round(np.linspace(0, 1499, 150)).astype(int)
    obj = ph.PinnObjective(
        nw.init(nw.MlpSpec(1, (32, 32, 32)), 0), ph.PendulumParams(),
        s.times[idx, None], s.values[idx], np.linspace(0, 6, 100)[:, None], 0.001,
    )
    parts = obj.breakdown(obj.initial())
    assert parts.lambda_p == 0.001
    assert obj.data_x.shape == (150, 1) and obj.colloc_x.shape == (100, 1)
    assert parts.physics_loss > 0
