"""Data and residual losses for the pendulum ODE and the 2D heat equation.

Input column conventions: the pendulum network takes ``(t,)``; the heat
network takes ``(t, x, y)``.

Trainable physical coefficients are appended to the network's flat parameter
vector, so one optimizer sees ``[network params..., coefficients...]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import network as nw


@dataclass
class PendulumParams:
    g: float = 9.8
    L: float = 0.325
    b: float = 0.001
    b_trainable: bool = False

    def __post_init__(self):
        if self.g <= 0 or self.L <= 0:
            raise ValueError("g and L must be positive")

    kind = "pendulum"
    input_dim = 1

    @property
    def trainable_names(self):
        return ("b",) if self.b_trainable else ()

    def initial_coefficients(self):
        return np.array([self.b]) if self.b_trainable else np.zeros(0)


@dataclass
class HeatParams:
    alpha: float = 10.0
    beta: float = 10.0
    trainable: bool = False

    kind = "heat"
    input_dim = 3

    @property
    def trainable_names(self):
        return ("alpha", "beta") if self.trainable else ()

    def initial_coefficients(self):
        return np.array([self.alpha, self.beta]) if self.trainable else np.zeros(0)


@dataclass(frozen=True)
class LossBreakdown:
    data_loss: float
    physics_loss: float
    total: float
    lambda_p: float


def data_loss(predictions, targets):
    """Mean squared error; works on arrays and on tape Vars."""
    n = np.size(ad._val(predictions))
    if n == 0:
        raise ValueError("data loss needs at least one point")
    if np.shape(ad._val(predictions)) != np.shape(targets):
        raise ValueError(
            f"shape mismatch: {np.shape(ad._val(predictions))} vs {np.shape(targets)}"
        )
    return ad.mean_all(ad.square(ad.sub(predictions, targets)))


def pendulum_residual(jet, params, b=None):
    """``f_tt + b f_t + (g/L) sin f`` from a time jet of the network output."""
    b = params.b if b is None else b
    return ad.add(ad.add(jet.d2, ad.mul(b, jet.d1)), ad.mul(params.g / params.L, ad.sin(jet.v)))


def heat_residual(jets, params, alpha=None, beta=None):
    """``u_t - alpha u_xx - beta u_yy`` from jets along t, x and y."""
    jt, jx, jy = jets
    alpha = params.alpha if alpha is None else alpha
    beta = params.beta if beta is None else beta
    return ad.sub(ad.sub(jt.d1, ad.mul(alpha, jx.d2)), ad.mul(beta, jy.d2))


def residual(net, theta, colloc, physics, coefs=None):
    """Equation residual at collocation points, coefficients optionally from ``coefs``."""
    coefs = {} if coefs is None else coefs
    if physics.kind == "pendulum":
        return pendulum_residual(nw.forward_jet(net, colloc, 0, theta), physics, coefs.get("b"))
    jets = tuple(nw.forward_jet(net, colloc, k, theta) for k in range(3))
    return heat_residual(jets, physics, coefs.get("alpha"), coefs.get("beta"))


def pinn_loss(net, theta, data_x, data_y, colloc_x, physics, lambda_p, coefs=None):
    """Total loss Var and its :class:`LossBreakdown`.

    With ``lambda_p == 0`` or no collocation points the physics term is not
    evaluated and the total is exactly the data loss.
    """
    pred = nw.forward_var(net, data_x, theta)
    ld = data_loss(pred, np.reshape(data_y, np.shape(pred.value)))
    n_p = 0 if colloc_x is None else len(colloc_x)
    if lambda_p == 0 or n_p == 0:
        return ld, LossBreakdown(float(ld.value), 0.0, float(ld.value), float(lambda_p))
    r = residual(net, theta, colloc_x, physics, coefs)
    lp = ad.mean_all(ad.square(r))
    total = ad.add(ld, ad.mul(lambda_p, lp))
    return total, LossBreakdown(float(ld.value), float(lp.value), float(total.value), float(lambda_p))


class PinnObjective:
    """``flat -> (loss, gradient)`` for a network plus trainable coefficients.

    The flat vector is the network's parameters followed by the values of
    ``physics.trainable_names`` in order.
    """

    def __init__(self, net, physics, data_x, data_y, colloc_x=None, lambda_p=0.0):
        self.net = net
        self.physics = physics
        self.data_x = np.asarray(data_x, dtype=np.float64)
        self.data_y = np.asarray(data_y, dtype=np.float64).reshape(-1, 1)
        self.colloc_x = None if colloc_x is None else np.asarray(colloc_x, dtype=np.float64)
        self.lambda_p = float(lambda_p)
        self.n_net = net.spec.n_params
        self.coef_names = physics.trainable_names

    def initial(self):
        return np.concatenate([self.net.params, self.physics.initial_coefficients()])

    def split(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        return flat[: self.n_net], dict(zip(self.coef_names, flat[self.n_net :].tolist()))

    def coefficients(self, flat):
        """All physical coefficients, trained or fixed, as plain floats."""
        _, trained = self.split(flat)
        if self.physics.kind == "pendulum":
            return {"b": trained.get("b", self.physics.b)}
        return {
            "alpha": trained.get("alpha", self.physics.alpha),
            "beta": trained.get("beta", self.physics.beta),
        }

    def _record(self, flat):
        tape = ad.Tape()
        theta = tape.param(flat)
        coefs = {name: theta[self.n_net + i] for i, name in enumerate(self.coef_names)}
        net_theta = theta[: self.n_net] if coefs else theta
        total, parts = pinn_loss(
            self.net, net_theta, self.data_x, self.data_y, self.colloc_x,
            self.physics, self.lambda_p, coefs,
        )
        return tape, total, parts

    def __call__(self, flat):
        tape, total, _ = self._record(np.asarray(flat, dtype=np.float64))
        return float(total.value), tape.backward(total)

    def breakdown(self, flat):
        return self._record(np.asarray(flat, dtype=np.float64))[2]

    def predict(self, flat, x):
        return nw.forward(self.net, x, np.asarray(flat)[: self.n_net])[:, 0]
