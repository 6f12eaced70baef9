"""Fixed-step LBFGS and Adam over a flat parameter vector.

An *evaluator* is any callable ``params -> (loss, gradient)``. Mini-batching
for Adam is the evaluator's business: it may return the loss of a different
batch on every call.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

CURVATURE_EPS = 1e-10


class BlowUpError(FloatingPointError):
    """Loss or gradient became non-finite."""

    def __init__(self, iteration=None):
        msg = "non-finite loss or gradient"
        if iteration is not None:
            msg += f" at iteration {iteration}"
        super().__init__(msg)
        self.iteration = iteration


@dataclass
class TerminationConfig:
    tol_grad: float = 1e-7
    tol_change: float = 1e-9
    max_iters: int = 2000

    def __post_init__(self):
        if self.tol_grad < 0 or self.tol_change < 0:
            raise ValueError("tolerances must be >= 0")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


@dataclass
class LbfgsState:
    lr: float = 1.0
    history_size: int = 100
    tol_grad: float = 1e-7
    tol_change: float = 1e-9
    s_hist: deque = field(default_factory=deque)
    y_hist: deque = field(default_factory=deque)
    loss: float = None
    grad: np.ndarray = None
    n_skipped: int = 0


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray = None
    v: np.ndarray = None
    step: int = 0


def _checked(evaluator, params):
    loss, grad = evaluator(params)
    loss = float(loss)
    grad = np.asarray(grad, dtype=np.float64)
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise BlowUpError()
    return loss, grad


def two_loop(grad, s_hist, y_hist):
    """Approximate ``H^{-1} grad`` from curvature pairs (oldest first).

    With no pairs this is ``grad`` itself. The initial inverse Hessian is
    ``(s.y / y.y) I`` from the newest pair.
    """
    q = np.array(grad, dtype=np.float64)
    if not s_hist:
        return q
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    s, y = s_hist[-1], y_hist[-1]
    q *= (s @ y) / (y @ y)
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def lbfgs_step(state, params, evaluator):
    """One quasi-Newton update with step length ``state.lr`` and no line search.

    Returns ``(new_params, loss, grad_inf_norm, terminated)`` where loss and
    gradient are those at ``new_params``.
    """
    params = np.asarray(params, dtype=np.float64)
    if state.grad is None:
        state.loss, state.grad = _checked(evaluator, params)
    step = -state.lr * two_loop(state.grad, state.s_hist, state.y_hist)
    new = params + step
    loss, grad = _checked(evaluator, new)

    s, y = new - params, grad - state.grad
    if s @ y > CURVATURE_EPS:
        state.s_hist.append(s)
        state.y_hist.append(y)
        while len(state.s_hist) > state.history_size:
            state.s_hist.popleft()
            state.y_hist.popleft()
    else:
        state.n_skipped += 1

    gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
    dloss = abs(loss - state.loss)
    dparam = float(np.max(np.abs(s))) if s.size else 0.0
    terminated = (state.tol_grad > 0 and gnorm <= state.tol_grad) or (
        state.tol_change > 0 and dloss <= state.tol_change and dparam <= state.tol_change
    )
    state.loss, state.grad = loss, grad
    return new, loss, gnorm, terminated


def adam_step(state, params, evaluator):
    """Bias-corrected Adam update. Returns ``(new_params, loss)``; loss is at ``params``."""
    params = np.asarray(params, dtype=np.float64)
    loss, grad = _checked(evaluator, params)
    if state.m is None:
        state.m = np.zeros_like(params)
        state.v = np.zeros_like(params)
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps), loss


class Lbfgs:
    name = "lbfgs"

    def __init__(self, lr=1.0, history_size=100, tol_grad=1e-7, tol_change=1e-9):
        self.state = LbfgsState(lr, history_size, tol_grad, tol_change, deque(), deque())

    def step(self, params, evaluator):
        new, loss, _, terminated = lbfgs_step(self.state, params, evaluator)
        return new, loss, terminated


class Adam:
    """Adam never signals termination; only ``max_iters`` or a blow-up stops it."""

    name = "adam"

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.state = AdamState(lr, beta1, beta2, eps)

    def step(self, params, evaluator):
        new, loss = adam_step(self.state, params, evaluator)
        return new, loss, False


@dataclass
class MinimizeResult:
    params: np.ndarray
    losses: list
    rmses: list
    stop_reason: str
    iterations: int

    @property
    def last_valid_iteration(self):
        return self.iterations


def minimize(config, optimizer, evaluator, params, callback=None, monitor=None):
    """Run ``optimizer`` until termination, ``config.max_iters`` or blow-up.

    ``monitor(params) -> test RMSE`` is evaluated after every iteration and
    passed with the iteration number (1-based) and train loss to
    ``callback(iteration, loss, rmse, params)``. Stop reasons are
    ``"max-iters"``, ``"tolerance"`` and ``"blow-up"``; on blow-up the
    returned parameters are the last finite ones.
    """
    params = np.asarray(params, dtype=np.float64).copy()
    losses, rmses = [], []
    reason = "max-iters"
    it = 0
    # Overflow on the way to a blow-up is expected; it is reported via stop_reason.
    with np.errstate(over="ignore", invalid="ignore"):
        while it < config.max_iters:
            try:
                new, loss, terminated = optimizer.step(params, evaluator)
            except BlowUpError:
                reason = "blow-up"
                break
            if not np.all(np.isfinite(new)):
                reason = "blow-up"
                break
            it += 1
            params = new
            rmse = float(monitor(params)) if monitor is not None else float("nan")
            losses.append(float(loss))
            rmses.append(rmse)
            if callback is not None:
                callback(it, float(loss), rmse, params)
            if terminated:
                reason = "tolerance"
                break
    return MinimizeResult(params, losses, rmses, reason, it)
