"""Stochastic optimizers, convergence detection, and deterministic minimization.

One ``fit`` is sequential and fully determined by its config seed; independent
fits are safe to run concurrently. The deterministic path (BFGS on closed-form
objectives) exists so the Gaussian case study carries no stochastic
optimization error at all.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize as sp_optimize

from .divergences import DivergenceSpec, analytic_divergence
from .families import Family, UnsupportedOperation
from .gradients import (
    GradientEstimate,
    entropy_form_rp_gradient,
    rp_gradient,
    score_gradient,
    tail_adaptive_gradient,
)
from .targets import TargetModel

Array = np.ndarray

_METHODS = ("sgd", "rmsprop", "adam")


@dataclass
class OptimizerConfig:
    method: str = "rmsprop"
    step_size: float = 1e-3
    max_iters: Optional[int] = None  # None: experiment-appropriate default (10,000)
    rho: float = 0.9  # RMSProp accumulator decay
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    window: int = 500
    tolerance: float = 1e-4
    seed: int = 0
    draws: Optional[int] = None  # None: 10 for exclusive KL, 200 otherwise
    smoothing: float = 0.98
    snapshot_every: int = 100

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.window < 2:
            raise ValueError("window must be >= 2")


class OptState:
    """Per-run accumulators for the adaptive methods."""

    def __init__(self, k: int):
        self.acc = np.zeros(k)
        self.m = np.zeros(k)
        self.v = np.zeros(k)
        self.t = 0


def step(config: OptimizerConfig, state: OptState, grad: Array, lam: Array) -> Array:
    """One descent update; non-finite gradients leave lambda and state unchanged."""
    if not np.all(np.isfinite(grad)):
        return lam
    eta = config.step_size
    if config.method == "sgd":
        return lam - eta * grad
    if config.method == "rmsprop":
        state.acc = config.rho * state.acc + (1.0 - config.rho) * grad * grad
        return lam - eta * grad / np.sqrt(state.acc + config.eps)
    state.t += 1
    state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad
    state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad * grad
    m_hat = state.m / (1.0 - config.beta1**state.t)
    v_hat = state.v / (1.0 - config.beta2**state.t)
    return lam - eta * m_hat / (np.sqrt(v_hat) + config.eps)


def check_convergence(
    smoothed_losses, lam_now: Array, lam_before: Array, window: int, tolerance: float
) -> bool:
    """Window-mean loss stability plus parameter movement below tolerance.

    True when the two most recent disjoint windows of the smoothed loss have
    relative mean change below ``tolerance`` and the parameter vector moved by
    less than ``tolerance`` (relative, with a +1 guard for small parameters).
    """
    smoothed = np.asarray(smoothed_losses, dtype=float)
    if smoothed.shape[0] < 2 * window:
        return False
    m_prev = float(np.mean(smoothed[-2 * window : -window]))
    m_last = float(np.mean(smoothed[-window:]))
    loss_ok = abs(m_last - m_prev) / (1.0 + abs(m_prev)) < tolerance
    move = float(np.linalg.norm(lam_now - lam_before)) / (
        1.0 + float(np.linalg.norm(lam_now))
    )
    return loss_ok and move < tolerance


@dataclass
class OptTrace:
    losses: list = field(default_factory=list)
    smoothed: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)  # iter -> lambda copy
    termination: str = "MaxIters"
    iterations: int = 0
    n_failed: int = 0
    best_smoothed: float = np.inf
    best_iteration: int = 0
    final_state: dict = field(default_factory=dict)  # optimizer accumulators, for checkpoints


_ESTIMATORS = {
    "score": lambda spec, fam, lam, target, draws: score_gradient(spec, fam, lam, target, draws),
    "rp": lambda spec, fam, lam, target, draws: rp_gradient(spec, fam, lam, target, draws),
    "entropy_rp": lambda spec, fam, lam, target, draws: entropy_form_rp_gradient(
        fam, lam, target, draws
    ),
    "tail_adaptive": lambda spec, fam, lam, target, draws: tail_adaptive_gradient(
        fam, lam, target, draws
    ),
}


def default_estimator(spec: DivergenceSpec, family: Family) -> str:
    if spec.name == "tail_adaptive":
        return "tail_adaptive"
    if spec.name == "exclusive_kl":
        return "rp"
    if spec.mass_covering and family.supports_score:
        return "score"
    return "rp"


def validate_combination(spec: DivergenceSpec, family: Family, estimator: str) -> None:
    if estimator not in _ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    if estimator == "score" and not family.supports_score:
        raise UnsupportedOperation(
            f"{family.name} has no usable log density for score estimation"
        )
    if estimator == "entropy_rp" and family.entropy_grad(family.init_values()) is None:
        raise UnsupportedOperation(f"{family.name} has no closed-form entropy")
    if spec.name == "tail_adaptive" and estimator != "tail_adaptive":
        raise ValueError("tail-adaptive divergence requires its own estimator")


def fit(
    target: TargetModel,
    family: Family,
    divergence: DivergenceSpec,
    config: OptimizerConfig,
    estimator: str = "auto",
    init_values: Optional[Array] = None,
) -> tuple[Array, OptTrace]:
    """Run stochastic optimization until convergence or max_iters.

    Returns the best-seen parameter vector by smoothed loss together with the
    trace. Aborts with termination 'Failed' when more than half the gradient
    steps so far have failed (after a short grace period).
    """
    if estimator == "auto":
        estimator = default_estimator(divergence, family)
    validate_combination(divergence, family, estimator)
    grad_fn = _ESTIMATORS[estimator]
    rng = np.random.default_rng(config.seed)
    max_iters = config.max_iters if config.max_iters is not None else 10_000
    draws_per_iter = config.draws
    if draws_per_iter is None:
        draws_per_iter = 10 if divergence.name == "exclusive_kl" else 200

    lam = family.init_values(rng) if init_values is None else np.array(init_values, float)
    state = OptState(lam.size)
    trace = OptTrace()
    ema = None
    best_lam = lam.copy()
    movement_buffer: dict[int, Array] = {0: lam.copy()}
    # the EMA keeps a large share of its initialization for ~1/(1-smoothing)
    # iterations; track the best-seen iterate only after three time constants
    # so early noise cannot win
    burn_in = min(int(np.ceil(3.0 / max(1.0 - config.smoothing, 1e-6))), max_iters)

    for t in range(1, max_iters + 1):
        draws = family.draw_base(rng, draws_per_iter)
        try:
            est: GradientEstimate = grad_fn(divergence, family, lam, target, draws)
            failed = est.failed or not np.all(np.isfinite(est.grad))
        except (ValueError, FloatingPointError):
            est, failed = None, True
        trace.iterations = t
        if failed:
            trace.n_failed += 1
            if t >= 20 and trace.n_failed > 0.5 * t:
                trace.termination = "Failed"
                break
            continue
        lam = step(config, state, est.grad, lam)
        loss = est.loss
        ema = loss if ema is None else config.smoothing * ema + (1.0 - config.smoothing) * loss
        trace.losses.append(loss)
        trace.smoothed.append(ema)
        trace.grad_norms.append(float(np.linalg.norm(est.grad)))
        if t >= burn_in and ema < trace.best_smoothed:
            trace.best_smoothed = ema
            trace.best_iteration = t
            best_lam = lam.copy()
        if t % config.snapshot_every == 0:
            trace.snapshots[t] = lam.copy()
            movement_buffer[t] = lam.copy()
            eligible = [k for k in movement_buffer if k <= t - config.window]
            if eligible and check_convergence(
                trace.smoothed, lam, movement_buffer[max(eligible)], config.window, config.tolerance
            ):
                trace.termination = "Converged"
                break
            for key in [k for k in movement_buffer if k < t - 2 * config.window]:
                del movement_buffer[key]
    else:
        trace.termination = "MaxIters"
    trace.final_state = {
        "t": state.t,
        "acc": state.acc.tolist(),
        "m": state.m.tolist(),
        "v": state.v.tolist(),
    }
    return best_lam, trace


def deterministic_minimize(
    objective: Callable[[Array], float],
    x0: Array,
    grad: Optional[Callable[[Array], Array]] = None,
    gtol: float = 1e-10,
    max_iters: int = 2000,
):
    """Quasi-Newton minimization of an exact objective down to tiny gradients.

    Returns (x_star, result); raises RuntimeError when the line search fails
    before reaching a usable point.
    """
    res = sp_optimize.minimize(
        objective,
        np.asarray(x0, dtype=float),
        jac=grad,
        method="BFGS",
        options={"gtol": gtol, "maxiter": max_iters},
    )
    if not np.all(np.isfinite(res.x)):
        raise RuntimeError(f"deterministic minimization failed: {res.message}")
    return res.x, res


def mean_field_gaussian_objective(
    spec: DivergenceSpec, p_mean: Array, p_cov: Array
) -> tuple[Callable[[Array], float], Optional[Callable[[Array], Array]]]:
    """Closed-form divergence between N(p_mean, p_cov) and a mean-field Gaussian.

    The variable is lambda = (mu, log sigma). Analytic gradients are provided
    for the two KL directions; the moment-based divergences fall back to
    numerical differentiation inside BFGS and evaluate to +inf outside their
    existence region.
    """
    p_mean = np.asarray(p_mean, float)
    p_cov = np.atleast_2d(p_cov)
    d = p_mean.shape[0]
    prec = np.linalg.inv(p_cov)
    _, logdet_p = np.linalg.slogdet(p_cov)
    prec_diag = np.diag(prec)
    cov_diag = np.diag(p_cov)

    if spec.name == "exclusive_kl":

        def fun(lam):
            mu, log_sigma = lam[:d], lam[d:]
            s2 = np.exp(2.0 * log_sigma)
            diff = mu - p_mean
            return 0.5 * (
                prec_diag @ s2 + diff @ prec @ diff - d - 2.0 * np.sum(log_sigma) + logdet_p
            )

        def jac(lam):
            mu, log_sigma = lam[:d], lam[d:]
            s2 = np.exp(2.0 * log_sigma)
            return np.concatenate([prec @ (mu - p_mean), prec_diag * s2 - 1.0])

        return fun, jac

    if spec.name == "inclusive_kl":

        def fun(lam):
            mu, log_sigma = lam[:d], lam[d:]
            s2 = np.exp(2.0 * log_sigma)
            diff = mu - p_mean
            return 0.5 * (
                np.sum((cov_diag + diff**2) / s2) - d + 2.0 * np.sum(log_sigma) - logdet_p
            )

        def jac(lam):
            mu, log_sigma = lam[:d], lam[d:]
            s2 = np.exp(2.0 * log_sigma)
            diff = mu - p_mean
            return np.concatenate([diff / s2, 1.0 - (cov_diag + diff**2) / s2])

        return fun, jac

    def fun(lam):
        mu, log_sigma = lam[:d], lam[d:]
        q_cov = np.diag(np.exp(2.0 * log_sigma))
        return analytic_divergence(spec, p_mean, p_cov, mu, q_cov)

    return fun, None
