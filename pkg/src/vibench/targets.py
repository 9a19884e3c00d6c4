"""Target posteriors on unconstrained space.

Every target exposes the log joint density, its gradient, and (when known)
analytic moments. Constrained parameters are mapped to the real line with a
log transform plus Jacobian correction, so all families can be used directly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray

from .numkit import (
    LOG_2PI,
    CholeskyFactor,
    CovarianceSpec,
    build_covariance,
    normal_logpdf,
    student_t_logpdf,
)

Array = NDArray[np.float64]


@dataclass(frozen=True)
class TargetTruth:
    mean: Array
    cov: Array
    log_normalizer: float


@dataclass(frozen=True)
class TargetModel:
    """Unconstrained-space log joint density with gradient.

    ``log_joint`` accepts a single point of shape (D,) or a batch (S, D);
    ``grad_log_joint`` accepts a single point only.
    """

    name: str
    dim: int
    log_joint: Callable[[Array], Array]
    grad_log_joint: Callable[[Array], Array]
    truth: Optional[TargetTruth] = None


@dataclass(frozen=True)
class RegressionDataset:
    X: Array
    y: Array
    beta: Array  # generating coefficients, kept for provenance


class Parameterization(str, Enum):
    CENTERED = "centered"
    NON_CENTERED = "non_centered"


def make_correlated_gaussian(
    spec: CovarianceSpec, normalized: bool = True
) -> TargetModel:
    """Zero-mean Gaussian target with analytic truth.

    With ``normalized=True`` (default) the log joint is the normalized log
    density and the stored log normalizer is 0; otherwise the log joint drops
    the constant and the normalizer is recorded in ``truth``.
    """
    cov = build_covariance(spec)
    chol = CholeskyFactor.from_cov(cov)
    prec = chol.solve(np.eye(spec.dim))
    const = 0.5 * (spec.dim * LOG_2PI + chol.log_det)

    def log_joint(theta):
        theta = np.asarray(theta, dtype=float)
        quad = np.sum((theta @ prec) * theta, axis=-1)
        out = -0.5 * quad - (const if normalized else 0.0)
        return float(out) if theta.ndim == 1 else out

    def grad_log_joint(theta):
        return -np.asarray(theta, dtype=float) @ prec

    return TargetModel(
        name=f"correlated_gaussian_{spec.kind.value}_d{spec.dim}_rho{spec.rho:g}",
        dim=spec.dim,
        log_joint=log_joint,
        grad_log_joint=grad_log_joint,
        truth=TargetTruth(
            mean=np.zeros(spec.dim),
            cov=cov,
            log_normalizer=0.0 if normalized else const,
        ),
    )


def make_robust_regression(
    D: int, N: int, rho: float = 0.4, seed: int = 0
) -> tuple[TargetModel, RegressionDataset]:
    """Student-t regression with Gaussian priors; data simulated from the model.

    Model: beta_d ~ N(0, sd=10), y_n | x_n ~ t_10(beta' x_n, 1). Covariates are
    zero-mean Gaussian with constant correlation ``rho``.
    """
    if D < 1 or N < 0:
        raise ValueError("need D >= 1 and N >= 0")
    rng = np.random.default_rng(seed)
    nu, prior_sd = 10.0, 10.0
    if N > 0:
        cov = build_covariance(CovarianceSpec(kind="uniform", rho=rho, dim=D)) \
            if D > 1 else np.eye(1)
        X = rng.multivariate_normal(np.zeros(D), cov, size=N)
        beta = rng.normal(0.0, prior_sd, size=D)
        y = X @ beta + rng.standard_t(nu, size=N)
    else:
        X = np.zeros((0, D))
        beta = np.zeros(D)
        y = np.zeros(0)
    data = RegressionDataset(X=X, y=y, beta=beta)

    def log_joint(b):
        b = np.asarray(b, dtype=float)
        prior = np.sum(normal_logpdf(b, 0.0, prior_sd), axis=-1)
        if N == 0:
            out = prior
        else:
            mu = b @ X.T  # (..., N)
            out = np.sum(student_t_logpdf(y, nu, mu, 1.0), axis=-1) + prior
        return float(out) if b.ndim == 1 else out

    def grad_log_joint(b):
        b = np.asarray(b, dtype=float)
        grad = -b / prior_sd**2
        if N > 0:
            resid = y - X @ b
            grad = grad + X.T @ ((nu + 1.0) * resid / (nu + resid**2))
        return grad

    target = TargetModel(
        name=f"robust_regression_d{D}_n{N}",
        dim=D,
        log_joint=log_joint,
        grad_log_joint=grad_log_joint,
    )
    return target, data


def load_eight_schools_data() -> tuple[Array, Array]:
    """Read the bundled eight-schools fixture; returns (y, sigma)."""
    path = resources.files("vibench").joinpath("data/eight_schools.csv")
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    y = np.array([float(r["y"]) for r in rows])
    sigma = np.array([float(r["sigma"]) for r in rows])
    return y, sigma


def _half_cauchy_logpdf(tau, scale=5.0):
    return np.log(2.0) - np.log(np.pi * scale) - np.log1p((tau / scale) ** 2)


def make_eight_schools(
    parameterization: Parameterization | str = Parameterization.CENTERED,
) -> TargetModel:
    """Hierarchical eight-schools model on unconstrained space (D=10).

    Centered coordinates are (theta_1..theta_8, mu, log tau); non-centered are
    (eta_1..eta_8, mu, log tau) with theta_j = mu + tau * eta_j. Priors are
    mu ~ N(0, 5), tau ~ half-Cauchy(0, 5); tau carries the log-transform
    Jacobian.
    """
    parameterization = Parameterization(parameterization)
    y, sigma = load_eight_schools_data()
    J = len(y)
    dim = J + 2
    mu_sd = 5.0

    if parameterization == Parameterization.CENTERED:

        def log_joint(params):
            params = np.asarray(params, dtype=float)
            theta = params[..., :J]
            mu = params[..., J]
            log_tau = params[..., J + 1]
            tau = np.exp(log_tau)
            lp = np.sum(normal_logpdf(y, theta, sigma), axis=-1)
            lp += np.sum(normal_logpdf(theta, mu[..., None], tau[..., None]), axis=-1)
            lp += normal_logpdf(mu, 0.0, mu_sd)
            lp += _half_cauchy_logpdf(tau) + log_tau
            return float(lp) if params.ndim == 1 else lp

        def grad_log_joint(params):
            theta = params[:J]
            mu, log_tau = params[J], params[J + 1]
            tau = np.exp(log_tau)
            dev = theta - mu
            g = np.empty(dim)
            # tau underflow produces infs here; estimator failure counting
            # downstream handles them
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                g[:J] = (y - theta) / sigma**2 - dev / tau**2
                g[J] = np.sum(dev) / tau**2 - mu / mu_sd**2
                g[J + 1] = np.sum(dev**2 / tau**2 - 1.0) - 2.0 * tau**2 / (25.0 + tau**2) + 1.0
            return g

        name = "eight_schools_centered"
    else:

        def log_joint(params):
            params = np.asarray(params, dtype=float)
            eta = params[..., :J]
            mu = params[..., J]
            log_tau = params[..., J + 1]
            tau = np.exp(log_tau)
            theta = mu[..., None] + tau[..., None] * eta
            lp = np.sum(normal_logpdf(y, theta, sigma), axis=-1)
            lp += np.sum(normal_logpdf(eta, 0.0, 1.0), axis=-1)
            lp += normal_logpdf(mu, 0.0, mu_sd)
            lp += _half_cauchy_logpdf(tau) + log_tau
            return float(lp) if params.ndim == 1 else lp

        def grad_log_joint(params):
            eta = params[:J]
            mu, log_tau = params[J], params[J + 1]
            tau = np.exp(log_tau)
            r = (y - mu - tau * eta) / sigma**2
            g = np.empty(dim)
            g[:J] = r * tau - eta
            g[J] = np.sum(r) - mu / mu_sd**2
            g[J + 1] = tau * np.sum(r * eta) - 2.0 * tau**2 / (25.0 + tau**2) + 1.0
            return g

        name = "eight_schools_non_centered"

    return TargetModel(name=name, dim=dim, log_joint=log_joint, grad_log_joint=grad_log_joint)


def finite_difference_gradient(
    f: Callable[[Array], float], theta: Array, rel_step: float = 1e-5
) -> Array:
    """Central finite differences with per-coordinate step 1e-5 * (1 + |theta_i|)."""
    theta = np.asarray(theta, dtype=float)
    g = np.zeros_like(theta)
    for i in range(theta.size):
        h = rel_step * (1.0 + abs(theta[i]))
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (2.0 * h)
    return g
