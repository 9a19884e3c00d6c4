"""Fully factorized Gaussian and Student-t families.

Parameter layout for both: values = (mu_1..mu_D, log sigma_1..log sigma_D).
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.special import betaln, digamma

from ..numkit import LOG_2PI, student_t_logpdf
from .base import Array, Family


def _split(values: Array, dim: int) -> tuple[Array, Array, Array]:
    mu = values[:dim]
    log_sigma = values[dim:]
    return mu, log_sigma, np.exp(log_sigma)


class MeanFieldGaussian(Family):
    name = "mf_gaussian"

    def __init__(self, dim: int):
        self.dim = dim
        self.param_count = 2 * dim

    def init_values(self, rng: Optional[np.random.Generator] = None) -> Array:
        return np.zeros(self.param_count)

    def transform(self, values, eps):
        mu, log_sigma, sigma = _split(values, self.dim)
        thetas = mu + sigma * eps
        logq = (
            -np.sum(log_sigma)
            - 0.5 * np.sum(eps * eps, axis=1)
            - 0.5 * self.dim * LOG_2PI
        )
        self._check_finite(thetas, logq)
        return thetas, logq

    def pullback(self, values, eps, theta_cot, ldj_cot):
        _, _, sigma = _split(values, self.dim)
        out = np.empty((eps.shape[0], self.param_count))
        out[:, : self.dim] = theta_cot
        out[:, self.dim :] = theta_cot * sigma * eps + ldj_cot
        return out

    def logq(self, values, theta):
        mu, log_sigma, sigma = _split(values, self.dim)
        z = (np.atleast_2d(theta) - mu) / sigma
        return -np.sum(log_sigma) - 0.5 * np.sum(z * z, axis=1) - 0.5 * self.dim * LOG_2PI

    def score_grad_logq(self, values, theta):
        mu, _, sigma = _split(values, self.dim)
        theta = np.atleast_2d(theta)
        z = (theta - mu) / sigma
        return np.concatenate([z / sigma, z * z - 1.0], axis=1)

    def entropy(self, values):
        _, log_sigma, _ = _split(values, self.dim)
        return float(np.sum(log_sigma) + 0.5 * self.dim * (1.0 + LOG_2PI))

    def entropy_grad(self, values):
        g = np.zeros(self.param_count)
        g[self.dim :] = 1.0
        return g


class MeanFieldStudentT(Family):
    """Product of independent location-scale t densities with shared nu.

    The base draws are standard t variates (the chi-square part of the
    reparameterization is folded into the draw and not differentiated), so the
    transform is linear in eps exactly as in the Gaussian case.
    """

    name = "mf_student_t"

    def __init__(self, dim: int, nu: float = 7.0):
        if nu <= 0:
            raise ValueError("nu must be positive")
        self.dim = dim
        self.nu = float(nu)
        self.param_count = 2 * dim

    def options(self) -> dict:
        return {"nu": self.nu}

    def _base_sample(self, rng, size):
        return rng.standard_t(self.nu, size=(size, self.dim))

    def init_values(self, rng: Optional[np.random.Generator] = None) -> Array:
        return np.zeros(self.param_count)

    def transform(self, values, eps):
        mu, log_sigma, sigma = _split(values, self.dim)
        thetas = mu + sigma * eps
        logq = np.sum(student_t_logpdf(eps, self.nu), axis=1) - np.sum(log_sigma)
        self._check_finite(thetas, logq)
        return thetas, logq

    def pullback(self, values, eps, theta_cot, ldj_cot):
        _, _, sigma = _split(values, self.dim)
        out = np.empty((eps.shape[0], self.param_count))
        out[:, : self.dim] = theta_cot
        out[:, self.dim :] = theta_cot * sigma * eps + ldj_cot
        return out

    def logq(self, values, theta):
        mu, _, sigma = _split(values, self.dim)
        return np.sum(student_t_logpdf(np.atleast_2d(theta), self.nu, mu, sigma), axis=1)

    def score_grad_logq(self, values, theta):
        mu, _, sigma = _split(values, self.dim)
        theta = np.atleast_2d(theta)
        r = (theta - mu) / sigma
        coef = (self.nu + 1.0) * r / (self.nu + r * r)
        return np.concatenate([coef / sigma, coef * r - 1.0], axis=1)

    def entropy(self, values):
        _, log_sigma, _ = _split(values, self.dim)
        nu = self.nu
        h_std = (
            (nu + 1.0) / 2.0 * (digamma((nu + 1.0) / 2.0) - digamma(nu / 2.0))
            + 0.5 * np.log(nu)
            + betaln(nu / 2.0, 0.5)
        )
        return float(np.sum(log_sigma) + self.dim * h_std)

    def entropy_grad(self, values):
        g = np.zeros(self.param_count)
        g[self.dim :] = 1.0
        return g
