"""Dense linear algebra and elementary log densities shared by targets and families.

Everything here works in log space; raw densities are never materialized
because the density ratios encountered downstream overflow in linear space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.typing import NDArray
from scipy.special import gammaln

LOG_2PI = float(np.log(2.0 * np.pi))


class CovKind(str, Enum):
    UNIFORM = "uniform"
    BANDED = "banded"


@dataclass(frozen=True)
class CovarianceSpec:
    """Structured correlation matrix: unit diagonal, off-diagonals set by ``rho``.

    ``uniform`` puts the constant ``rho`` on every off-diagonal entry;
    ``banded`` decays as ``rho**|i-j|``.
    """

    kind: CovKind
    rho: float
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "kind", CovKind(self.kind))
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor L with Sigma = L @ L.T and cached log det Sigma."""

    L: NDArray[np.float64]
    log_det: float = field(default=0.0)

    @classmethod
    def from_cov(cls, cov: NDArray[np.float64]) -> "CholeskyFactor":
        L = np.linalg.cholesky(cov)
        return cls(L=L, log_det=2.0 * float(np.sum(np.log(np.diag(L)))))

    @property
    def dim(self) -> int:
        return self.L.shape[0]

    def solve(self, rhs: NDArray[np.float64]) -> NDArray[np.float64]:
        """Solve Sigma x = rhs via two triangular solves."""
        from scipy.linalg import solve_triangular

        y = solve_triangular(self.L, rhs, lower=True)
        return solve_triangular(self.L.T, y, lower=False)


def build_covariance(spec: CovarianceSpec) -> NDArray[np.float64]:
    """Build the correlation matrix described by ``spec``.

    Raises ValueError when the requested (kind, rho, dim) combination is not
    positive definite, detected by a failed Cholesky factorization.
    """
    d = spec.dim
    if spec.kind == CovKind.UNIFORM:
        cov = np.full((d, d), spec.rho)
        np.fill_diagonal(cov, 1.0)
    elif spec.kind == CovKind.BANDED:
        idx = np.arange(d)
        cov = spec.rho ** np.abs(idx[:, None] - idx[None, :])
        np.fill_diagonal(cov, 1.0)
    else:
        raise ValueError(f"unknown covariance kind: {spec.kind}")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as err:
        raise ValueError(
            f"covariance spec {spec} is not positive definite"
        ) from err
    return cov


def mvn_logpdf(
    theta: NDArray[np.float64],
    mean: NDArray[np.float64],
    chol: CholeskyFactor,
) -> NDArray[np.float64] | float:
    """Exact multivariate normal log density.

    Parameters
    ----------
    theta : array, shape (D,) or (S, D)
        Evaluation points; a matrix is treated as S stacked points.
    mean : array, shape (D,)
    chol : CholeskyFactor
        Factor of the covariance matrix.

    Returns
    -------
    float or array of shape (S,)
    """
    theta = np.asarray(theta, dtype=float)
    mean = np.asarray(mean, dtype=float)
    d = chol.dim
    if theta.shape[-1] != d or mean.shape[-1] != d:
        raise ValueError(
            f"dimension mismatch: theta {theta.shape}, mean {mean.shape}, chol dim {d}"
        )
    diff = theta - mean
    # Mahalanobis term via one triangular solve: ||L^{-1} diff||^2.
    from scipy.linalg import solve_triangular

    z = solve_triangular(chol.L, diff.T, lower=True)
    maha = np.sum(z * z, axis=0)
    out = -0.5 * (d * LOG_2PI + chol.log_det + maha)
    return float(out) if theta.ndim == 1 else out


def student_t_logpdf(x, nu: float, loc=0.0, scale=1.0):
    """Log density of the location-scale Student-t distribution (elementwise)."""
    if nu <= 0:
        raise ValueError(f"nu must be positive, got {nu}")
    if np.any(np.asarray(scale) <= 0):
        raise ValueError("scale must be positive")
    x = np.asarray(x, dtype=float)
    z = (x - loc) / scale
    return (
        gammaln((nu + 1.0) / 2.0)
        - gammaln(nu / 2.0)
        - 0.5 * np.log(nu * np.pi)
        - np.log(scale)
        - ((nu + 1.0) / 2.0) * np.log1p(z * z / nu)
    )


def log_sum_exp(v: NDArray[np.float64]) -> float:
    """log(sum(exp(v))) with max subtraction; tolerates -inf entries."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty vector")
    m = np.max(v)
    if not np.isfinite(m):
        # all -inf (m = -inf) or overflow already present (m = +inf)
        return float(m)
    return float(m + np.log(np.sum(np.exp(v - m))))


def normal_logpdf(x, mean=0.0, sd=1.0):
    """Scalar normal log density, elementwise."""
    x = np.asarray(x, dtype=float)
    z = (x - mean) / sd
    return -0.5 * z * z - np.log(sd) - 0.5 * LOG_2PI
