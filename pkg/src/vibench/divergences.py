"""f-divergence definitions, Monte Carlo losses, and closed-form Gaussian values.

All weight handling is in log space. Density ratios w = p(theta, Y)/q(theta)
are carried as log w; exponentials happen at the last moment and overflow is
counted rather than allowed to poison averages.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import logsumexp

from .numkit import LOG_2PI

Array = np.ndarray


class NotPositiveDefinite(ValueError):
    """A covariance combination required by a closed form is not PD."""


@dataclass(frozen=True)
class MomentRequirement:
    """Finite moments of w needed for reliable estimation.

    ``plus_delta`` marks the open-ended entries: any positive moment (value 0)
    or strictly more than ``value`` moments.
    """

    value: float
    plus_delta: bool = False


@dataclass(frozen=True)
class DivergenceSpec:
    """A convex f with f(1) = 0, its derivative, and bookkeeping flags.

    ``mass_covering`` marks the divergences whose estimators must switch to
    self-normalized weights (inclusive KL and alpha > 1).
    """

    name: str
    required_moments: Optional[MomentRequirement]
    mass_covering: bool
    alpha: Optional[float] = None

    def f_of_logw(self, log_w):
        log_w = np.asarray(log_w, dtype=float)
        with np.errstate(over="ignore"):
            if self.name == "exclusive_kl":
                return -log_w
            if self.name == "inclusive_kl":
                return np.exp(log_w) * log_w
            if self.name == "chi_sq":
                return 0.5 * (np.exp(2.0 * log_w) - np.exp(log_w))
            if self.name == "alpha":
                a = self.alpha
                return (np.exp(a * log_w) - np.exp(log_w)) / (a * (a - 1.0))
        raise ValueError(f"{self.name} has no pointwise f (rank-based objective)")

    def fprime_of_logw(self, log_w):
        """df/dw, evaluated from log w so small weights stay accurate."""
        log_w = np.asarray(log_w, dtype=float)
        with np.errstate(over="ignore"):
            if self.name == "exclusive_kl":
                return -np.exp(-log_w)
            if self.name == "inclusive_kl":
                return log_w + 1.0
            if self.name == "chi_sq":
                return np.exp(log_w) - 0.5
            if self.name == "alpha":
                a = self.alpha
                return (a * np.exp((a - 1.0) * log_w) - 1.0) / (a * (a - 1.0))
        raise ValueError(f"{self.name} has no pointwise f (rank-based objective)")


EXCLUSIVE_KL = DivergenceSpec(
    "exclusive_kl", MomentRequirement(0.0, plus_delta=True), mass_covering=False
)
INCLUSIVE_KL = DivergenceSpec(
    "inclusive_kl", MomentRequirement(2.0, plus_delta=True), mass_covering=True
)
CHI_SQ = DivergenceSpec("chi_sq", MomentRequirement(4.0), mass_covering=True)
TAIL_ADAPTIVE = DivergenceSpec("tail_adaptive", None, mass_covering=False)


def alpha_divergence(alpha: float) -> DivergenceSpec:
    if alpha in (0.0, 1.0):
        raise ValueError("alpha must differ from 0 and 1")
    return DivergenceSpec(
        "alpha",
        MomentRequirement(2.0 * alpha),
        mass_covering=alpha > 1.0,
        alpha=float(alpha),
    )


def get_divergence(name: str) -> DivergenceSpec:
    """Resolve a divergence by name; 'alpha_0.5' style names carry the order."""
    table = {d.name: d for d in (EXCLUSIVE_KL, INCLUSIVE_KL, CHI_SQ, TAIL_ADAPTIVE)}
    if name in table:
        return table[name]
    if name.startswith("alpha_"):
        return alpha_divergence(float(name.split("_", 1)[1]))
    raise ValueError(f"unknown divergence {name!r}")


def divergence_label(spec: DivergenceSpec) -> str:
    return f"alpha_{spec.alpha:g}" if spec.name == "alpha" else spec.name


@dataclass(frozen=True)
class WeightSet:
    """Log density ratios for S draws, kept in log space throughout."""

    log_w: Array
    thetas: Optional[Array] = field(default=None, compare=False)

    def __post_init__(self):
        lw = np.asarray(self.log_w, dtype=float)
        if np.any(np.isposinf(lw)) or np.any(np.isnan(lw)):
            raise ValueError("log weights must be < +inf and not NaN")
        object.__setattr__(self, "log_w", lw)

    @property
    def size(self) -> int:
        return self.log_w.shape[0]

    def normalized(self) -> Array:
        """Self-normalized weights summing to 1.

        Canonicalized by max subtraction before exponentiating, so a common
        shift of the log weights (the unknown normalizer) cancels exactly.
        """
        m = np.max(self.log_w)
        if not np.isfinite(m):
            raise ValueError("all log weights are -inf")
        e = np.exp(self.log_w - m)
        return e / np.sum(e)


class LossEstimate(NamedTuple):
    value: float
    overflow_count: int


def f_eval(spec: DivergenceSpec, log_w: float) -> float:
    """Pointwise f(w) from log w; overflow saturates to +inf."""
    return float(spec.f_of_logw(log_w))


def mc_loss(
    spec: DivergenceSpec, ws: WeightSet, self_normalize: Optional[bool] = None
) -> LossEstimate:
    """Monte Carlo estimate of E_q[f(w)].

    The inclusive KL and alpha > 1 losses default to the self-normalized form,
    which is invariant to the unknown normalizer (chi-squared supports it on
    request); pass ``self_normalize=False`` to force the plain average, which
    is meaningful when the target is normalized. Overflowed draws are dropped
    from the average and counted.
    """
    if ws.size < 1:
        raise ValueError("need at least one draw")
    if self_normalize is None:
        self_normalize = spec.name == "inclusive_kl" or (
            spec.name == "alpha" and spec.alpha > 1.0
        )
    log_w = ws.log_w
    if self_normalize:
        if spec.name == "inclusive_kl":
            # sum_s wbar_s log w_s; contributions from w=0 draws vanish
            wbar = ws.normalized()
            with np.errstate(invalid="ignore"):
                terms = np.where(wbar > 0.0, wbar * log_w, 0.0)
            return LossEstimate(float(np.sum(terms)), 0)
        if spec.name in ("alpha", "chi_sq"):
            # SNIS estimate of E_p[f(w)/w]: (sum_s wbar_s w_s^(a-1) - 1)/denom
            a = 2.0 if spec.name == "chi_sq" else spec.alpha
            denom = 2.0 if spec.name == "chi_sq" else a * (a - 1.0)
            if not np.isfinite(np.max(log_w)):
                raise ValueError("all log weights are -inf")
            with np.errstate(over="ignore"):
                ratio = np.exp(logsumexp(a * log_w) - logsumexp(log_w))
            if not np.isfinite(ratio):
                return LossEstimate(np.inf, 1)
            return LossEstimate(float((ratio - 1.0) / denom), 0)
        raise ValueError(f"self-normalized loss not defined for {spec.name}")
    vals = spec.f_of_logw(log_w)
    finite = np.isfinite(vals)
    overflow = int(ws.size - np.count_nonzero(finite))
    if overflow == ws.size:
        return LossEstimate(np.inf, overflow)
    return LossEstimate(float(np.mean(vals[finite])), overflow)


def _chol_logdet(cov: Array) -> tuple[Array, float]:
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefinite(str(err)) from None
    return L, 2.0 * float(np.sum(np.log(np.diag(L))))


def gaussian_kl(q_mean, q_cov, p_mean, p_cov, direction: str = "exclusive") -> float:
    """Exact KL between Gaussians: KL(q||p) ('exclusive') or KL(p||q) ('inclusive')."""
    if direction == "exclusive":
        m0, c0, m1, c1 = q_mean, q_cov, p_mean, p_cov
    elif direction == "inclusive":
        m0, c0, m1, c1 = p_mean, p_cov, q_mean, q_cov
    else:
        raise ValueError(f"direction must be exclusive or inclusive, got {direction!r}")
    m0, m1 = np.asarray(m0, float), np.asarray(m1, float)
    c0, c1 = np.atleast_2d(c0), np.atleast_2d(c1)
    d = m0.shape[0]
    l1, logdet1 = _chol_logdet(c1)
    _, logdet0 = _chol_logdet(c0)
    from scipy.linalg import cho_solve

    sol = cho_solve((l1, True), c0)
    diff = m1 - m0
    maha = diff @ cho_solve((l1, True), diff)
    return 0.5 * (np.trace(sol) + maha - d + logdet1 - logdet0)


def gaussian_power_integral(t: float, p_mean, p_cov, q_mean, q_cov) -> float:
    """log integral of p^t q^(1-t) for Gaussians p and q.

    E_q[w^t] = exp(value at t); raises NotPositiveDefinite when the combined
    precision t*inv(p_cov) + (1-t)*inv(q_cov) is not PD, in which case the
    corresponding analytic divergence is +inf.
    """
    p_mean, q_mean = np.asarray(p_mean, float), np.asarray(q_mean, float)
    p_cov, q_cov = np.atleast_2d(p_cov), np.atleast_2d(q_cov)
    d = p_mean.shape[0]
    lp, logdet_p = _chol_logdet(p_cov)
    lq, logdet_q = _chol_logdet(q_cov)
    from scipy.linalg import cho_solve

    lam_p = cho_solve((lp, True), np.eye(d))
    lam_q = cho_solve((lq, True), np.eye(d))
    lam = t * lam_p + (1.0 - t) * lam_q
    l_lam, logdet_lam = _chol_logdet(lam)
    eta = t * lam_p @ p_mean + (1.0 - t) * lam_q @ q_mean
    c = t * p_mean @ lam_p @ p_mean + (1.0 - t) * q_mean @ lam_q @ q_mean
    quad = eta @ cho_solve((l_lam, True), eta)
    return float(
        -0.5 * t * (d * LOG_2PI + logdet_p)
        - 0.5 * (1.0 - t) * (d * LOG_2PI + logdet_q)
        + 0.5 * (d * LOG_2PI - logdet_lam)
        + 0.5 * (quad - c)
    )


def analytic_divergence(spec: DivergenceSpec, p_mean, p_cov, q_mean, q_cov) -> float:
    """Closed-form D_f(p||q) between Gaussians for the Table-1 divergences."""
    if spec.name == "exclusive_kl":
        return gaussian_kl(q_mean, q_cov, p_mean, p_cov, "exclusive")
    if spec.name == "inclusive_kl":
        return gaussian_kl(q_mean, q_cov, p_mean, p_cov, "inclusive")
    if spec.name in ("chi_sq", "alpha"):
        a = 2.0 if spec.name == "chi_sq" else spec.alpha
        try:
            log_moment = gaussian_power_integral(a, p_mean, p_cov, q_mean, q_cov)
        except NotPositiveDefinite:
            return np.inf
        denom = 2.0 if spec.name == "chi_sq" else a * (a - 1.0)
        with np.errstate(over="ignore"):
            return float((np.exp(log_moment) - 1.0) / denom)
    raise ValueError(f"no closed form for {spec.name}")
