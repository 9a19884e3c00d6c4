"""Generalized-Pareto tail diagnostics and Pareto-smoothed importance weights.

The shape estimate khat of the largest importance ratios measures how many
moments of w can be trusted: floor(1/k) moments are finite, and 0.7 is the
practical reliability threshold. Weight transforms (w, w^2, sqrt w, log w,
w log w) are evaluated on a max-rescaled scale so nothing overflows; the shape
estimate is invariant to that rescaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .divergences import DivergenceSpec, MomentRequirement, WeightSet

Array = np.ndarray

KHAT_THRESHOLD = 0.7  # above this, required sample sizes are usually infeasible

WEIGHT_FUNCTIONS = ("w", "w2", "sqrt_w", "log_w", "w_log_w")

_GPD_PRIOR_STRENGTH = 10.0  # pseudo-counts pulling khat toward 0.5 for tiny tails
_GPD_PRIOR_SCALE = 3.0


@dataclass(frozen=True)
class ParetoFit:
    """Fitted GPD shape and scale for a weight tail.

    ``sigma`` and ``threshold`` are reported on the scale the fit ran on
    (max-rescaled weights for the khat_of/psis paths); ``khat`` is scale-free.
    A degenerate (all-equal) tail is marked unreliable with khat = -inf.
    """

    khat: float
    sigma: float
    tail_count: int
    threshold: float = 0.0
    reliable: bool = True


def fit_gpd(tail_sample: Array) -> ParetoFit:
    """Profile-likelihood (Zhang-Stephens style) GPD fit to positive exceedances.

    Deterministic: a grid of candidate inverse-scales is weighted by profile
    likelihood and averaged; the shape estimate is then regularized toward 0.5
    with a weak prior that matters only for very small tails.
    """
    x = np.sort(np.asarray(tail_sample, dtype=float))
    n = x.size
    if n < 5:
        return ParetoFit(khat=np.nan, sigma=np.nan, tail_count=n, reliable=False)
    if x[0] <= 0:
        raise ValueError("tail sample must be strictly positive exceedances")
    if x[-1] - x[0] < 1e-10 * max(1.0, x[-1]):
        return ParetoFit(khat=-np.inf, sigma=np.nan, tail_count=n, reliable=False)

    m_grid = 30 + int(math.isqrt(n))
    j = np.arange(1, m_grid + 1, dtype=float)
    quartile = x[int(n / 4 + 0.5) - 1]
    b = 1.0 / x[-1] + (1.0 - np.sqrt(m_grid / (j - 0.5))) / (_GPD_PRIOR_SCALE * quartile)
    k_given_b = np.mean(np.log1p(-b[:, None] * x), axis=1)
    profile = n * (np.log(-b / k_given_b) - k_given_b - 1.0)
    with np.errstate(over="ignore"):
        # dominated candidates overflow to weight 0, which is exactly right
        weights = 1.0 / np.sum(np.exp(profile[None, :] - profile[:, None]), axis=1)
    keep = weights >= 10.0 * np.finfo(float).eps
    weights, b = weights[keep], b[keep]
    weights = weights / weights.sum()
    b_post = float(np.sum(b * weights))
    khat = float(np.mean(np.log1p(-b_post * x)))
    sigma = -khat / b_post
    khat = (n * khat + _GPD_PRIOR_STRENGTH * 0.5) / (n + _GPD_PRIOR_STRENGTH)
    return ParetoFit(khat=khat, sigma=float(sigma), tail_count=n)


def tail_size(n_draws: int) -> int:
    """Number of tail draws used for fitting: min(ceil(0.2 S), ceil(3 sqrt(S)))."""
    return int(min(math.ceil(0.2 * n_draws), math.ceil(3.0 * math.sqrt(n_draws))))


def _weight_values(fn: str, log_w: Array) -> Array:
    """Apply fn to weights on a max-rescaled scale (w -> w / max w).

    Rescaling multiplies every candidate tail value by a positive constant,
    which leaves the fitted shape unchanged, and keeps exp() well inside range.
    """
    mx = np.max(log_w[np.isfinite(log_w)]) if np.any(np.isfinite(log_w)) else 0.0
    shifted = log_w - mx
    with np.errstate(over="ignore", invalid="ignore"):
        if fn == "w":
            return np.exp(shifted)
        if fn == "w2":
            return np.exp(2.0 * shifted)
        if fn == "sqrt_w":
            return np.exp(0.5 * shifted)
        if fn == "log_w":
            return np.array(log_w, copy=True)
        if fn == "w_log_w":
            vals = np.exp(shifted) * log_w
            return np.where(np.isneginf(log_w), 0.0, vals)
    raise ValueError(f"unknown weight function {fn!r}; choices: {WEIGHT_FUNCTIONS}")


def khat_of(fn: str, ws: WeightSet) -> ParetoFit:
    """Pareto-shape diagnostic for a function of the importance weights."""
    if ws.size < 25:
        raise ValueError("khat estimation needs at least 25 draws")
    vals = _weight_values(fn, ws.log_w)
    vals = vals[np.isfinite(vals)]
    m = tail_size(ws.size)
    if vals.size < m + 1:
        return ParetoFit(khat=np.nan, sigma=np.nan, tail_count=0, reliable=False)
    ordered = np.sort(vals)
    tail = ordered[-m:]
    u = float(ordered[-m - 1])
    exceed = tail - u
    exceed = exceed[exceed > 0]
    if exceed.size < 5:
        return ParetoFit(khat=-np.inf, sigma=np.nan, tail_count=int(exceed.size),
                         threshold=u, reliable=False)
    fit = fit_gpd(exceed)
    return replace(fit, threshold=u)


def _gpd_inv_cdf(p: Array, khat: float, sigma: float) -> Array:
    if abs(khat) < 1e-12:
        return -sigma * np.log1p(-p)
    return sigma * np.expm1(-khat * np.log1p(-p)) / khat


def psis_smooth(ws: WeightSet) -> tuple[WeightSet, ParetoFit]:
    """Pareto-smoothed importance weights.

    The M largest weights are replaced by the expected order statistics of the
    fitted GPD (inverse CDF at (z - 1/2)/M over the threshold), truncated at
    the raw maximum; all other weights and the draw order are untouched. When
    the tail fit is unreliable the weights come back unsmoothed with the fit
    flagged.
    """
    if ws.size < 25:
        raise ValueError("PSIS needs at least 25 draws")
    log_w = ws.log_w
    finite = np.isfinite(log_w)
    mx = np.max(log_w[finite]) if np.any(finite) else 0.0
    vals = np.exp(log_w - mx)
    m = tail_size(ws.size)
    order = np.argsort(vals, kind="stable")
    tail_idx = order[-m:]
    u = float(vals[order[-m - 1]])
    exceed = vals[tail_idx] - u
    positive = exceed[exceed > 0]
    if positive.size < 5:
        return ws, ParetoFit(khat=-np.inf, sigma=np.nan, tail_count=int(positive.size),
                             threshold=u, reliable=False)
    fit = replace(fit_gpd(positive), threshold=u, tail_count=m)
    if not fit.reliable or not np.isfinite(fit.khat):
        return ws, fit
    probs = (np.arange(1, m + 1) - 0.5) / m
    smoothed = u + _gpd_inv_cdf(probs, fit.khat, fit.sigma)
    smoothed = np.minimum(smoothed, float(vals[order[-1]]))
    new_log_w = np.array(log_w, copy=True)
    with np.errstate(divide="ignore"):
        new_log_w[tail_idx] = np.log(smoothed) + mx
    return WeightSet(log_w=new_log_w, thetas=ws.thetas), fit


def min_sample_size(khat: float) -> float:
    """Minimal Monte Carlo sample size implied by the tail shape: exp(k/(1-k)^2)."""
    if khat >= 1.0:
        return np.inf
    if np.isneginf(khat):
        return 1.0
    return float(np.exp(khat / (1.0 - khat) ** 2))


def moments_required(spec: DivergenceSpec) -> Optional[MomentRequirement]:
    """Finite moments of w needed to estimate the divergence (None if undefined)."""
    return spec.required_moments
