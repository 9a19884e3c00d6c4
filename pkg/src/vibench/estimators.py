"""Posterior summaries from a fitted approximation: plain, SNIS, and PSIS moments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from .diagnostics import khat_of, psis_smooth
from .divergences import WeightSet
from .families import Family
from .targets import TargetModel, TargetTruth

Array = np.ndarray

METHODS = ("plain_q", "snis", "psis")


@dataclass(frozen=True)
class MomentEstimate:
    mean: Array
    cov: Array
    method: str
    khat: Optional[float] = None
    reliable: bool = True

    def __post_init__(self):
        asym = np.max(np.abs(self.cov - self.cov.T)) if self.cov.size else 0.0
        if asym > 1e-8:
            raise ValueError("covariance estimate must be symmetric")


def snis_expectation(ws: WeightSet, phi_values: Array) -> Array:
    """Self-normalized importance sampling estimate of E_p[phi].

    ``phi_values`` holds phi evaluated at the draws, shape (S,) or (S, m).
    """
    phi = np.atleast_2d(np.asarray(phi_values, dtype=float).reshape(ws.size, -1))
    wbar = ws.normalized()
    return wbar @ phi


def _weighted_moments(thetas: Array, wbar: Array) -> tuple[Array, Array]:
    mean = wbar @ thetas
    dev = thetas - mean
    cov = (dev * wbar[:, None]).T @ dev
    return mean, 0.5 * (cov + cov.T)


def estimate_moments(
    family: Family,
    values: Array,
    target: TargetModel,
    size: int,
    method: str = "psis",
    seed: int = 0,
) -> MomentEstimate:
    """Mean/covariance of the target posterior estimated through q.

    plain_q ignores the weights entirely; snis reweights by the raw
    self-normalized ratios; psis smooths the weight tail first. The khat of the
    weight tail rides along as the reliability diagnostic.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if method != "plain_q" and size < 25:
        raise ValueError("weighted moment estimation needs at least 25 draws")
    draws = family.draw_base(seed, size)
    thetas, logq = family.transform(values, draws.eps)
    if method == "plain_q":
        mean = thetas.mean(axis=0)
        dev = thetas - mean
        cov = dev.T @ dev / size
        return MomentEstimate(mean=mean, cov=0.5 * (cov + cov.T), method=method)
    logp = np.atleast_1d(target.log_joint(thetas))
    ws = WeightSet(log_w=logp - logq, thetas=thetas)
    if method == "snis":
        fit = khat_of("w", ws)
        mean, cov = _weighted_moments(thetas, ws.normalized())
        return MomentEstimate(mean=mean, cov=cov, method=method, khat=fit.khat,
                              reliable=fit.reliable)
    smoothed, fit = psis_smooth(ws)
    mean, cov = _weighted_moments(thetas, smoothed.normalized())
    return MomentEstimate(mean=mean, cov=cov, method=method, khat=fit.khat,
                          reliable=fit.reliable)


class RelativeError(NamedTuple):
    mean_err: float
    cov_err: float


def relative_error(
    est: MomentEstimate, truth: Union[TargetTruth, tuple[Array, Array]]
) -> RelativeError:
    """Norm-relative errors against ground truth moments.

    mean error uses a max(||mu||, 1) denominator so zero-mean targets stay
    finite; covariance error is relative Frobenius.
    """
    if isinstance(truth, TargetTruth):
        true_mean, true_cov = truth.mean, truth.cov
    else:
        true_mean, true_cov = truth
    true_mean = np.asarray(true_mean, float)
    true_cov = np.atleast_2d(true_cov)
    mean_err = float(
        np.linalg.norm(est.mean - true_mean) / max(np.linalg.norm(true_mean), 1.0)
    )
    cov_err = float(
        np.linalg.norm(est.cov - true_cov, "fro") / np.linalg.norm(true_cov, "fro")
    )
    return RelativeError(mean_err=mean_err, cov_err=cov_err)
