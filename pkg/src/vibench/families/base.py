"""Common machinery for variational families.

A family is a fixed structure (dimension, depth, ...) over which a flat
parameter vector ``values`` ranges; all of R^K is valid because scales are
stored as logs. Sampling is reparameterized: draws are produced by pushing
base draws through ``transform``, so results are reproducible for a given
BaseDraws regardless of scheduling.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

Array = NDArray[np.float64]


class UnsupportedOperation(RuntimeError):
    """Raised when a family lacks an operation (e.g. planar-flow log density)."""


@dataclass(frozen=True)
class BaseDraws:
    """Base-distribution draws, one row per Monte Carlo draw."""

    eps: Array  # (S, D)
    seed: Optional[int] = None

    @property
    def size(self) -> int:
        return self.eps.shape[0]


class Family(ABC):
    """Variational family q_lambda with reparameterized sampling and gradient hooks."""

    name: str
    dim: int
    param_count: int

    def draw_base(self, seed_or_rng, size: int) -> BaseDraws:
        rng = np.random.default_rng(seed_or_rng)
        seed = seed_or_rng if isinstance(seed_or_rng, (int, np.integer)) else None
        return BaseDraws(eps=self._base_sample(rng, size), seed=seed)

    def _base_sample(self, rng: np.random.Generator, size: int) -> Array:
        return rng.standard_normal((size, self.dim))

    @abstractmethod
    def init_values(self, rng: Optional[np.random.Generator] = None) -> Array:
        """Starting parameter vector (near-identity for flows)."""

    @abstractmethod
    def transform(self, values: Array, eps: Array) -> tuple[Array, Array]:
        """Map base draws to (thetas, logq), both computed jointly.

        ``eps`` has shape (S, D); returns thetas (S, D) and logq (S,).
        Raises ValueError naming the offending draw if outputs are non-finite.
        """

    @abstractmethod
    def pullback(self, values: Array, eps: Array, theta_cot: Array, ldj_cot: float) -> Array:
        """Per-draw parameter cotangents of the transform.

        Returns the (S, K) array whose row s is
        ``(dT/dlambda)^T theta_cot[s] + ldj_cot * d(log det J)/dlambda``
        evaluated at base draw eps[s]. This single primitive backs both the
        parameter-Jacobian product (ldj_cot=0) and reparameterized gradients
        of log-density terms.
        """

    def param_jacobian_vec(self, values: Array, eps: Array, cotangent: Array) -> Array:
        """(dT/dlambda)^T cotangent, one row per draw."""
        return self.pullback(values, np.atleast_2d(eps), np.atleast_2d(cotangent), 0.0)

    def logq(self, values: Array, theta: Array) -> Array:
        raise UnsupportedOperation(f"{self.name} cannot evaluate log q at arbitrary points")

    def score_grad_logq(self, values: Array, theta: Array) -> Array:
        """Per-point gradient of log q_lambda at fixed theta, shape (S, K)."""
        raise UnsupportedOperation(f"{self.name} does not support score gradients")

    def entropy(self, values: Array) -> Optional[float]:
        return None

    def entropy_grad(self, values: Array) -> Optional[Array]:
        return None

    @property
    def supports_score(self) -> bool:
        try:
            self.score_grad_logq(self.init_values(), np.zeros((1, self.dim)))
        except UnsupportedOperation:
            return False
        except Exception:
            return True
        return True

    def options(self) -> dict:
        return {}

    def _check_finite(self, thetas: Array, logq: Array) -> None:
        bad = ~(np.all(np.isfinite(thetas), axis=1) & np.isfinite(logq))
        if np.any(bad):
            idx = int(np.flatnonzero(bad)[0])
            raise ValueError(f"non-finite transform output at draw index {idx}")


@dataclass
class FamilyParams:
    """A family together with a concrete parameter vector; JSON-serializable."""

    family: Family
    values: Array

    def to_dict(self) -> dict:
        return {
            "family": self.family.name,
            "dim": self.family.dim,
            "values": [float(v) for v in np.asarray(self.values).ravel()],
            "options": self.family.options(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FamilyParams":
        from . import make_family

        fam = make_family(doc["family"], doc["dim"], **doc.get("options", {}))
        values = np.asarray(doc["values"], dtype=float)
        if values.size != fam.param_count:
            raise ValueError(
                f"expected {fam.param_count} values for {fam.name}, got {values.size}"
            )
        return cls(family=fam, values=values)
