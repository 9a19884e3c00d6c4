"""Variational families with reparameterized sampling and gradient hooks."""

from .base import BaseDraws, Family, FamilyParams, UnsupportedOperation
from .flows import PlanarFlow, RealNVPFlow
from .mean_field import MeanFieldGaussian, MeanFieldStudentT

_REGISTRY = {
    MeanFieldGaussian.name: MeanFieldGaussian,
    MeanFieldStudentT.name: MeanFieldStudentT,
    PlanarFlow.name: PlanarFlow,
    RealNVPFlow.name: RealNVPFlow,
}


def make_family(name: str, dim: int, **options) -> Family:
    """Build a family by registry name (mf_gaussian, mf_student_t, planar_flow, nvp_flow)."""
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown family {name!r}; choices: {sorted(_REGISTRY)}") from None
    return cls(dim, **options)


__all__ = [
    "BaseDraws",
    "Family",
    "FamilyParams",
    "MeanFieldGaussian",
    "MeanFieldStudentT",
    "PlanarFlow",
    "RealNVPFlow",
    "UnsupportedOperation",
    "make_family",
]
