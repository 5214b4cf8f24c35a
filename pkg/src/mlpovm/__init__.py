"""Continuous maximum-likelihood POVM polarimetry for arbitrary photon statistics."""

from .bloch import PolVec, SphereQuadrature, SphericalCap, antipode, build_quadrature, fidelity, uniform_sample
from .photon_stats import PhotonDistribution, custom, fock, load_custom, poisson, thermal

__all__ = [
    "PhotonDistribution",
    "PolVec",
    "SphereQuadrature",
    "SphericalCap",
    "antipode",
    "build_quadrature",
    "custom",
    "fidelity",
    "fock",
    "load_custom",
    "poisson",
    "thermal",
    "uniform_sample",
]
