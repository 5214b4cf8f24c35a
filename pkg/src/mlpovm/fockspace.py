"""Truncated two-mode Fock space and the optimality certificate of the POVM.

Operators are block-diagonal in the total photon number n. Inside block n the
basis is |m>_H |n-m>_V for m = 0..n, i.e. index m counts photons in the H mode
(ascending).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .bloch import FOUR_PI, PolVec, SphereQuadrature, build_quadrature
from .photon_stats import PhotonDistribution

CERT_RESIDUAL_TOL = 1e-9
CERT_EIGENVALUE_TOL = -1e-10


@dataclass(frozen=True, eq=False)
class FockBlock:
    n: int
    matrix: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        if self.matrix.shape != (self.n + 1, self.n + 1):
            raise ValueError(f"block {self.n} must be {(self.n + 1, self.n + 1)}, got {self.matrix.shape}")

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.conj().T, rtol=0.0, atol=atol))


@dataclass(frozen=True, eq=False)
class FockOperator:
    """Block-diagonal operator on photon numbers 0..n_max.

    Cross-block elements are not stored: they vanish identically for every
    operator built here.
    """

    blocks: tuple[FockBlock, ...]

    @property
    def n_max(self) -> int:
        return len(self.blocks) - 1

    @classmethod
    def from_matrices(cls, matrices, hermitian: bool = False) -> FockOperator:
        return cls(tuple(FockBlock(n, np.asarray(m, dtype=complex), hermitian) for n, m in enumerate(matrices)))

    def block(self, n: int) -> np.ndarray:
        return self.blocks[n].matrix

    def __add__(self, other: FockOperator) -> FockOperator:
        return FockOperator.from_matrices([a.matrix + b.matrix for a, b in zip(self.blocks, other.blocks)])

    def __sub__(self, other: FockOperator) -> FockOperator:
        return FockOperator.from_matrices([a.matrix - b.matrix for a, b in zip(self.blocks, other.blocks)])

    def __matmul__(self, other: FockOperator) -> FockOperator:
        return FockOperator.from_matrices([a.matrix @ b.matrix for a, b in zip(self.blocks, other.blocks)])

    def scale(self, c: float) -> FockOperator:
        return FockOperator.from_matrices([c * b.matrix for b in self.blocks])

    def trace(self) -> complex:
        return sum(np.trace(b.matrix) for b in self.blocks)

    def dagger(self) -> FockOperator:
        return FockOperator.from_matrices([b.matrix.conj().T for b in self.blocks])

    def to_dense(self) -> np.ndarray:
        dim = sum(b.n + 1 for b in self.blocks)
        out = np.zeros((dim, dim), dtype=complex)
        i = 0
        for b in self.blocks:
            out[i:i + b.n + 1, i:i + b.n + 1] = b.matrix
            i += b.n + 1
        return out

    def norm(self) -> float:
        """Spectral norm (largest over blocks)."""
        return max(float(np.linalg.norm(b.matrix, 2)) for b in self.blocks)

    def min_eigenvalue(self) -> float:
        return min(float(np.linalg.eigvalsh(b.matrix)[0]) for b in self.blocks)

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(b.matrix))) for b in self.blocks)


def _log_binomials(n: int) -> np.ndarray:
    m = np.arange(n + 1)
    return np.array([math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1) for k in m])


def _amplitudes(n: int, cos_half: np.ndarray, sin_half: np.ndarray) -> np.ndarray:
    """|sqrt(C(n,m)) cos^m sin^(n-m)| for each m, vectorized over angles (last axis = m)."""
    m = np.arange(n + 1)
    lb = 0.5 * _log_binomials(n)
    c = np.asarray(cos_half, dtype=float)[..., None]
    s = np.asarray(sin_half, dtype=float)[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logc = np.where(m > 0, m * np.log(c), 0.0)
        logs = np.where(n - m > 0, (n - m) * np.log(s), 0.0)
    return np.exp(lb + logc + logs)


def fock_state_vector(n: int, r: PolVec) -> np.ndarray:
    """Components of the n-photon state polarized along ``r`` in the H/V number basis.

    Component m is sqrt(C(n, m)) cos^m(theta/2) (sin(theta/2) e^{i phi})^(n-m).
    """
    if n < 0:
        raise ValueError("photon number must be non-negative")
    amp = _amplitudes(n, math.cos(r.theta / 2), math.sin(r.theta / 2))
    phases = np.exp(1j * (n - np.arange(n + 1)) * r.phi)
    return amp * phases


def overlap_amplitude(r: PolVec, rp: PolVec) -> complex:
    """Single-photon overlap <1_r|1_r'>."""
    return (math.cos(r.theta / 2) * math.cos(rp.theta / 2)
            + np.exp(1j * (rp.phi - r.phi)) * math.sin(r.theta / 2) * math.sin(rp.theta / 2))


def _projector(n: int, r: PolVec) -> np.ndarray:
    v = fock_state_vector(n, r)
    return np.outer(v, v.conj())


def povm_element(r: PolVec, n_max: int, block_scale: dict[int, float] | None = None) -> FockOperator:
    """POVM density at outcome ``r``: block n is (n+1)/(4 pi) |n>_r<n|.

    ``block_scale`` multiplies selected blocks and exists only to build
    deliberately broken operators for negative controls.
    """
    block_scale = block_scale or {}
    return FockOperator(tuple(
        FockBlock(n, block_scale.get(n, 1.0) * (n + 1) / FOUR_PI * _projector(n, r), True)
        for n in range(n_max + 1)
    ))


def rho(r: PolVec, dist: PhotonDistribution, n_max: int | None = None) -> FockOperator:
    """Photon-number mixture polarized along ``r``: block n is P_n |n>_r<n|."""
    n_max = dist.n_max if n_max is None else n_max
    return FockOperator(tuple(FockBlock(n, dist.pmf(n) * _projector(n, r), True) for n in range(n_max + 1)))


def risk_operator(r: PolVec, dist: PhotonDistribution, n_max: int | None = None) -> FockOperator:
    """Risk operator for a uniform prior and delta cost, rho(r)/(4 pi)."""
    return rho(r, dist, n_max).scale(1.0 / FOUR_PI)


def upsilon_closed_form(dist: PhotonDistribution, n_max: int | None = None) -> FockOperator:
    n_max = dist.n_max if n_max is None else n_max
    return FockOperator(tuple(
        FockBlock(n, dist.pmf(n) / FOUR_PI * np.eye(n + 1, dtype=complex), True) for n in range(n_max + 1)
    ))


def _require_degree(quad: SphereQuadrature, needed: int):
    if quad.degree < needed:
        raise ValueError(f"quadrature degree {quad.degree} is too low; need at least {needed}")


def _projector_integral(n: int, quad: SphereQuadrature) -> np.ndarray:
    if quad is build_quadrature(quad.degree):
        return _cached_projector_integral(n, quad.degree)
    return _compute_projector_integral(n, quad)


@lru_cache(maxsize=4096)
def _cached_projector_integral(n: int, degree: int) -> np.ndarray:
    out = _compute_projector_integral(n, build_quadrature(degree))
    out.setflags(write=False)
    return out


def _compute_projector_integral(n: int, quad: SphereQuadrature) -> np.ndarray:
    """Quadrature of |n>_r<n| over the sphere, using the factored product rule.

    Element (m, m') is a(theta)_m a(theta)_m' e^{i(m' - m)phi}; the polar and
    azimuthal sums separate, so this equals the flat node sum exactly.
    """
    z = np.clip(quad.cos_theta, -1.0, 1.0)
    cos_half = np.sqrt((1.0 + z) / 2.0)
    sin_half = np.sqrt((1.0 - z) / 2.0)
    amp = _amplitudes(n, cos_half, sin_half)
    polar = amp.T @ (quad.polar_weights[:, None] * amp)
    k = np.arange(-n, n + 1)
    sums = np.exp(1j * np.multiply.outer(k, quad.phi)) @ quad.azimuth_weights
    m = np.arange(n + 1)
    # the phase of component m is e^{i(n-m)phi}, so v_m v*_m' carries e^{i(m'-m)phi}
    return polar * sums[(m[None, :] - m[:, None]) + n]


def povm_integral(n_max: int, quad: SphereQuadrature, block_scale: dict[int, float] | None = None) -> FockOperator:
    """Quadrature of the POVM density over the sphere (should be the identity)."""
    _require_degree(quad, n_max)
    block_scale = block_scale or {}
    return FockOperator(tuple(
        FockBlock(n, block_scale.get(n, 1.0) * (n + 1) / FOUR_PI * _projector_integral(n, quad), True)
        for n in range(n_max + 1)
    ))


def upsilon(dist: PhotonDistribution, n_max: int | None = None, quad: SphereQuadrature | None = None,
            block_scale: dict[int, float] | None = None) -> FockOperator:
    """Lagrange operator, the sphere integral of W(r) Pi(r), by quadrature.

    W(r) Pi(r) in block n is P_n (n+1)/(4 pi)^2 |n>_r<n| because the projector
    is idempotent.
    """
    n_max = dist.n_max if n_max is None else n_max
    quad = build_quadrature(2 * n_max + 2) if quad is None else quad
    _require_degree(quad, 2 * n_max)
    block_scale = block_scale or {}
    return FockOperator(tuple(
        FockBlock(n, block_scale.get(n, 1.0) * dist.pmf(n) * (n + 1) / FOUR_PI ** 2 * _projector_integral(n, quad),
                  True)
        for n in range(n_max + 1)
    ))


@dataclass(frozen=True)
class MLReport:
    commutation_residual: float
    min_eigenvalue: float
    completeness_residual: float

    @property
    def passed(self) -> bool:
        return (self.commutation_residual < CERT_RESIDUAL_TOL
                and self.completeness_residual < CERT_RESIDUAL_TOL
                and self.min_eigenvalue > CERT_EIGENVALUE_TOL)

    def to_record(self) -> str:
        return (f"commutation_residual={self.commutation_residual:.3e} "
                f"min_eigenvalue={self.min_eigenvalue:.3e} "
                f"completeness_residual={self.completeness_residual:.3e} "
                f"status={'pass' if self.passed else 'FAIL'}")


def verify_ml_conditions(r: PolVec, dist: PhotonDistribution, n_max: int | None = None,
                         quad: SphereQuadrature | None = None,
                         block_scale: dict[int, float] | None = None) -> MLReport:
    """Numerically check the maximum-likelihood conditions and completeness at ``r``.

    The Lagrange operator is taken from quadrature, not from its closed form,
    so a wrong POVM shows up in the commutation residual as well.
    """
    n_max = dist.n_max if n_max is None else n_max
    quad = build_quadrature(2 * n_max + 2) if quad is None else quad
    _require_degree(quad, 2 * n_max)
    pi_r = povm_element(r, n_max, block_scale)
    gap = upsilon(dist, n_max, quad, block_scale) - risk_operator(r, dist, n_max)
    commutation = max((gap @ pi_r).norm(), (pi_r @ gap).norm())
    ident = FockOperator.from_matrices([np.eye(n + 1) for n in range(n_max + 1)])
    completeness = (povm_integral(n_max, quad, block_scale) - ident).max_abs()
    return MLReport(commutation, gap.min_eigenvalue(), completeness)
