"""Bloch-sphere geometry for pure polarization states.

Angle convention: ``theta`` is the polar angle measured from the H pole
(+z, north), ``phi`` the azimuth measured from the +x axis. The V pole is
the south pole.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

FOUR_PI = 4.0 * math.pi

#: Largest quadrature degree :func:`build_quadrature` will construct.
MAX_QUADRATURE_DEGREE = 1024


@dataclass(frozen=True)
class PolVec:
    """A pure polarization state, i.e. a point on the unit sphere."""

    theta: float
    phi: float
    cartesian: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        theta = float(self.theta)
        phi = float(self.phi)
        if not (0.0 <= theta <= math.pi):
            raise ValueError(f"theta must lie in [0, pi], got {theta}")
        phi = phi % (2.0 * math.pi)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)
        st = math.sin(theta)
        vec = np.array([st * math.cos(phi), st * math.sin(phi), math.cos(theta)])
        vec.setflags(write=False)
        object.__setattr__(self, "cartesian", vec)

    @classmethod
    def from_cartesian(cls, v) -> PolVec:
        """Build from any nonzero 3-vector; the vector is normalized first."""
        v = np.asarray(v, dtype=float)
        norm = float(np.linalg.norm(v))
        if v.shape != (3,) or norm == 0.0 or not math.isfinite(norm):
            raise ValueError(f"need a finite nonzero 3-vector, got {v!r}")
        x, y, z = v / norm
        cos_theta = min(1.0, max(-1.0, z))
        return cls(math.acos(cos_theta), math.atan2(y, x))

    @property
    def x(self) -> float:
        return float(self.cartesian[0])

    @property
    def y(self) -> float:
        return float(self.cartesian[1])

    @property
    def z(self) -> float:
        return float(self.cartesian[2])


H = PolVec(0.0, 0.0)
V = PolVec(math.pi, 0.0)
PLUS_X = PolVec(math.pi / 2, 0.0)
PLUS_Y = PolVec(math.pi / 2, math.pi / 2)
PLUS_Z = H


def fidelity(r: PolVec, r0: PolVec) -> float:
    """Fidelity (1 + r.r0)/2 between two pure polarization states."""
    dot = float(np.dot(r.cartesian, r0.cartesian))
    return min(1.0, max(0.0, 0.5 * (1.0 + dot)))


def angle(r: PolVec, r0: PolVec) -> float:
    """Great-circle angle between two points."""
    dot = float(np.dot(r.cartesian, r0.cartesian))
    return math.acos(min(1.0, max(-1.0, dot)))


def antipode(r: PolVec) -> PolVec:
    """The orthogonal polarization, diametrically opposite on the sphere."""
    return PolVec(math.pi - r.theta, r.phi + math.pi)


def cap_fidelity_threshold(epsilon: float) -> float:
    """Fidelity at the rim of a cap of half-angle ``epsilon``."""
    return 0.5 * (1.0 + math.cos(epsilon))


@dataclass(frozen=True)
class SphericalCap:
    center: PolVec
    half_angle: float

    def __post_init__(self):
        if not (0.0 <= self.half_angle <= math.pi):
            raise ValueError(f"half_angle must lie in [0, pi], got {self.half_angle}")

    def contains(self, r: PolVec) -> bool:
        return angle(r, self.center) <= self.half_angle

    def contains_by_fidelity(self, r: PolVec) -> bool:
        return fidelity(r, self.center) >= cap_fidelity_threshold(self.half_angle)

    @property
    def area_fraction(self) -> float:
        return 0.5 * (1.0 - math.cos(self.half_angle))


def uniform_sample(rng: np.random.Generator) -> PolVec:
    """Draw one point from the uniform measure on the sphere."""
    cos_theta = rng.uniform(-1.0, 1.0)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    return PolVec(math.acos(cos_theta), phi)


def uniform_sample_cartesian(rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorized uniform sampling; returns an ``(size, 3)`` array of unit vectors."""
    z = rng.uniform(-1.0, 1.0, size)
    phi = rng.uniform(0.0, 2.0 * math.pi, size)
    s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


def orthonormal_frame(axis) -> np.ndarray:
    """Rotation matrix whose third column is ``axis`` (a unit 3-vector).

    Mapping a vector expressed relative to ``axis`` (as the local +z) into the
    global frame is then ``frame @ local``.
    """
    a = np.asarray(axis, dtype=float)
    helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = helper - np.dot(helper, a) * a
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)
    return np.column_stack([e1, e2, a])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-random proper rotation matrix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def rotate(rot: np.ndarray, r: PolVec) -> PolVec:
    return PolVec.from_cartesian(rot @ r.cartesian)


def double_factorial(k: int) -> int:
    if k <= 0:
        return 1
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


def sphere_moment(a: int, b: int, c: int) -> float:
    """Exact integral of x^a y^b z^c over the unit sphere."""
    if a % 2 or b % 2 or c % 2:
        return 0.0
    num = double_factorial(a - 1) * double_factorial(b - 1) * double_factorial(c - 1)
    return FOUR_PI * num / double_factorial(a + b + c + 1)


@dataclass(frozen=True, eq=False)
class SphereQuadrature:
    """Gauss-Legendre (in cos theta) x uniform azimuth product rule.

    The rule is kept in factored form; ``nodes`` and ``weights`` expand it to
    flat arrays with the polar index varying slowest.
    """

    degree: int
    cos_theta: np.ndarray
    polar_weights: np.ndarray
    phi: np.ndarray
    azimuth_weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.cos_theta) * len(self.phi)

    @cached_property
    def nodes(self) -> np.ndarray:
        """``(size, 3)`` array of unit vectors."""
        return _expanded_nodes(self)

    @cached_property
    def weights(self) -> np.ndarray:
        return np.outer(self.polar_weights, self.azimuth_weights).ravel()

    def polvecs(self) -> list[PolVec]:
        z = np.clip(self.cos_theta, -1.0, 1.0)
        return [PolVec(math.acos(zi), p) for zi in z for p in self.phi]

    def integrate(self, f) -> float:
        """Integrate ``f(points)`` over the sphere, ``points`` being ``(size, 3)``."""
        return float(np.dot(self.weights, f(self.nodes)))


def _expanded_nodes(quad: SphereQuadrature) -> np.ndarray:
    z = quad.cos_theta[:, None]
    s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = quad.phi[None, :]
    x = s * np.cos(phi)
    y = s * np.sin(phi)
    zz = np.broadcast_to(z, x.shape)
    return np.stack([x.ravel(), y.ravel(), zz.ravel()], axis=1)


@lru_cache(maxsize=64)
def build_quadrature(degree: int) -> SphereQuadrature:
    """Product rule exact for every polynomial in (x, y, z) of total degree <= ``degree``."""
    degree = int(degree)
    if degree < 0:
        raise ValueError(f"degree must be non-negative, got {degree}")
    if degree > MAX_QUADRATURE_DEGREE:
        raise ValueError(f"degree {degree} exceeds the cap of {MAX_QUADRATURE_DEGREE}")
    n_polar = max(1, math.ceil((degree + 1) / 2))
    n_azimuth = degree + 1
    z, wz = np.polynomial.legendre.leggauss(n_polar)
    phi = 2.0 * math.pi * np.arange(n_azimuth) / n_azimuth
    wphi = np.full(n_azimuth, 2.0 * math.pi / n_azimuth)
    for arr in (z, wz, phi, wphi):
        arr.setflags(write=False)
    return SphereQuadrature(degree, z, wz, phi, wphi)
