"""Figures of merit of the continuous maximum-likelihood POVM.

Everything here depends on the outcome only through its fidelity
u = (1 + r.r0)/2 with the true polarization, and on the photon statistics
P_n. Fock, Poisson and thermal statistics use closed forms; custom weights
use the truncated series, which is also exposed for every kind as an
independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bloch import FOUR_PI, H, PolVec, cap_fidelity_threshold, orthonormal_frame
from .montecarlo import MCEstimate, mean_estimate, proportion_estimate, variance_estimate
from .photon_stats import Kind, PhotonDistribution

# below these mean photon numbers the closed forms lose digits to cancellation
# and the (rapidly converging) series is evaluated instead
_SMALL_NBAR_MEAN = 1e-3
_SMALL_NBAR_VARIANCE = 0.1


@dataclass(frozen=True)
class LikelihoodModel:
    dist: PhotonDistribution

    @property
    def n_max(self) -> int:
        return self.dist.n_max


def _dist(model) -> PhotonDistribution:
    return model.dist if isinstance(model, LikelihoodModel) else model


def _series_terms(dist: PhotonDistribution):
    p = dist.probabilities()
    return np.arange(len(p), dtype=float), p


# -- likelihood -------------------------------------------------------------

def likelihood_series_u(model, u):
    n, p = _series_terms(_dist(model))
    return np.power.outer(np.asarray(u, dtype=float), n) @ ((n + 1) * p) / FOUR_PI


def likelihood_u(model, u):
    """Outcome density as a function of the fidelity u with the true state."""
    dist = _dist(model)
    u = np.asarray(u, dtype=float)
    k, p = dist.kind, dist.param
    if k is Kind.FOCK:
        N = dist.N
        out = (N + 1) * (u ** N if N else np.ones_like(u)) / FOUR_PI
    elif k is Kind.POISSON:
        out = np.exp(-p * (1.0 - u)) * (1.0 + p * u) / FOUR_PI
    elif k is Kind.THERMAL:
        q = p / (1.0 + p)
        out = 1.0 / (FOUR_PI * (1.0 + p) * (1.0 - q * u) ** 2)
    else:
        out = likelihood_series_u(dist, u)
    return float(out) if out.ndim == 0 else out


def likelihood(model, r: PolVec, r0: PolVec) -> float:
    """Probability density (per steradian) of outcome ``r`` when the truth is ``r0``."""
    u = 0.5 * (1.0 + float(np.dot(r.cartesian, r0.cartesian)))
    return likelihood_u(model, min(1.0, max(0.0, u)))


def fidelity_pdf(model, u):
    """Density of the outcome fidelity on [0, 1]: sum_n (n+1) P_n u^n."""
    return FOUR_PI * likelihood_u(model, u)


# -- sampling ---------------------------------------------------------------

def sample_outcomes(model, r0: PolVec, rng: np.random.Generator, size: int):
    """Draw ``size`` POVM outcomes for true polarization ``r0``.

    Returns ``(points, u)``: an ``(size, 3)`` array of unit vectors and their
    fidelities with ``r0``. Each draw picks n ~ P_n, then the fidelity from
    Beta(n+1, 1) by inversion, then a uniform azimuth about ``r0``.
    """
    dist = _dist(model)
    n = dist.sample_n(rng, size)
    u = rng.random(size) ** (1.0 / (n + 1.0))
    cos_g = 2.0 * u - 1.0
    sin_g = np.sqrt(np.clip(1.0 - cos_g ** 2, 0.0, None))
    alpha = rng.uniform(0.0, 2.0 * math.pi, size)
    local = np.column_stack([sin_g * np.cos(alpha), sin_g * np.sin(alpha), cos_g])
    points = local @ orthonormal_frame(r0.cartesian).T
    return points, u


def sample_outcome(model, r0: PolVec, rng: np.random.Generator) -> PolVec:
    points, _ = sample_outcomes(model, r0, rng, 1)
    return PolVec.from_cartesian(points[0])


# -- success probability ----------------------------------------------------

def success_probability_series(model, epsilon: float) -> float:
    n, p = _series_terms(_dist(model))
    c = cap_fidelity_threshold(epsilon)
    # sum P_n (1 - c^(n+1)) rather than 1 - sum P_n c^(n+1): no cancellation
    return float(np.dot(p, -np.expm1((n + 1) * math.log(c)))) if c > 0 else float(p.sum())


def success_probability(model, epsilon: float) -> float:
    """Probability that the outcome lands in the cap of half-angle ``epsilon`` about the truth."""
    if not (0.0 <= epsilon <= math.pi):
        raise ValueError(f"epsilon must lie in [0, pi], got {epsilon}")
    dist = _dist(model)
    k, p = dist.kind, dist.param
    c = cap_fidelity_threshold(epsilon)
    if epsilon == math.pi and k is not Kind.CUSTOM:
        return 1.0
    if k is Kind.FOCK:
        return 1.0 - c ** (dist.N + 1)
    if k is Kind.POISSON:
        return 1.0 - c * math.exp(-p * (1.0 - c))
    if k is Kind.THERMAL:
        return 1.0 - (1.0 + math.cos(epsilon)) / (2.0 + p * (1.0 - math.cos(epsilon)))
    return success_probability_series(dist, epsilon)


def success_probability_approx(model, epsilon: float) -> float:
    """Small-cap approximation; only defined for Fock, Poisson and thermal statistics."""
    dist = _dist(model)
    k, p = dist.kind, dist.param
    e2 = epsilon * epsilon
    if k is Kind.FOCK:
        return 1.0 - math.exp(-e2 / 4.0 * (dist.N + 1))
    if k is Kind.POISSON:
        return 1.0 - math.exp(-e2 / 4.0 * (p + 1))
    if k is Kind.THERMAL:
        return 1.0 - (4.0 - e2) / (4.0 + e2 * p)
    raise ValueError("no small-cap approximation for custom statistics")


# -- mean fidelity ----------------------------------------------------------

def mean_fidelity_series(model) -> float:
    n, p = _series_terms(_dist(model))
    return float(np.dot(p, (n + 1) / (n + 2)))


def mean_fidelity(model) -> float:
    """Average fidelity between the outcome and the true polarization."""
    dist = _dist(model)
    k, x = dist.kind, dist.param
    if k is Kind.FOCK:
        return (dist.N + 1) / (dist.N + 2)
    if k in (Kind.POISSON, Kind.THERMAL) and x < _SMALL_NBAR_MEAN:
        return mean_fidelity_series(dist)
    if k is Kind.POISSON:
        return (1.0 - x + x * x - math.exp(-x)) / (x * x)
    if k is Kind.THERMAL:
        return (1.0 + x) * (x - math.log1p(x)) / (x * x)
    return mean_fidelity_series(dist)


def mean_fidelity_approx(model) -> float:
    """Large mean-photon-number approximation (Poisson and thermal only)."""
    dist = _dist(model)
    x = dist.param
    if dist.kind is Kind.POISSON:
        return 1.0 - 1.0 / x
    if dist.kind is Kind.THERMAL:
        return 1.0 - math.log1p(x) / x
    raise ValueError("large-nbar approximation is defined for Poisson and thermal statistics only")


# -- fidelity variance ------------------------------------------------------

def fidelity_variance_series(model) -> float:
    n, p = _series_terms(_dist(model))
    # law of total variance: the n-photon variance averaged over P_n plus the
    # spread of the n-photon means; avoids the E[u^2] - E[u]^2 cancellation
    within = (n + 1) / ((n + 3) * (n + 2) ** 2)
    means = (n + 1) / (n + 2)
    f = float(np.dot(p, means)) / float(p.sum())
    return float(np.dot(p, within) + np.dot(p, (means - f) ** 2))


def fidelity_variance(model) -> float:
    """Variance of the outcome fidelity over outcomes and true polarizations."""
    dist = _dist(model)
    k, x = dist.kind, dist.param
    if k is Kind.FOCK:
        N = dist.N
        return (N + 1) / ((N + 3) * (N + 2) ** 2)
    if k in (Kind.POISSON, Kind.THERMAL) and x < _SMALL_NBAR_VARIANCE:
        return fidelity_variance_series(dist)
    if k is Kind.POISSON:
        num = (x * x - 2 * x - 1) + 2 * math.exp(-x) * (1 + x + x * x) - math.exp(-2 * x)
        return max(num / x ** 4, 0.0)
    if k is Kind.THERMAL:
        L = math.log1p(x)
        return max((1 + x) * (x * x - (1 + x) * L * L) / x ** 4, 0.0)
    return fidelity_variance_series(dist)


def fidelity_std(model) -> float:
    return math.sqrt(fidelity_variance(model))


# -- Monte Carlo ------------------------------------------------------------

@dataclass(frozen=True)
class MCFigures:
    mean_fidelity: MCEstimate
    fidelity_variance: MCEstimate
    success_probability: MCEstimate


def monte_carlo_figures(model, epsilon: float, draws: int, rng: np.random.Generator,
                        r0: PolVec | None = None) -> MCFigures:
    """Estimate F, its variance and Q(epsilon) from sampled outcomes.

    With ``r0`` None the truth is fixed at the H pole; by rotational symmetry
    the figures of merit do not depend on it.
    """
    _, u = sample_outcomes(model, r0 or H, rng, draws)
    return MCFigures(mean_estimate(u), variance_estimate(u),
                     proportion_estimate(u >= cap_fidelity_threshold(epsilon)))
