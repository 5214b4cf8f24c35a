"""Photon-number distributions P_n with truncation, moments and sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np

DEFAULT_TAIL = 1e-12


class Kind(str, Enum):
    FOCK = "fock"
    POISSON = "poisson"
    THERMAL = "thermal"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class PhotonDistribution:
    """Photon-number statistics of a phase-randomized beam.

    Use the :func:`fock`, :func:`poisson`, :func:`thermal` and :func:`custom`
    constructors rather than instantiating directly.
    """

    kind: Kind
    param: float = 0.0
    weights: tuple[float, ...] = ()
    truncation_tail: float = DEFAULT_TAIL
    _support: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not (0.0 < self.truncation_tail < 1.0):
            raise ValueError("truncation_tail must lie in (0, 1)")
        if self.kind is Kind.FOCK:
            if self.param < 0 or int(self.param) != self.param:
                raise ValueError(f"Fock photon number must be a non-negative integer, got {self.param}")
        elif self.kind in (Kind.POISSON, Kind.THERMAL):
            if not (self.param >= 0.0 and math.isfinite(self.param)):
                raise ValueError(f"mean photon number must be finite and >= 0, got {self.param}")
        elif self.kind is Kind.CUSTOM:
            w = np.asarray(self.weights, dtype=float)
            if w.ndim != 1 or len(w) == 0:
                raise ValueError("custom distribution needs at least one weight")
            if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
                raise ValueError("custom weights must be finite, non-negative and not all zero")
            object.__setattr__(self, "weights", tuple(float(x) for x in w / w.sum()))
        object.__setattr__(self, "_support", self._build_support())

    def __repr__(self) -> str:
        if self.kind is Kind.CUSTOM:
            return f"PhotonDistribution(custom, {len(self.weights)} weights)"
        return f"PhotonDistribution({self.kind.value}, {self.param:g})"

    @property
    def N(self) -> int:
        return int(self.param)

    @property
    def nbar(self) -> float:
        return self.mean()

    @property
    def is_vacuum(self) -> bool:
        return self.n_max == 0

    def pmf(self, n: int) -> float:
        """Probability of exactly ``n`` photons."""
        if n < 0:
            raise ValueError("photon number must be non-negative")
        k, p = self.kind, self.param
        if k is Kind.FOCK:
            return 1.0 if n == self.N else 0.0
        if k is Kind.POISSON:
            if p == 0.0:
                return 1.0 if n == 0 else 0.0
            return math.exp(-p + n * math.log(p) - math.lgamma(n + 1))
        if k is Kind.THERMAL:
            if p == 0.0:
                return 1.0 if n == 0 else 0.0
            return math.exp(n * _log_ratio(p) - math.log1p(p))
        return self.weights[n] if n < len(self.weights) else 0.0

    @cached_property
    def n_max(self) -> int:
        """Truncation index; the tail beyond it carries at most ``truncation_tail``."""
        return len(self._support) - 1

    def truncation_index(self) -> int:
        return self.n_max

    def probabilities(self) -> np.ndarray:
        """Array ``[P_0, ..., P_{n_max}]`` (read-only)."""
        return self._support

    def mean(self) -> float:
        if self.kind is Kind.CUSTOM:
            return float(np.dot(np.arange(len(self.weights)), self.weights))
        return float(self.param)

    def sample_n(self, rng: np.random.Generator, size: int | None = None):
        """Inverse-CDF draw(s) over the truncated support."""
        cdf = self._cdf
        u = rng.random(size)
        idx = np.searchsorted(cdf, u * cdf[-1], side="right")
        idx = np.minimum(idx, self.n_max)
        if size is None:
            return int(idx)
        return idx.astype(np.int64)

    @cached_property
    def _cdf(self) -> np.ndarray:
        return np.cumsum(self._support)

    def _build_support(self) -> np.ndarray:
        k, p, tail = self.kind, self.param, self.truncation_tail
        if k is Kind.FOCK:
            out = np.zeros(self.N + 1)
            out[self.N] = 1.0
        elif k is Kind.CUSTOM:
            out = np.array(self.weights)
        elif p == 0.0:
            out = np.ones(1)
        elif k is Kind.THERMAL:
            q = p / (1.0 + p)
            # tail beyond n_max is q^(n_max+1)
            n_max = max(0, math.ceil(math.log(tail) / math.log(q)) - 1)
            while n_max > 0 and q ** n_max <= tail:
                n_max -= 1
            while q ** (n_max + 1) > tail:
                n_max += 1
            out = np.exp(np.arange(n_max + 1) * _log_ratio(p) - math.log1p(p))
        else:
            out = _poisson_support(p, tail)
        out.setflags(write=False)
        return out


def _log_ratio(nbar: float) -> float:
    # log(nbar / (1 + nbar)) without cancellation; the pmf is (1-q) q^n with q = nbar/(1+nbar)
    return -math.log1p(1.0 / nbar)


def _poisson_support(nbar: float, tail: float) -> np.ndarray:
    upper = int(nbar + 40.0 * math.sqrt(nbar) + 60)
    n = np.arange(upper + 1)
    lg = np.array([math.lgamma(k + 1) for k in n])
    pmf = np.exp(-nbar + n * math.log(nbar) - lg)
    # tails[k] = sum_{j > k} pmf_j, accumulated from the far end for accuracy
    tails = np.concatenate([np.cumsum(pmf[::-1])[::-1][1:], [0.0]])
    n_max = int(np.argmax(tails <= tail))
    return pmf[: n_max + 1].copy()


def fock(N: int, truncation_tail: float = DEFAULT_TAIL) -> PhotonDistribution:
    return PhotonDistribution(Kind.FOCK, float(N), truncation_tail=truncation_tail)


def poisson(nbar: float, truncation_tail: float = DEFAULT_TAIL) -> PhotonDistribution:
    return PhotonDistribution(Kind.POISSON, float(nbar), truncation_tail=truncation_tail)


def thermal(nbar: float, truncation_tail: float = DEFAULT_TAIL) -> PhotonDistribution:
    return PhotonDistribution(Kind.THERMAL, float(nbar), truncation_tail=truncation_tail)


def custom(weights, truncation_tail: float = DEFAULT_TAIL) -> PhotonDistribution:
    return PhotonDistribution(Kind.CUSTOM, weights=tuple(weights), truncation_tail=truncation_tail)


def vacuum() -> PhotonDistribution:
    return fock(0)


def load_custom(path) -> PhotonDistribution:
    """Read one non-negative weight per line; blank lines and ``#`` comments are skipped."""
    weights = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            weights.append(float(line))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: not a number: {line!r}") from None
    return custom(weights)


def from_name(kind: str, param: float = 0.0) -> PhotonDistribution:
    """Build a distribution from a kind name (``fock``, ``poisson``, ``thermal``, ``custom:<path>``)."""
    if kind.startswith("custom:"):
        return load_custom(kind.split(":", 1)[1])
    try:
        k = Kind(kind)
    except ValueError:
        raise ValueError(f"unknown distribution kind {kind!r}") from None
    if k is Kind.FOCK:
        if param != int(param):
            raise ValueError(f"Fock photon number must be an integer, got {param}")
        return fock(int(param))
    if k is Kind.POISSON:
        return poisson(param)
    if k is Kind.THERMAL:
        return thermal(param)
    raise ValueError("custom distributions need a path: custom:<path>")
