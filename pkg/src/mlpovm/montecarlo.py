"""Estimators with standard errors, and per-trial random streams."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MCEstimate:
    value: float
    std_error: float

    def __iter__(self):
        yield self.value
        yield self.std_error

    def within(self, target: float, n_sigma: float = 3.0) -> bool:
        return abs(self.value - target) <= n_sigma * self.std_error


def mean_estimate(samples) -> MCEstimate:
    x = np.asarray(samples, dtype=float)
    if len(x) < 2:
        return MCEstimate(float(x.mean()), math.inf)
    return MCEstimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x))))


def proportion_estimate(hits) -> MCEstimate:
    h = np.asarray(hits, dtype=bool)
    p = float(h.mean())
    return MCEstimate(p, math.sqrt(max(p * (1.0 - p), 0.0) / len(h)))


def variance_estimate(samples) -> MCEstimate:
    """Unbiased sample variance with its large-sample standard error.

    The error uses Var(s^2) ~ (mu4 - sigma^4)/n, mu4 the fourth central moment.
    """
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n < 2:
        return MCEstimate(0.0, math.inf)
    d = x - x.mean()
    s2 = float(np.dot(d, d) / (n - 1))
    m4 = float(np.mean(d ** 4))
    return MCEstimate(s2, math.sqrt(max(m4 - s2 * s2, 0.0) / n))


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for trial ``index`` under a master ``seed``.

    Depends only on the pair, so results do not depend on how trials are
    split among workers.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(index)]))
