"""Per-alternative sample statistics, conjugate-normal posteriors and posterior PCS.

Observations are accumulated with Welford's online mean/M2 recursion so that
long streams (hundreds of thousands of draws per alternative) keep their
variance estimates accurate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateState, DomainError, InvalidM

VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class PriorSpec:
    """Normal prior on an unknown mean; ``var0=None`` means uninformative."""

    mu0: float = 0.0
    var0: Optional[float] = None

    def __post_init__(self):
        if self.var0 is not None and not self.var0 > 0:
            raise DomainError(f"prior variance must be positive, got {self.var0}")

    @classmethod
    def uninformative(cls) -> "PriorSpec":
        return cls()

    @classmethod
    def normal(cls, mu0: float, var0: float) -> "PriorSpec":
        return cls(mu0=float(mu0), var0=float(var0))

    @property
    def is_uninformative(self) -> bool:
        return self.var0 is None


@dataclass(frozen=True)
class AlternativeStat:
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    known_var: Optional[float] = None
    prior: PriorSpec = PriorSpec()

    @property
    def sum(self) -> float:
        return self.count * self.mean

    @property
    def sum_sq(self) -> float:
        return self.m2 + self.count * self.mean * self.mean

    @property
    def sample_mean(self) -> float:
        if self.count < 1:
            raise DegenerateState("sample mean needs at least one observation")
        return self.mean

    @property
    def sample_var(self) -> float:
        if self.count < 2:
            raise DegenerateState("sample variance needs at least two observations")
        return self.m2 / (self.count - 1)

    def plug_in_var(self) -> float:
        """Known variance if given, else the floored sample variance."""
        if self.known_var is not None:
            return self.known_var
        return max(self.sample_var, VAR_FLOOR)


@dataclass(frozen=True)
class PosteriorParams:
    mean: float
    var: float


def update_stat(stat: AlternativeStat, x: float) -> AlternativeStat:
    n = stat.count + 1
    delta = x - stat.mean
    mean = stat.mean + delta / n
    m2 = stat.m2 + delta * (x - mean)
    return replace(stat, count=n, mean=mean, m2=m2)


def update_stat_many(stat: AlternativeStat, xs) -> AlternativeStat:
    """Merge a batch of observations (Chan et al. pairwise combination)."""
    xs = np.asarray(xs, dtype=float)
    nb = xs.size
    if nb == 0:
        return stat
    mb = float(xs.mean())
    m2b = float(((xs - mb) ** 2).sum())
    na = stat.count
    n = na + nb
    delta = mb - stat.mean
    mean = stat.mean + delta * nb / n
    m2 = stat.m2 + m2b + delta * delta * na * nb / n
    return replace(stat, count=n, mean=mean, m2=m2)


def stat_from_samples(xs, known_var=None, prior=PriorSpec()) -> AlternativeStat:
    return update_stat_many(AlternativeStat(known_var=known_var, prior=prior), xs)


def posterior(stat: AlternativeStat, plug_in_var: float) -> PosteriorParams:
    if not plug_in_var > 0:
        raise DomainError(f"plug-in variance must be positive, got {plug_in_var}")
    prior = stat.prior
    if prior.is_uninformative:
        if stat.count == 0:
            raise DegenerateState("uninformative posterior needs at least one observation")
        return PosteriorParams(stat.mean, plug_in_var / stat.count)
    var = 1.0 / (1.0 / prior.var0 + stat.count / plug_in_var)
    mean = var * (prior.mu0 / prior.var0 + stat.count * stat.mean / plug_in_var)
    return PosteriorParams(mean, var)


def lookahead_var(stat: AlternativeStat, plug_in_var: float) -> float:
    """Posterior variance after one more (hypothetical) observation."""
    prior = stat.prior
    if prior.is_uninformative:
        return plug_in_var / (stat.count + 1)
    return 1.0 / (1.0 / prior.var0 + (stat.count + 1) / plug_in_var)


def rank_desc(means) -> np.ndarray:
    """Indices sorted by mean, largest first; equal means keep index order."""
    means = np.asarray(means, dtype=float)
    return np.argsort(-means, kind="stable")


def check_m(m: int, k: int) -> None:
    if not 1 <= m <= k - 1:
        raise InvalidM(f"m must lie in [1, {k - 1}], got {m}")


def posterior_pcs_mc(
    posteriors: Sequence[PosteriorParams],
    m: int,
    n_draws: int,
    seed=None,
    chunk: int = 65536,
) -> tuple[float, float]:
    """Monte Carlo posterior probability that the top-m posterior means are correct.

    Returns ``(estimate, standard_error)``.
    """
    k = len(posteriors)
    check_m(m, k)
    if n_draws < 1:
        raise ValueError("n_draws must be positive")
    mu = np.array([p.mean for p in posteriors])
    sd = np.sqrt([p.var for p in posteriors])
    order = rank_desc(mu)
    top, rest = order[:m], order[m:]
    rng = np.random.default_rng(seed)
    hits = 0
    left = n_draws
    while left > 0:
        n = min(chunk, left)
        draws = mu + sd * rng.standard_normal((n, k))
        hits += int(np.count_nonzero(draws[:, top].min(axis=1) > draws[:, rest].max(axis=1)))
        left -= n
    p = hits / n_draws
    return p, math.sqrt(p * (1.0 - p) / n_draws)


def vfa_distance(top: PosteriorParams, bottom: PosteriorParams) -> float:
    return (top.mean - bottom.mean) / math.sqrt(top.var + bottom.var)


def vfa_current(posteriors: Sequence[PosteriorParams], m: int) -> float:
    """Squared radius of the largest ball inside the correct-selection region."""
    k = len(posteriors)
    check_m(m, k)
    order = rank_desc([p.mean for p in posteriors])
    best = math.inf
    for a in order[:m]:
        for b in order[m:]:
            d = vfa_distance(posteriors[a], posteriors[b])
            best = min(best, d * d)
    return best
