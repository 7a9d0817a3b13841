"""Synthetic normal test problems and the built-in experiment registry."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..bayes import check_m, rank_desc
from ..errors import ConfigError, DomainError


def _block_rng(seed: int, macro: int, i: int, b: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(macro), 1, int(i), int(b))))


class NormalInstance:
    """Alternatives with fixed true means and normal sampling noise."""

    def __init__(self, means, variances, m: int, known_var: bool = False):
        self.true_means = np.asarray(means, dtype=float)
        self.variances = np.asarray(variances, dtype=float)
        if self.true_means.shape != self.variances.shape or self.true_means.ndim != 1:
            raise DomainError("means and variances must be 1-d arrays of equal length")
        if np.any(self.variances <= 0):
            raise DomainError("sampling variances must be positive")
        self.k = self.true_means.size
        check_m(m, self.k)
        self.m = int(m)
        self.known_var = bool(known_var)
        self._sd = np.sqrt(self.variances)

    @property
    def known_variances(self) -> Optional[np.ndarray]:
        return self.variances if self.known_var else None

    def true_top(self) -> np.ndarray:
        return np.sort(rank_desc(self.true_means)[: self.m])

    def draw_block(self, seed: int, macro: int, i: int, b: int, size: int) -> np.ndarray:
        z = _block_rng(seed, macro, i, b).standard_normal(size)
        return self.true_means[i] + self._sd[i] * z


@dataclass(frozen=True)
class SyntheticSpec:
    """A family of normal problems.

    Either ``fixed_means`` is given, or true means are drawn per macro
    replication as independent N(0, mean_sd_i^2).
    """

    name: str
    k: int
    m: int
    variances: tuple
    T: int
    n0: int = 10
    fixed_means: Optional[tuple] = None
    mean_sd: Optional[tuple] = None
    known_var: bool = False

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError("k must be at least 2")
        check_m(self.m, self.k)
        if len(self.variances) != self.k or min(self.variances) <= 0:
            raise ConfigError("need k positive variances")
        if (self.fixed_means is None) == (self.mean_sd is None):
            raise ConfigError("give exactly one of fixed_means and mean_sd")
        other = self.fixed_means if self.fixed_means is not None else self.mean_sd
        if len(other) != self.k:
            raise ConfigError("mean specification must have k entries")

    def with_params(self, **kw) -> "SyntheticSpec":
        return replace(self, **kw)

    def draw_means(self, seed: int, macro: int) -> np.ndarray:
        if self.fixed_means is not None:
            return np.asarray(self.fixed_means, dtype=float)
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(macro), 0)))
        return rng.standard_normal(self.k) * np.asarray(self.mean_sd)

    def instance(self, seed: int, macro: int = 0) -> NormalInstance:
        return NormalInstance(self.draw_means(seed, macro), self.variances, self.m, self.known_var)


def _idx(k):
    return np.arange(1, k + 1, dtype=float)


def make_experiment(exp_id: str) -> SyntheticSpec:
    """Built-in synthetic settings; alternative i (1-based) sits at index i-1."""
    key = exp_id.strip().upper()
    if key in ("E1", "A03"):
        k = 20
        spec = SyntheticSpec(key, k, 5, (1.0,) * k, 5000, mean_sd=(1.0,) * k)
        # the appendix runs of this setting used 20 initial replications
        return spec.with_params(n0=20) if key == "A03" else spec
    if key == "E2":
        i = _idx(50)
        return SyntheticSpec(
            key, 50, 15, tuple((51 - i) ** 2), 12000, mean_sd=tuple((51 - i) / math.sqrt(10))
        )
    if key in ("E3", "E4"):
        k = 50 if key == "E3" else 100
        i = _idx(k)
        T = 12000 if key == "E3" else 200000
        return SyntheticSpec(key, k, 15, tuple(i**2), T, mean_sd=tuple(i / 10))
    if key == "A01":
        i = _idx(10)
        return SyntheticSpec(key, 10, 3, (36.0,) * 10, 8000, n0=20, fixed_means=tuple(i))
    if key == "A02":
        i = _idx(10)
        return SyntheticSpec(key, 10, 3, tuple(i**2), 7000, n0=20, fixed_means=tuple(i))
    raise ConfigError(f"unknown experiment {exp_id!r}")


EXPERIMENTS = ("E1", "E2", "E3", "E4", "A01", "A02", "A03")
