from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from ..bayes import AlternativeStat, PosteriorParams, check_m, posterior, rank_desc


@dataclass
class PolicyState:
    """All alternatives' statistics at step t.

    ``tie_seed`` keys the counter-based coin used by OCBASS, so a decision
    depends only on (state, tie_seed, t).
    """

    stats: List[AlternativeStat]
    m: int
    tie_seed: int = 0

    def __post_init__(self):
        check_m(self.m, len(self.stats))

    @property
    def k(self) -> int:
        return len(self.stats)

    @property
    def t(self) -> int:
        return sum(s.count for s in self.stats)

    def counts(self) -> list:
        return [s.count for s in self.stats]

    def means(self) -> list:
        return [s.mean for s in self.stats]

    def plug_in_vars(self) -> list:
        return [s.plug_in_var() for s in self.stats]

    def posteriors(self) -> list[PosteriorParams]:
        return [posterior(s, v) for s, v in zip(self.stats, self.plug_in_vars())]

    def ranking(self) -> list:
        """Ranking by posterior mean (sample mean under the uninformative prior)."""
        return [int(i) for i in rank_desc([p.mean for p in self.posteriors()])]

    @classmethod
    def from_arrays(cls, counts, means, m2, m, known_var=None, tie_seed=0):
        stats = []
        for i in range(len(counts)):
            kv = None
            if known_var is not None and known_var[i] > 0:
                kv = float(known_var[i])
            stats.append(AlternativeStat(int(counts[i]), float(means[i]), float(m2[i]), kv))
        return cls(stats, m, tie_seed)


@dataclass(frozen=True)
class AllocationDecision:
    chosen: int
    scores: np.ndarray = field(repr=False)
