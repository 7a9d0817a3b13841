"""Drive a policy through a full sequential run.

Observations come from a shared :class:`ObservationBuffer` whose values are
keyed by (seed, macro, alternative, draw index), so every policy sees the same
value for the same draw of the same alternative.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..bayes import rank_desc
from ..errors import BudgetTooSmall
from .backend import POLICY_CODES, canonical_policy, get_kernel

BLOCK = 256


class ObservationBuffer:
    """Lazily materialized observation matrix for one macro replication.

    ``instance.draw_block(seed, macro, i, b, size)`` must return the b-th block
    of draws for alternative i; blocks are fetched on demand and cached.
    """

    def __init__(self, instance, seed: int, macro: int = 0, block: Optional[int] = None):
        self.instance = instance
        self.seed = int(seed)
        self.macro = int(macro)
        # expensive simulators advertise a smaller block to avoid wasted draws
        self.block = int(block or getattr(instance, "block_size", BLOCK))
        self.k = instance.k
        self.obs = np.empty((self.k, self.block), dtype=np.float64)
        self.filled = np.zeros(self.k, dtype=np.int64)

    def ensure(self, i: int, n: int) -> None:
        while self.filled[i] < n:
            start = int(self.filled[i])
            if start + self.block > self.obs.shape[1]:
                cap = max(2 * self.obs.shape[1], start + self.block)
                grown = np.empty((self.k, cap), dtype=np.float64)
                grown[:, : self.obs.shape[1]] = self.obs
                self.obs = grown
            vals = self.instance.draw_block(self.seed, self.macro, i, start // self.block, self.block)
            self.obs[i, start : start + self.block] = vals
            self.filled[i] = start + self.block

    def ensure_all(self, n: int) -> None:
        for i in range(self.k):
            self.ensure(i, n)


def initial_stats(buf: ObservationBuffer, n0: int):
    """Welford statistics over the first n0 draws of every alternative."""
    buf.ensure_all(n0)
    k = buf.k
    cnt = np.full(k, n0, dtype=np.int64)
    mean = np.zeros(k)
    m2 = np.zeros(k)
    for i in range(k):
        mu = 0.0
        s2 = 0.0
        for j in range(n0):
            x = float(buf.obs[i, j])
            delta = x - mu
            mu = mu + delta / (j + 1)
            s2 = s2 + delta * (x - mu)
        mean[i] = mu
        m2[i] = s2
    return cnt, mean, m2


def tie_seed_for(seed: int, macro: int) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(macro), 2))
    return int(ss.generate_state(1, np.uint64)[0])


def default_checkpoints(k: int, n0: int, T: int, n: int = 100) -> list:
    lo = k * n0
    if T <= lo:
        return [T]
    pts = np.linspace(lo, T, n + 1)[1:]
    return sorted({int(round(p)) for p in pts if int(round(p)) > lo})


@dataclass
class Trace:
    policy: str
    selected: tuple
    allocations: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    means: np.ndarray = field(repr=False)
    checkpoints: list = field(default_factory=list)
    checkpoint_selected: list = field(default_factory=list, repr=False)
    checkpoint_counts: Optional[np.ndarray] = field(default=None, repr=False)


class PolicyRun:
    """One policy's in-place state over a shared buffer."""

    def __init__(self, policy, m, buf, init, known_var, tie_seed, record_len=0, backend=None):
        self.policy = canonical_policy(policy)
        self.code = POLICY_CODES[self.policy]
        self.m = int(m)
        self.buf = buf
        self.kernel = get_kernel(backend)
        cnt, mean, m2 = init
        self.cnt = cnt.copy()
        self.mean = mean.copy()
        self.m2 = m2.copy()
        self.kv = np.zeros(buf.k) if known_var is None else np.asarray(known_var, dtype=float).copy()
        self.order = rank_desc(self.mean).astype(np.int64)
        self.tie_seed = int(tie_seed)
        self.record = np.full(record_len, -1, dtype=np.int64)

    @property
    def t(self) -> int:
        return int(self.cnt.sum())

    def advance_to(self, t_stop: int) -> None:
        while True:
            status = self.kernel.advance(
                self.code, self.m, self.cnt, self.mean, self.m2, self.kv, self.order,
                self.buf.obs, self.buf.filled, int(t_stop), self.record, self.tie_seed,
            )
            if status < 0:
                return
            self.buf.ensure(status, int(self.cnt[status]) + 1)

    def selected(self) -> np.ndarray:
        return np.sort(self.order[: self.m])


def run_policy(
    instance,
    policy: str,
    n0: int,
    T: int,
    seed: int,
    macro: int = 0,
    checkpoints: Optional[Sequence[int]] = None,
    backend: Optional[str] = None,
    record: bool = True,
) -> Trace:
    """Initialize with n0 draws per alternative, then allocate one draw per step up to T."""
    k = instance.k
    if n0 < 2:
        raise BudgetTooSmall(f"n0 must be at least 2 to estimate variances, got {n0}")
    if T < k * n0:
        raise BudgetTooSmall(f"budget T={T} is below the initialization cost k*n0={k * n0}")
    buf = ObservationBuffer(instance, seed, macro)
    init = initial_stats(buf, n0)
    run = PolicyRun(
        policy, instance.m, buf, init, getattr(instance, "known_variances", None),
        tie_seed_for(seed, macro), T if record else 0, backend,
    )
    if record:
        run.record[: k * n0] = np.repeat(np.arange(k), n0)
    cps = sorted(set(int(c) for c in (checkpoints or [])) | {T})
    sel, counts = [], []
    for c in cps:
        if c < k * n0:
            raise BudgetTooSmall(f"checkpoint {c} precedes the end of initialization")
        run.advance_to(c)
        sel.append(run.selected())
        counts.append(run.cnt.copy())
    return Trace(
        policy=run.policy,
        selected=tuple(int(i) for i in run.selected()),
        allocations=run.record,
        counts=run.cnt.copy(),
        means=run.mean.copy(),
        checkpoints=cps,
        checkpoint_selected=sel,
        checkpoint_counts=np.array(counts),
    )
