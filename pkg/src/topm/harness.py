"""Macro-replication experiment engine.

Each macro replication draws one problem instance and runs every policy on
the same observation buffer (common random numbers).  Macros are processed in
fixed-size chunks whose results are reduced in macro order, so the output is
bit-identical for any number of worker processes.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, is_dataclass
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .errors import BudgetTooSmall, ConfigError, SizeMismatch
from .policies.backend import BACKEND, canonical_policy
from .policies.runner import ObservationBuffer, PolicyRun, default_checkpoints, initial_stats, tie_seed_for

CHUNK = 16


@dataclass
class ExperimentConfig:
    spec: object
    policies: Sequence[str]
    n0: int
    T: int
    macros: int
    base_seed: int = 0
    record_grid: Optional[Sequence[int]] = None
    n_checkpoints: int = 100
    threads: int = 1
    output: Optional[str] = None

    def __post_init__(self):
        try:
            self.policies = tuple(canonical_policy(p) for p in self.policies)
        except KeyError as exc:
            raise ConfigError(str(exc)) from None
        if not self.policies:
            raise ConfigError("at least one policy is required")
        if self.macros < 1:
            raise ConfigError("macros must be at least 1")
        if self.n0 < 2:
            raise BudgetTooSmall("n0 must be at least 2")
        k = self.spec.k
        if self.T <= k * self.n0:
            raise BudgetTooSmall(f"T={self.T} leaves no sequential budget after k*n0={k * self.n0}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.record_grid is None:
            self.record_grid = default_checkpoints(k, self.n0, self.T, self.n_checkpoints)
        grid = sorted(set(int(c) for c in self.record_grid))
        if not grid or grid[0] <= k * self.n0 or grid[-1] > self.T:
            raise ConfigError(f"checkpoints must lie in ({k * self.n0}, {self.T}]")
        self.record_grid = tuple(grid)

    def echo(self) -> dict:
        if hasattr(self.spec, "describe"):
            spec = self.spec.describe()
        else:
            spec = asdict(self.spec) if is_dataclass(self.spec) else {}
        return {
            "spec": spec,
            "policies": list(self.policies),
            "n0": self.n0,
            "T": self.T,
            "macros": self.macros,
            "base_seed": self.base_seed,
            "checkpoints": list(self.record_grid),
            "threads": self.threads,
            "output": self.output,
        }


@dataclass(frozen=True)
class CurvePoint:
    budget: int
    ipcs: float
    ipcs_se: float
    eoc: float
    eoc_se: float


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    curves: dict
    ratios: dict
    correct: dict = field(repr=False)
    opportunity_cost: dict = field(repr=False)
    wall_time: float = 0.0

    def final(self, policy: str) -> CurvePoint:
        return self.curves[canonical_policy(policy)][-1]

    def at(self, policy: str, budget: int) -> CurvePoint:
        for pt in self.curves[canonical_policy(policy)]:
            if pt.budget == budget:
                return pt
        raise KeyError(budget)


def eoc(true_means, selected, m: int) -> float:
    """Opportunity cost of ``selected``: best achievable top-m sum minus its sum (>= 0)."""
    mu = np.asarray(true_means, dtype=float)
    sel = np.asarray(list(selected), dtype=int)
    if sel.size != m or np.unique(sel).size != m:
        raise SizeMismatch(f"expected {m} distinct selected alternatives, got {sel.tolist()}")
    best = np.sort(mu)[::-1][:m].sum()
    return float(max(best - mu[sel].sum(), 0.0))


def ratio_trajectory(trace, checkpoints) -> list:
    """Sampling ratios t_i/t at each checkpoint, from a recorded allocation sequence."""
    alloc = np.asarray(trace.allocations)
    k = len(trace.counts)
    out = []
    for c in checkpoints:
        c = int(c)
        if c < 1 or c > alloc.size:
            raise ValueError(f"checkpoint {c} outside recorded range 1..{alloc.size}")
        out.append(np.bincount(alloc[:c], minlength=k) / c)
    return out


def _run_chunk(args):
    config, lo, hi = args
    spec = config.spec
    grid = config.record_grid
    n_cp = len(grid)
    k, m = spec.k, spec.m
    npol = len(config.policies)
    correct = np.zeros((hi - lo, npol, n_cp), dtype=bool)
    cost = np.zeros((hi - lo, npol, n_cp))
    counts = np.zeros((npol, n_cp, k), dtype=np.int64)
    for j in range(lo, hi):
        inst = spec.instance(config.base_seed, j)
        mu = inst.true_means
        top = inst.true_top()
        best = float(np.sort(mu)[::-1][:m].sum())
        buf = ObservationBuffer(inst, config.base_seed, j)
        init = initial_stats(buf, config.n0)
        tseed = tie_seed_for(config.base_seed, j)
        for p, name in enumerate(config.policies):
            run = PolicyRun(name, m, buf, init, inst.known_variances, tseed)
            for c, budget in enumerate(grid):
                run.advance_to(budget)
                sel = run.selected()
                correct[j - lo, p, c] = np.array_equal(sel, top)
                cost[j - lo, p, c] = max(best - float(mu[sel].sum()), 0.0)
                counts[p, c] += run.cnt
    return correct, cost, counts


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    t0 = time.perf_counter()
    tasks = [(config, lo, min(lo + CHUNK, config.macros)) for lo in range(0, config.macros, CHUNK)]
    if config.threads == 1 or len(tasks) == 1:
        parts = [_run_chunk(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            parts = list(pool.map(_run_chunk, tasks))
    correct = np.concatenate([p[0] for p in parts])
    cost = np.concatenate([p[1] for p in parts])
    counts = parts[0][2].copy()
    for p in parts[1:]:
        counts += p[2]
    M = config.macros
    grid = np.asarray(config.record_grid)
    curves, ratios, corr, costs = {}, {}, {}, {}
    for p, name in enumerate(config.policies):
        ind = correct[:, p, :].astype(float)
        ipcs = ind.mean(axis=0)
        ipcs_se = np.sqrt(ipcs * (1.0 - ipcs) / M)
        ec = cost[:, p, :]
        e_mean = ec.mean(axis=0)
        e_se = ec.std(axis=0) / np.sqrt(M)
        curves[name] = [
            CurvePoint(int(b), float(a), float(s), float(e), float(es))
            for b, a, s, e, es in zip(grid, ipcs, ipcs_se, e_mean, e_se)
        ]
        ratios[name] = counts[p] / (grid[:, None] * float(M))
        corr[name] = correct[:, p, :]
        costs[name] = ec
    result = ExperimentResult(config, curves, ratios, corr, costs, time.perf_counter() - t0)
    if config.output:
        write_outputs(result, config.output)
    return result


def _fmt(x: float) -> str:
    return repr(float(x))


def curves_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["policy", "budget", "ipcs", "ipcs_se", "eoc", "eoc_se"])
    for name in result.config.policies:
        for pt in result.curves[name]:
            w.writerow([name, pt.budget, _fmt(pt.ipcs), _fmt(pt.ipcs_se), _fmt(pt.eoc), _fmt(pt.eoc_se)])
    return buf.getvalue()


def ratios_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["policy", "budget", "alt", "ratio"])
    for name in result.config.policies:
        r = result.ratios[name]
        for c, budget in enumerate(result.config.record_grid):
            for i in range(r.shape[1]):
                w.writerow([name, budget, i, _fmt(r[c, i])])
    return buf.getvalue()


def atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(result: ExperimentResult, out_dir: str) -> dict:
    paths = {
        "curves": os.path.join(out_dir, "curves.csv"),
        "ratios": os.path.join(out_dir, "ratios.csv"),
        "metadata": os.path.join(out_dir, "metadata.json"),
    }
    meta = {
        "config": result.config.echo(),
        "seed": result.config.base_seed,
        "wall_time_s": result.wall_time,
        "version": f"topm {__version__}",
        "backend": BACKEND,
    }
    # render everything before touching disk so a failure leaves no partial set
    texts = {
        "curves": curves_csv(result),
        "ratios": ratios_csv(result),
        "metadata": json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n",
    }
    for key, path in paths.items():
        atomic_write(path, texts[key])
    return paths
