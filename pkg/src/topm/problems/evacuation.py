"""Evacuation-network benchmark.

Each alternative is an evacuation plan: two candidate paths per source node.
Its performance is the clearance time (minutes until the last evacuee reaches
a destination) under random lognormal edge capacities and travel times.

Release model (one draw of the clearance time):

* every path gets an integer travel time ceil(sum t) and an integer flow
  floor(min c) from the sampled edge attributes;
* groups leave each source at integer times 1, 2, ...; every open path
  releases up to its flow at once; path r of source s is open while its
  group would still arrive by the source's evacuation time T_s, and once
  every window has closed all of the source's paths reopen;
* when the remaining evacuees do not fill every open path, faster paths
  are served first;
* a group entering an edge uses that edge's capacity for the time unit it
  enters; sources with larger T_s book capacity first (ties by source order);
* a group leaving at time tau on a path with travel time T arrives at
  tau + T - 1, so a single wave over a one-unit path clears at time 1.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import ConfigError, DomainError, NetworkError, ZeroFlow

Edge = Tuple[int, int]


def lognormal_params(mean: float, var: float) -> Tuple[float, float]:
    """Parameters (mu_log, var_log) of the lognormal with the given mean and variance."""
    if not mean > 0 or not var > 0:
        raise DomainError(f"lognormal needs positive mean and variance, got ({mean}, {var})")
    mu_log = math.log(mean * mean / math.sqrt(var + mean * mean))
    var_log = math.log(var / (mean * mean) + 1.0)
    return mu_log, var_log


@dataclass(frozen=True)
class EdgeSpec:
    mean_capacity: float
    var_capacity: float
    mean_time: float
    var_time: float

    def sample(self, rng: np.random.Generator) -> Tuple[float, float]:
        return _draw(rng, self.mean_capacity, self.var_capacity), _draw(rng, self.mean_time, self.var_time)


def _draw(rng, mean, var):
    if var == 0:
        return float(mean)
    mu, v = lognormal_params(mean, var)
    return float(rng.lognormal(mu, math.sqrt(v)))


@dataclass
class EvacuationNetwork:
    nodes: Dict[int, str]
    edges: Dict[Edge, EdgeSpec]
    sources: List[Tuple[int, float]]
    paths: Dict[int, List[Tuple[int, ...]]]
    name: str = "network"

    def __post_init__(self):
        for nid, kind in self.nodes.items():
            if kind not in ("source", "intermediate", "destination"):
                raise NetworkError(f"node {nid}: unknown kind {kind!r}")
        for (u, v), e in self.edges.items():
            if u not in self.nodes or v not in self.nodes:
                raise NetworkError(f"edge {u}->{v} references an unknown node")
            if e.mean_capacity <= 0 or e.mean_time <= 0 or e.var_capacity < 0 or e.var_time < 0:
                raise NetworkError(f"edge {u}->{v}: attributes out of range")
        for s, pop in self.sources:
            if self.nodes.get(s) != "source":
                raise NetworkError(f"source {s} is not a source node")
            if pop < 0:
                raise NetworkError(f"source {s}: negative population")
        for s, plist in self.paths.items():
            if s not in dict(self.sources):
                raise NetworkError(f"paths listed for unknown source {s}")
            for p in plist:
                self._check_path(s, p)

    def _check_path(self, s, p):
        if len(p) < 2:
            raise NetworkError(f"path {p} of source {s} has no edges")
        if p[0] != s:
            raise NetworkError(f"path {p} does not start at source {s}")
        if self.nodes.get(p[-1]) != "destination":
            raise NetworkError(f"path {p} does not end at a destination")
        for e in zip(p[:-1], p[1:]):
            if e not in self.edges:
                raise NetworkError(f"path {p} uses unknown edge {e[0]}->{e[1]}")

    @property
    def source_ids(self) -> List[int]:
        return [s for s, _ in self.sources]

    def population(self, s: int) -> float:
        return dict(self.sources)[s]

    @classmethod
    def from_dict(cls, doc: dict) -> "EvacuationNetwork":
        try:
            nodes = {int(n["id"]): n["kind"] for n in doc["nodes"]}
            edges = {}
            for e in doc["edges"]:
                key = (int(e["from"]), int(e["to"]))
                if key in edges:
                    raise NetworkError(f"duplicate edge {key[0]}->{key[1]}")
                edges[key] = EdgeSpec(
                    float(e["mean_capacity"]), float(e["var_capacity"]),
                    float(e["mean_time"]), float(e["var_time"]),
                )
            sources = [(int(s["node"]), float(s["population"])) for s in doc["sources"]]
            paths: Dict[int, List[Tuple[int, ...]]] = {s: [] for s, _ in sources}
            for p in doc["paths"]:
                s = int(p["source"])
                if s not in paths:
                    raise NetworkError(f"path for unknown source {s}")
                paths[s].append(tuple(int(x) for x in p["nodes"]))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, NetworkError):
                raise
            raise NetworkError(f"malformed network description: {exc}") from None
        return cls(nodes, edges, sources, paths, doc.get("name", "network"))

    @classmethod
    def from_json(cls, path: str) -> "EvacuationNetwork":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def load_shanghai() -> EvacuationNetwork:
    """The built-in 22-node, 33-edge network with three candidate paths per source."""
    text = resources.files("topm.problems").joinpath("data/shanghai.json").read_text(encoding="utf-8")
    return EvacuationNetwork.from_dict(json.loads(text))


def enumerate_plans(network: EvacuationNetwork, per_source: int = 2) -> List[tuple]:
    """All plans, lexicographic in the per-source tuples of path indices."""
    choices = [
        list(itertools.combinations(range(len(network.paths[s])), per_source))
        for s in network.source_ids
    ]
    return list(itertools.product(*choices))


def plan_paths(network: EvacuationNetwork, plan) -> Dict[int, List[Tuple[int, ...]]]:
    return {s: [network.paths[s][r] for r in idx] for s, idx in zip(network.source_ids, plan)}


def plan_label(network: EvacuationNetwork, plan) -> str:
    """Readable plan name, e.g. ``P12+P13 P21+P23 ...`` (source order, 1-based paths)."""
    return " ".join(
        "+".join(f"P{a + 1}{r + 1}" for r in idx) for a, idx in enumerate(plan)
    )


def sample_attributes(network: EvacuationNetwork, rng: np.random.Generator) -> Dict[Edge, Tuple[float, float]]:
    """One draw of (capacity, travel time) per edge, in the network's edge order."""
    return {e: spec.sample(rng) for e, spec in network.edges.items()}


def path_metrics(path, attrs) -> Tuple[float, float]:
    """Total travel time and bottleneck capacity of a node sequence."""
    if len(path) < 2:
        raise NetworkError("path has no edges")
    edges = list(zip(path[:-1], path[1:]))
    T = sum(attrs[e][1] for e in edges)
    F = min(attrs[e][0] for e in edges)
    return T, F


def plan_metrics(network, plan, attrs) -> Dict[int, List[Tuple[float, float]]]:
    return {s: [path_metrics(p, attrs) for p in ps] for s, ps in plan_paths(network, plan).items()}


def source_evac_time(nes: float, paths) -> int:
    """Evacuation time of a source releasing on all its paths at full flow."""
    total_f = sum(F for _, F in paths)
    if not total_f > 0:
        raise ZeroFlow("source has no outgoing flow")
    return int(math.ceil((nes + sum((T - 1) * F for T, F in paths)) / total_f))


def clearance_time(network: EvacuationNetwork, plan, attrs) -> float:
    """Clearance time for fixed edge attributes (see the module docstring)."""
    by_source = plan_paths(network, plan)
    metrics = {s: [path_metrics(p, attrs) for p in ps] for s, ps in by_source.items()}
    ts = {s: source_evac_time(network.population(s), metrics[s]) for s in by_source}
    sources = sorted(by_source, key=lambda s: (-ts[s], network.source_ids.index(s)))

    routes = {}
    for s in sources:
        rs = []
        for p, (T, F) in zip(by_source[s], metrics[s]):
            edges = list(zip(p[:-1], p[1:]))
            offsets, acc = [], 0.0
            for e in edges:
                offsets.append(int(math.floor(acc)))
                acc += attrs[e][1]
            rs.append((int(math.ceil(T)), int(math.floor(F)), edges, offsets))
        rs.sort(key=lambda r: r[0])
        routes[s] = rs
    if any(sum(r[1] for r in routes[s]) <= 0 for s in sources if network.population(s) > 0):
        raise ZeroFlow("a path bottleneck rounds down to zero flow")

    remaining = {s: int(math.ceil(network.population(s))) for s in sources}
    booked: Dict[Tuple[Edge, int], int] = {}
    cap_int = {e: int(math.floor(attrs[e][0])) for e in attrs}
    clearance = 0
    tau = 0
    horizon = 100000
    while any(remaining[s] > 0 for s in sources):
        tau += 1
        if tau > horizon:
            raise ZeroFlow("evacuation did not finish; capacities too small")
        for s in sources:
            if remaining[s] <= 0:
                continue
            rs = routes[s]
            open_r = [r for r in rs if tau + r[0] - 1 <= ts[s]]
            if not open_r:
                open_r = rs
            for T, F, edges, offsets in open_r:
                if remaining[s] <= 0:
                    break
                n = min(F, remaining[s])
                for e, off in zip(edges, offsets):
                    n = min(n, cap_int[e] - booked.get((e, tau + off), 0))
                if n <= 0:
                    continue
                for e, off in zip(edges, offsets):
                    booked[(e, tau + off)] = booked.get((e, tau + off), 0) + n
                remaining[s] -= n
                clearance = max(clearance, tau + T - 1)
    return float(clearance)


def simulate_clearance(network: EvacuationNetwork, plan, rng: np.random.Generator) -> float:
    """One random clearance time: sample edge attributes, then release."""
    return clearance_time(network, plan, sample_attributes(network, rng))


class EvacuationInstance:
    """Plans as alternatives; observations are negated clearance times (larger is better)."""

    block_size = 8

    def __init__(self, problem: "EvacuationProblem", true_means: np.ndarray):
        self.problem = problem
        self.k = len(problem.plans)
        self.m = problem.m
        self.true_means = true_means
        self.known_variances = None

    def true_top(self) -> np.ndarray:
        from ..bayes import rank_desc

        return np.sort(rank_desc(self.true_means)[: self.m])

    def draw_block(self, seed, macro, i, b, size) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(macro), 1, int(i), int(b))))
        net, plan = self.problem.network, self.problem.plans[i]
        return np.array([-simulate_clearance(net, plan, rng) for _ in range(size)])


@dataclass
class EvacuationProblem:
    """Select the m plans with the smallest expected clearance time.

    True means are not available in closed form; they are estimated once from
    ``pilot_draws`` simulations per plan with ``pilot_seed``.
    """

    network: EvacuationNetwork
    m: int = 5
    pilot_draws: int = 200
    pilot_seed: int = 20240601
    name: str = "evac"

    def __post_init__(self):
        self.plans = enumerate_plans(self.network)
        if not 1 <= self.m < len(self.plans):
            raise ConfigError(f"m must lie in [1, {len(self.plans) - 1}]")
        self._means: Optional[np.ndarray] = None

    @property
    def k(self) -> int:
        return len(self.plans)

    def expected_clearance(self) -> np.ndarray:
        if self._means is None:
            self._means = estimate_clearance(self.network, self.plans, self.pilot_draws, self.pilot_seed)[0]
        return self._means

    def instance(self, seed: int, macro: int = 0) -> EvacuationInstance:
        return EvacuationInstance(self, -self.expected_clearance())

    def describe(self) -> dict:
        return {"name": self.name, "network": self.network.name, "k": self.k, "m": self.m,
                "pilot_draws": self.pilot_draws, "pilot_seed": self.pilot_seed}

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_means"] = self.expected_clearance()
        return state


def _plan_stats(args):
    network, plan, i, draws, seed = args
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(i),)))
    x = np.array([simulate_clearance(network, plan, rng) for _ in range(draws)])
    se = x.std(ddof=1) / math.sqrt(draws) if draws > 1 else float("nan")
    return float(x.mean()), float(se)


def estimate_clearance(network, plans, draws: int, seed: int, threads: int = 1):
    """Mean and standard error of the clearance time per plan.

    Plan i uses its own stream keyed on (seed, i), so results do not depend
    on ``threads``.
    """
    if draws < 1:
        raise ConfigError("draws must be at least 1")
    tasks = [(network, plan, i, draws, seed) for i, plan in enumerate(plans)]
    if threads > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(_plan_stats, tasks, chunksize=4))
    else:
        out = [_plan_stats(t) for t in tasks]
    return np.array([o[0] for o in out]), np.array([o[1] for o in out])
