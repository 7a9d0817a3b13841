"""Command-line front end.

Subcommands:
  run            macro-replication experiment, writes curves/ratios CSV and metadata
  solve-ratios   optimal sampling ratios for given alternatives, printed as JSON
  rate           pairwise rate function G_ij at given ratios, printed as JSON
  evac           expected clearance time per evacuation plan, ranked CSV

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Optional

import numpy as np

from .errors import ConfigError, NoConvergence, TopMError

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

CONFIG_KEYS = {
    "problem": {"experiment", "m", "n0", "budget", "fixture", "pilot_draws"},
    "run": {"policies", "macros", "seed", "threads", "checkpoints"},
    "output": {"dir"},
}
RUN_DEFAULTS = {"macros": 1000, "seed": 0, "threads": 1, "checkpoints": 100, "dir": "topm_out"}
EVAC_DEFAULTS = {"m": 5, "n0": 10, "budget": 3000, "pilot_draws": 200}


class UsageError(Exception):
    pass


def _floats(text: str, what: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"malformed config {path}: {exc}") from None
    flat = {}
    for section, body in doc.items():
        if section not in CONFIG_KEYS or not isinstance(body, dict):
            raise UsageError(f"unknown config section [{section}]")
        for key, val in body.items():
            if key not in CONFIG_KEYS[section]:
                raise UsageError(f"unknown config key {section}.{key}")
            flat[key] = val
    return flat


def _resolve_run(args) -> dict:
    opts = _load_config(args.config) if args.config else {}
    flags = {
        "experiment": args.experiment, "m": args.m, "n0": args.n0, "budget": args.budget,
        "policies": args.policies, "macros": args.macros, "seed": args.seed,
        "threads": args.threads, "checkpoints": args.checkpoints, "dir": args.out,
    }
    opts.update({k: v for k, v in flags.items() if v is not None})
    if "experiment" not in opts:
        raise UsageError("no experiment given (use --experiment or [problem] experiment)")
    for key, val in RUN_DEFAULTS.items():
        opts.setdefault(key, val)
    if isinstance(opts.get("policies"), str):
        opts["policies"] = [p.strip() for p in opts["policies"].split(",") if p.strip()]
    return opts


def build_config(opts: dict):
    """Turn resolved options into an ExperimentConfig (config errors propagate)."""
    from .harness import ExperimentConfig
    from .policies import ALL_POLICIES
    from .problems import EvacuationNetwork, EvacuationProblem, load_shanghai, make_experiment

    exp = str(opts["experiment"]).strip().lower()
    if exp == "evac":
        net = EvacuationNetwork.from_json(opts["fixture"]) if opts.get("fixture") else load_shanghai()
        spec = EvacuationProblem(
            net, m=int(opts.get("m", EVAC_DEFAULTS["m"])),
            pilot_draws=int(opts.get("pilot_draws", EVAC_DEFAULTS["pilot_draws"])),
        )
        n0 = int(opts.get("n0", EVAC_DEFAULTS["n0"]))
        T = int(opts.get("budget", EVAC_DEFAULTS["budget"]))
    else:
        spec = make_experiment(exp)
        if opts.get("m") is not None:
            spec = spec.with_params(m=int(opts["m"]))
        n0 = int(opts.get("n0", spec.n0))
        T = int(opts.get("budget", spec.T))
    return ExperimentConfig(
        spec=spec,
        policies=opts.get("policies") or list(ALL_POLICIES),
        n0=n0,
        T=T,
        macros=int(opts["macros"]),
        base_seed=int(opts["seed"]),
        n_checkpoints=int(opts["checkpoints"]),
        threads=int(opts["threads"]),
        output=opts["dir"],
    )


def cmd_run(args) -> int:
    from .harness import run_experiment

    try:
        config = build_config(_resolve_run(args))
    except (UsageError, TopMError, ValueError, TypeError) as exc:
        print(f"topm run: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(config.echo(), sort_keys=True, default=str))
    try:
        result = run_experiment(config)
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"topm run: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"{'policy':<12}{'budget':>8}{'ipcs':>10}{'ipcs_se':>10}{'eoc':>12}{'eoc_se':>10}")
    for name in config.policies:
        pt = result.final(name)
        print(f"{name:<12}{pt.budget:>8}{pt.ipcs:>10.4f}{pt.ipcs_se:>10.4f}{pt.eoc:>12.5f}{pt.eoc_se:>10.5f}")
    print(f"wrote {config.output} in {result.wall_time:.2f}s")
    return 0


def _specs_from_args(args):
    from .ldp import RateSpec, normal_specs

    fam = args.family
    if fam == "normal":
        if args.means is None:
            raise UsageError("--means is required for the normal family")
        means = _floats(args.means, "--means")
        var = _floats(args.vars, "--vars") if args.vars else [1.0] * len(means)
        if len(var) != len(means):
            raise UsageError("--means and --vars must have the same length")
        return normal_specs(means, var)
    if fam == "bernoulli":
        if args.q is None:
            raise UsageError("--q is required for the bernoulli family")
        return [RateSpec.bernoulli(q) for q in _floats(args.q, "--q")]
    if args.rate is None:
        raise UsageError("--rate is required for the exponential family")
    return [RateSpec.exponential(r) for r in _floats(args.rate, "--rate")]


def cmd_solve_ratios(args) -> int:
    from .ldp import solve_ratios

    try:
        specs = _specs_from_args(args)
        if len(specs) < 2:
            raise UsageError("need at least two alternatives")
    except (UsageError, TopMError, ValueError) as exc:
        print(f"topm solve-ratios: {exc}", file=sys.stderr)
        return 2
    try:
        res = solve_ratios(specs, args.m, tol=args.tol)
    except NoConvergence as exc:
        print(f"topm solve-ratios: {exc}", file=sys.stderr)
        return 1
    except (TopMError, ValueError) as exc:
        print(f"topm solve-ratios: {exc}", file=sys.stderr)
        return 2
    out = {
        "family": args.family,
        "m": args.m,
        "r_star": [float(x) for x in res.r_star],
        "z_star": float(res.z_star),
        "optrate_residual": float(res.optrate_residual),
        "balance_residual": None if res.balance_residual is None else float(res.balance_residual),
        "iterations": int(res.iterations),
    }
    print(json.dumps(out, indent=2))
    return 0


def cmd_rate(args) -> int:
    from .ldp import infimum_point, rate_closed_form, rate_generic

    try:
        specs = _specs_from_args(args)
        r = _floats(args.ratios, "--ratios")
        if len(specs) != 2 or len(r) != 2:
            raise UsageError("rate needs exactly two alternatives and two ratios")
        g = rate_closed_form(specs[0], specs[1], r[0], r[1])
        g_num = rate_generic(specs[0], specs[1], r[0], r[1])
        x = infimum_point(specs[0], specs[1], r[0], r[1]) if min(r) > 0 else None
    except (UsageError, TopMError, ValueError) as exc:
        print(f"topm rate: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"family": args.family, "ratios": r, "rate": g, "rate_numeric": g_num,
                      "infimum_point": x}, indent=2))
    return 0


def evac_csv(network, plans, means, ses) -> str:
    from .problems import plan_label

    order = sorted(range(len(plans)), key=lambda i: (means[i], i))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "plan", "paths", "mean_clearance", "se"])
    for rank, i in enumerate(order, 1):
        w.writerow([rank, i + 1, plan_label(network, plans[i]), repr(float(means[i])), repr(float(ses[i]))])
    return buf.getvalue()


def cmd_evac(args) -> int:
    from .harness import atomic_write
    from .problems import EvacuationNetwork, enumerate_plans, estimate_clearance, load_shanghai

    try:
        net = EvacuationNetwork.from_json(args.fixture) if args.fixture else load_shanghai()
        plans = enumerate_plans(net)
        if args.draws < 1:
            raise UsageError("--draws must be at least 1")
    except (UsageError, TopMError, ValueError, OSError) as exc:
        print(f"topm evac: {exc}", file=sys.stderr)
        return 2
    try:
        means, ses = estimate_clearance(net, plans, args.draws, args.seed, threads=args.threads)
        text = evac_csv(net, plans, means, ses)
    except Exception as exc:  # noqa: BLE001
        print(f"topm evac: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topm", description="Sequential top-m selection experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a macro-replication experiment")
    p.add_argument("--config", help="TOML file with [problem], [run] and [output] sections")
    p.add_argument("--experiment", help="e1, e2, e3, e4, a01, a02, a03 or evac")
    p.add_argument("--policies", help="comma-separated policy names (default: all six)")
    p.add_argument("--macros", type=int, help="number of macro replications")
    p.add_argument("--budget", type=int, help="total sampling budget T")
    p.add_argument("--n0", type=int, help="initial replications per alternative")
    p.add_argument("--m", type=int, help="size of the selected subset")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--threads", type=int, help="worker processes (results do not depend on it)")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--checkpoints", type=int, help="number of evenly spaced budget checkpoints")
    p.set_defaults(func=cmd_run)

    def add_family(q):
        q.add_argument("--family", choices=["normal", "bernoulli", "exponential"], default="normal")
        q.add_argument("--means", help="comma-separated means (normal)")
        q.add_argument("--vars", help="comma-separated variances (normal, default 1)")
        q.add_argument("--q", help="comma-separated success probabilities (bernoulli)")
        q.add_argument("--rate", help="comma-separated rate parameters (exponential)")

    p = sub.add_parser("solve-ratios", help="optimal sampling ratios as JSON")
    add_family(p)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; the solver is deterministic")
    p.set_defaults(func=cmd_solve_ratios)

    p = sub.add_parser("rate", help="pairwise rate function as JSON")
    add_family(p)
    p.add_argument("--ratios", required=True, help="r_i,r_j")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("evac", help="rank evacuation plans by expected clearance time")
    p.add_argument("--fixture", help="network JSON (default: built-in network)")
    p.add_argument("--draws", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_evac)
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
