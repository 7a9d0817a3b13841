"""Problem generators: synthetic normal families and the evacuation benchmark."""
from .evacuation import (
    EdgeSpec,
    EvacuationInstance,
    EvacuationNetwork,
    EvacuationProblem,
    clearance_time,
    enumerate_plans,
    estimate_clearance,
    lognormal_params,
    load_shanghai,
    path_metrics,
    plan_label,
    plan_paths,
    simulate_clearance,
    source_evac_time,
)
from .synthetic import EXPERIMENTS, NormalInstance, SyntheticSpec, make_experiment

__all__ = [
    "EXPERIMENTS",
    "EdgeSpec",
    "EvacuationInstance",
    "EvacuationNetwork",
    "EvacuationProblem",
    "NormalInstance",
    "SyntheticSpec",
    "clearance_time",
    "enumerate_plans",
    "estimate_clearance",
    "lognormal_params",
    "load_shanghai",
    "make_experiment",
    "path_metrics",
    "plan_label",
    "plan_paths",
    "simulate_clearance",
    "source_evac_time",
]
