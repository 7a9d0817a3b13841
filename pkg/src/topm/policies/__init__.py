"""Sequential allocation policies: AOAm and the EA / OCBA-family baselines."""
from .backend import ALL_POLICIES, BACKEND, POLICY_CODES, canonical_policy, get_kernel
from .rules import (
    CADP,
    CORG,
    aoam_lookahead,
    aoam_scores,
    aoam_select,
    ea_select,
    ocbam_c,
    ocbam_plus_ratios,
    ocbam_plus_select,
    ocbam_ratios,
    ocbam_select,
    ocbass_select,
    ocbass_statistics,
    ocbasss_select,
)
from .runner import ObservationBuffer, PolicyRun, Trace, default_checkpoints, run_policy
from .state import AllocationDecision, PolicyState

__all__ = [
    "ALL_POLICIES", "BACKEND", "POLICY_CODES", "canonical_policy", "get_kernel",
    "CADP", "CORG", "aoam_lookahead", "aoam_scores", "aoam_select", "ea_select",
    "ocbam_c", "ocbam_plus_ratios", "ocbam_plus_select", "ocbam_ratios", "ocbam_select",
    "ocbass_select", "ocbass_statistics", "ocbasss_select",
    "ObservationBuffer", "PolicyRun", "Trace", "default_checkpoints", "run_policy",
    "AllocationDecision", "PolicyState",
]
