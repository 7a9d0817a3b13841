"""Allocation rules evaluated on a :class:`PolicyState`.

AOAm is computed here directly from posterior parameters (any prior), which
also makes it an independent check on the kernel.  The OCBA family reuses the
reference scalar code in ``_fallback`` so there is one definition of each rule.
"""
from __future__ import annotations

import numpy as np

from ..bayes import lookahead_var, rank_desc
from . import _fallback as ref
from .state import AllocationDecision, PolicyState

CORG = "corg"
CADP = "cadp"


def _posterior_arrays(state: PolicyState):
    post = state.posteriors()
    mu = np.array([p.mean for p in post])
    var = np.array([p.var for p in post])
    shrunk = np.array(
        [lookahead_var(s, v) for s, v in zip(state.stats, state.plug_in_vars())]
    )
    return mu, var, shrunk


def _split(mu, m):
    order = rank_desc(mu)
    return order[:m], order[m:]


def aoam_lookahead(state: PolicyState, candidate: int) -> float:
    """VFA after one hypothetical extra replication of ``candidate``."""
    if not 0 <= candidate < state.k:
        raise IndexError(f"candidate {candidate} out of range")
    mu, var, shrunk = _posterior_arrays(state)
    top, bot = _split(mu, state.m)
    gap2 = (mu[top][:, None] - mu[bot][None, :]) ** 2
    v = var.copy()
    v[candidate] = shrunk[candidate]
    d2 = gap2 / (v[top][:, None] + v[bot][None, :])
    return float(d2.min())


def aoam_scores(state: PolicyState) -> np.ndarray:
    return np.array([aoam_lookahead(state, i) for i in range(state.k)])


def aoam_select(state: PolicyState) -> AllocationDecision:
    scores = aoam_scores(state)
    # np.argmax returns the first maximal index: ties go to the smallest index
    return AllocationDecision(int(np.argmax(scores)), scores)


def ea_select(state: PolicyState) -> AllocationDecision:
    chosen, scores = ref.decide_ea(state.counts())
    return AllocationDecision(chosen, np.asarray(scores))


def _sample_view(state: PolicyState):
    means = state.means()
    order = [int(i) for i in rank_desc(means)]
    return state.counts(), means, state.plug_in_vars(), order


def _variant(variant: str) -> bool:
    v = variant.lower()
    if v not in (CORG, CADP):
        raise ValueError(f"variant must be 'corg' or 'cadp', got {variant!r}")
    return v == CORG


def ocbam_c(state: PolicyState, variant: str = CADP) -> float:
    """Separating constant between the m-th and (m+1)-th ranked sample means."""
    cnt, means, var, order = _sample_view(state)
    return ref.ocbam_c(state.m, cnt, means, var, order, _variant(variant))


def ocbam_ratios(state: PolicyState, variant: str = CADP) -> np.ndarray:
    cnt, means, var, order = _sample_view(state)
    return np.asarray(ref.ocbam_ratios(state.m, cnt, means, var, order, _variant(variant)))


def ocbam_select(state: PolicyState, variant: str = CADP) -> AllocationDecision:
    cnt, means, var, order = _sample_view(state)
    chosen, scores = ref.decide_ocbam(state.m, cnt, means, var, order, state.t, _variant(variant))
    return AllocationDecision(chosen, np.asarray(scores))


def ocbam_plus_ratios(state: PolicyState) -> np.ndarray:
    cnt, means, var, order = _sample_view(state)
    return np.asarray(ref.ocbam_plus_ratios(state.m, cnt, means, var, order))


def ocbam_plus_select(state: PolicyState) -> AllocationDecision:
    cnt, means, var, order = _sample_view(state)
    chosen, scores = ref.decide_ocbam_plus(state.m, cnt, means, var, order, state.t)
    return AllocationDecision(chosen, np.asarray(scores))


def ocbass_statistics(state: PolicyState) -> np.ndarray:
    """I-statistics, rows = ranked top-m, columns = ranked rest."""
    cnt, means, var, order = _sample_view(state)
    return np.asarray(ref._ocbass_matrix(state.m, cnt, means, var, order, state.t))


def ocbass_select(state: PolicyState) -> AllocationDecision:
    cnt, means, var, order = _sample_view(state)
    chosen, scores = ref.decide_ocbass(state.m, cnt, means, var, order, state.t)
    return AllocationDecision(chosen, np.asarray(scores))


def ocbasss_select(state: PolicyState) -> AllocationDecision:
    cnt, means, var, order = _sample_view(state)
    chosen, scores = ref.decide_ocbasss(
        state.m, cnt, means, var, order, state.t, state.tie_seed
    )
    return AllocationDecision(chosen, np.asarray(scores))


SELECTORS = {
    "EA": ea_select,
    "AOAm": aoam_select,
    "OCBAm": lambda s: ocbam_select(s, CADP),
    "OCBAm-corg": lambda s: ocbam_select(s, CORG),
    "OCBAm+": ocbam_plus_select,
    "OCBAss": ocbass_select,
    "OCBASS": ocbasss_select,
}
