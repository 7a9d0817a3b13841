import math

import numpy as np
import pytest

from topm.bayes import AlternativeStat, rank_desc, update_stat, vfa_current
from topm.errors import BudgetTooSmall, InvalidM
from topm.policies import (
    CORG,
    POLICY_CODES,
    PolicyState,
    aoam_lookahead,
    aoam_scores,
    aoam_select,
    canonical_policy,
    ea_select,
    get_kernel,
    ocbam_c,
    ocbam_plus_ratios,
    ocbam_plus_select,
    ocbam_ratios,
    ocbam_select,
    ocbass_select,
    ocbass_statistics,
    ocbasss_select,
    run_policy,
)
from topm.policies import _fallback as ref
from topm.policies.rules import SELECTORS
from topm.policies.runner import ObservationBuffer, tie_seed_for
from topm.problems import NormalInstance


def known_state(counts, means, variances, m, tie_seed=0):
    k = len(counts)
    return PolicyState.from_arrays(counts, means, np.zeros(k), m, known_var=variances, tie_seed=tie_seed)


def random_state(rng, k=None, m=None, tie_seed=0):
    k = k or int(rng.integers(2, 9))
    m = m or int(rng.integers(1, k))
    counts = rng.integers(3, 40, size=k)
    means = rng.normal(size=k) * 2
    var = rng.uniform(0.2, 5.0, size=k)
    m2 = var * (counts - 1)
    return PolicyState.from_arrays(counts, means, m2, m, tie_seed=tie_seed)


# ---------------------------------------------------------------- AOAm


def test_aoam_lookahead_hand_oracle():
    s = known_state([4, 2, 4], [3.0, 2.0, 0.0], [1.0, 1.0, 4.0], 2)
    v = [aoam_lookahead(s, i) for i in range(3)]
    assert v == pytest.approx([8 / 3, 3.0, 4 / 1.3], abs=1e-12)
    assert round(v[2], 4) == 3.0769
    d = aoam_select(s)
    assert d.chosen == 2


def test_aoam_symmetric_state():
    s = known_state([5, 5], [1.0, 1.0], [1.0, 1.0], 1)
    assert aoam_scores(s).tolist() == [0.0, 0.0]
    assert aoam_select(s).chosen == 0


def test_aoam_large_variance_on_binding_pair():
    s = known_state([10, 10, 10, 10], [4.0, 3.0, 2.0, 1.0], [1.0, 400.0, 1.0, 1.0], 2)
    assert aoam_select(s).chosen == 1


def test_aoam_invalid_m():
    with pytest.raises(InvalidM):
        known_state([3, 3], [1.0, 0.0], [1.0, 1.0], 2)


def _aoap_best(state):
    """Selecting-the-best look-ahead written straight from its m=1 formulas."""
    post = state.posteriors()
    mu = [p.mean for p in post]
    sig = [p.var for p in post]
    sig1 = [v / (s.count + 1) for v, s in zip(state.plug_in_vars(), state.stats)]
    order = rank_desc(mu)
    b = order[0]
    vals = np.empty(state.k)
    vals[b] = min((mu[b] - mu[j]) ** 2 / (sig1[b] + sig[j]) for j in order[1:])
    for j in order[1:]:
        own = (mu[b] - mu[j]) ** 2 / (sig[b] + sig1[j])
        rest = [(mu[b] - mu[l]) ** 2 / (sig[b] + sig[l]) for l in order[1:] if l != j]
        vals[j] = min([own] + rest)
    return int(np.argmax(vals)), vals


def test_m1_reduction_matches_selecting_the_best_formulas():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        s = random_state(rng, k=int(rng.integers(2, 9)), m=1)
        chosen, vals = _aoap_best(s)
        d = aoam_select(s)
        assert d.chosen == chosen
        np.testing.assert_allclose(d.scores, vals, rtol=1e-13)
        cnt, means, var, order = s.counts(), s.means(), s.plug_in_vars(), s.ranking()
        assert ref.decide_aoam(1, cnt, means, var, order)[0] == chosen


def test_aoam_kernel_matches_direct_lookahead():
    rng = np.random.default_rng(12)
    for _ in range(500):
        s = random_state(rng)
        direct = aoam_scores(s)
        chosen, scores = ref.decide_aoam(s.m, s.counts(), s.means(), s.plug_in_vars(), s.ranking())
        np.testing.assert_allclose(scores, direct, rtol=1e-12)
        assert chosen == int(np.argmax(direct))


def test_aoam_lookahead_dominates_current_on_binding_pair():
    rng = np.random.default_rng(13)
    for _ in range(200):
        s = random_state(rng)
        assert aoam_scores(s).max() >= vfa_current(s.posteriors(), s.m) - 1e-12


# ---------------------------------------------------------------- EA


def test_ea_examples():
    assert ea_select(known_state([5, 4, 5], [0, 1, 2], [1, 1, 1], 1)).chosen == 1
    assert ea_select(known_state([4, 4, 4], [0, 1, 2], [1, 1, 1], 1)).chosen == 0


def test_ea_round_robin():
    inst = NormalInstance(np.arange(5.0), np.ones(5), 2)
    tr = run_policy(inst, "EA", 3, 5 * 3 + 5, seed=1)
    assert tr.counts.tolist() == [4] * 5
    assert tr.allocations[15:].tolist() == [0, 1, 2, 3, 4]


# ---------------------------------------------------------------- OCBAm


def test_ocbam_c_examples():
    s = known_state([5, 5, 5], [3.0, 2.0, 1.0], [1.0, 1.0, 1.0], 2)
    assert ocbam_c(s) == pytest.approx(1.5)
    s = known_state([5, 5, 5], [3.0, 2.0, 1.0], [1.0, 1.0, 9.0], 2)
    assert ocbam_c(s) == pytest.approx(1.75)
    assert ocbam_c(s, CORG) == pytest.approx(ocbam_c(s))


def test_ocbam_c_between_adjacent_means():
    rng = np.random.default_rng(14)
    for _ in range(300):
        s = random_state(rng)
        order = s.ranking()
        hi, lo = s.means()[order[s.m - 1]], s.means()[order[s.m]]
        for variant in ("cadp", "corg"):
            c = ocbam_c(s, variant)
            assert lo < c < hi


def test_ocbam_ratios_symmetric_pair():
    s = known_state([5, 5], [2.0, 1.0], [1.0, 1.0], 1)
    assert ocbam_ratios(s).tolist() == pytest.approx([0.5, 0.5])


def test_most_starving_example():
    chosen, scores = ref._most_starving([0.8, 0.2], [4, 4], 8)
    assert chosen == 0
    assert scores == pytest.approx([9 * 0.8 - 4, 9 * 0.2 - 4])


def test_ocbam_alternative_at_c_dominates():
    # tied boundary means put c on both of them
    s = known_state([5, 5, 5, 5], [3.0, 2.0, 2.0, 1.0], [1.0, 1.0, 1.0, 1.0], 2)
    r = ocbam_ratios(s)
    assert r[1] + r[2] > 1 - 1e-9
    assert ocbam_select(s).chosen == 1


# ---------------------------------------------------------------- OCBAm+


def test_ocbam_plus_example():
    s = known_state([5] * 4, [4.0, 3.0, 2.0, 1.0], [1.0] * 4, 2)
    r = ocbam_plus_ratios(s)
    raw = np.array([1.0, math.sqrt(1 + 1 + 1 / 16), 1.0, 1 / 4])
    np.testing.assert_allclose(r, raw / raw.sum(), rtol=1e-14)
    assert r.sum() == pytest.approx(1.0)
    assert ocbam_plus_select(s).chosen == 1


def test_ocbam_plus_symmetric_branches_coincide():
    # with mirror-symmetric means the two anchors give mirrored vectors
    s = known_state([5] * 4, [4.0, 3.0, 2.0, 1.0], [1.0] * 4, 2)
    r = ocbam_plus_ratios(s)
    other = known_state([5] * 4, [-1.0, -2.0, -3.0, -4.0][::-1], [1.0] * 4, 2)
    assert ocbam_plus_ratios(other).tolist() == pytest.approx(r[::-1].tolist())
    mirror = known_state([5] * 4, [-1.0, -2.0, -3.0, -4.0], [1.0] * 4, 2)
    assert sorted(ocbam_plus_ratios(mirror)) == pytest.approx(sorted(r))


def test_ocbam_plus_scale_invariant():
    rng = np.random.default_rng(15)
    for _ in range(100):
        k = int(rng.integers(3, 8))
        m = int(rng.integers(1, k))
        means = rng.normal(size=k)
        var = rng.uniform(0.5, 3, size=k)
        cnt = rng.integers(3, 30, size=k)
        a = known_state(cnt, means, var, m)
        b = known_state(cnt, means, var * 7.3, m)
        assert ocbam_plus_select(a).chosen == ocbam_plus_select(b).chosen
        np.testing.assert_allclose(ocbam_plus_ratios(a), ocbam_plus_ratios(b), rtol=1e-12)


def test_ocbam_plus_boundaries_total():
    for m in (1, 3):
        s = known_state([5] * 4, [4.0, 3.0, 2.0, 1.0], [1.0] * 4, m)
        r = ocbam_plus_ratios(s)
        assert np.all(r > 0) and r.sum() == pytest.approx(1.0)


# ---------------------------------------------------------------- OCBAss / OCBASS


def test_ocbass_statistics_example():
    s = known_state([10, 10, 10], [2.0, 1.0, 0.0], [1.0] * 3, 1)
    I = ocbass_statistics(s)
    assert I.shape == (1, 2)
    assert I[0].tolist() == pytest.approx([1 / 6, 4 / 6])
    assert ocbass_select(s).chosen == 0


def test_ocbass_balanced_sums_take_bottom_branch():
    s = known_state([10, 10], [2.0, 1.0], [1.0, 1.0], 1)
    assert ocbass_select(s).chosen == 1


def test_ocbass_homogeneous_in_counts():
    rng = np.random.default_rng(16)
    for _ in range(200):
        k = int(rng.integers(3, 8))
        m = int(rng.integers(1, k))
        means, var = rng.normal(size=k), rng.uniform(0.5, 3, size=k)
        cnt = rng.integers(3, 30, size=k)
        assert ocbass_select(known_state(cnt, means, var, m)).chosen == ocbass_select(
            known_state(2 * cnt, means, var, m)
        ).chosen


def test_ocbasss_fair_coin_on_binding_pair():
    hits = {0: 0, 1: 0}
    for seed in range(10_000):
        s = known_state([10, 10, 10], [2.0, 1.0, 0.0], [1.0] * 3, 1, tie_seed=seed)
        c = ocbasss_select(s).chosen
        assert c in (0, 1)
        hits[c] += 1
    assert abs(hits[0] / 10_000 - 0.5) <= 0.02


def test_ocbasss_dominant_pair():
    s = known_state([10] * 4, [10.0, 9.0, 0.0, -1.0], [1.0] * 4, 1)
    for seed in range(50):
        s.tie_seed = seed
        assert ocbasss_select(s).chosen in (0, 1)


# ---------------------------------------------------------------- shared properties


@pytest.mark.parametrize("name", sorted(SELECTORS))
def test_label_equivariance(name):
    rng = np.random.default_rng(17)
    sel = SELECTORS[name]
    for _ in range(200):
        s = random_state(rng, tie_seed=int(rng.integers(1 << 40)))
        if name == "EA":
            cnt = rng.permutation(len(s.stats) * 3)[: s.k] + 3
            s = PolicyState([AlternativeStat(int(c), st.mean, st.m2) for c, st in zip(cnt, s.stats)], s.m, s.tie_seed)
        perm = rng.permutation(s.k)
        p = PolicyState([s.stats[i] for i in perm], s.m, s.tie_seed)
        assert perm[sel(p).chosen] == sel(s).chosen


@pytest.mark.parametrize("name", sorted(SELECTORS))
def test_zero_variance_states_are_safe(name):
    stats = [AlternativeStat(5, float(v), 0.0) for v in (3.0, 2.0, 2.0, 1.0)]
    s = PolicyState(stats, 2)
    assert 0 <= SELECTORS[name](s).chosen < 4


def test_canonical_names():
    assert canonical_policy("aoam") == "AOAm"
    assert canonical_policy("OCBASS") == "OCBASS"
    assert canonical_policy("ocbass") == "OCBAss"
    assert canonical_policy("ocbass-ld") == "OCBASS"
    with pytest.raises(KeyError):
        canonical_policy("kg")


# ---------------------------------------------------------------- runs


def test_run_policy_budget_errors():
    inst = NormalInstance(np.arange(4.0), np.ones(4), 2)
    with pytest.raises(BudgetTooSmall):
        run_policy(inst, "AOAm", 1, 100, seed=0)
    with pytest.raises(BudgetTooSmall):
        run_policy(inst, "AOAm", 5, 19, seed=0)


def test_run_policy_initialization_only():
    inst = NormalInstance(np.arange(4.0), np.ones(4), 2)
    tr = run_policy(inst, "AOAm", 5, 20, seed=0)
    assert tr.counts.tolist() == [5] * 4
    top = np.sort(rank_desc(tr.means)[:2])
    assert list(tr.selected) == top.tolist()


@pytest.mark.parametrize("policy", sorted(POLICY_CODES))
def test_run_policy_consumes_budget_and_is_deterministic(policy):
    inst = NormalInstance(np.linspace(0, 3, 8), np.linspace(1, 4, 8), 3)
    a = run_policy(inst, policy, 5, 600, seed=3)
    b = run_policy(inst, policy, 5, 600, seed=3)
    assert a.counts.sum() == 600
    assert np.array_equal(a.allocations, b.allocations)
    assert np.array_equal(a.means, b.means)
    assert np.bincount(a.allocations, minlength=8).tolist() == a.counts.tolist()


@pytest.mark.parametrize("policy", sorted(POLICY_CODES))
def test_each_kernel_step_matches_selector(policy):
    """Replaying a trace, every recorded choice equals the state-level rule."""
    inst = NormalInstance(np.linspace(0, 2, 6), np.linspace(1, 3, 6), 2)
    tr = run_policy(inst, policy, 4, 150, seed=8, backend="python")
    buf = ObservationBuffer(inst, 8, 0)
    buf.ensure_all(200)
    stats = []
    for i in range(6):
        st = AlternativeStat()
        for j in range(4):
            st = update_stat(st, float(buf.obs[i, j]))
        stats.append(st)
    tseed = tie_seed_for(8, 0)
    for t in range(24, 150):
        s = PolicyState(list(stats), 2, tseed)
        chosen = SELECTORS[policy](s).chosen
        assert chosen == tr.allocations[t]
        st = stats[chosen]
        stats[chosen] = update_stat(st, float(buf.obs[chosen, st.count]))


def test_backend_choices():
    assert get_kernel("python") is ref
    with pytest.raises(ValueError):
        get_kernel("fortran")
