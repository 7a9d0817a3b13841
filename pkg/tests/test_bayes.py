import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from topm.bayes import (
    AlternativeStat,
    PosteriorParams,
    PriorSpec,
    lookahead_var,
    posterior,
    posterior_pcs_mc,
    rank_desc,
    stat_from_samples,
    update_stat,
    update_stat_many,
    vfa_current,
    vfa_distance,
)
from topm.errors import DegenerateState, DomainError, InvalidM


def test_update_single_observation():
    s = update_stat(AlternativeStat(), 1.0)
    assert s.count == 1 and s.mean == 1.0


def test_update_two_point_variance():
    s = update_stat(update_stat(AlternativeStat(), 1.0), 3.0)
    assert s.count == 2 and s.mean == 2.0 and s.sample_var == 2.0
    assert s.sum == 4.0 and s.sum_sq == 10.0


def test_constant_stream_has_no_variance():
    s = stat_from_samples(np.full(1_000_000, 5.0))
    assert s.sample_var <= 1e-10


def test_welford_accuracy_large_offset():
    rng = np.random.default_rng(0)
    x = 1e6 + rng.standard_normal(1_000_000)
    s = AlternativeStat()
    for v in x[:20000]:
        s = update_stat(s, float(v))
    s = update_stat_many(s, x[20000:])
    ref = np.var(x, ddof=1)
    assert abs(s.sample_var - ref) / ref <= 1e-10
    assert s.count == x.size


def test_sample_var_needs_two():
    with pytest.raises(DegenerateState):
        _ = update_stat(AlternativeStat(), 1.0).sample_var
    with pytest.raises(DegenerateState):
        _ = AlternativeStat().sample_mean


def test_plug_in_var_floor_and_known():
    s = stat_from_samples([2.0, 2.0, 2.0])
    assert s.plug_in_var() == 1e-12
    assert stat_from_samples([2.0, 2.0], known_var=4.0).plug_in_var() == 4.0


def test_posterior_uninformative():
    p = posterior(stat_from_samples([1.0, 3.0]), 4.0)
    assert p == PosteriorParams(2.0, 2.0)


def test_posterior_conjugate():
    s = stat_from_samples([2.0], prior=PriorSpec.normal(0.0, 1.0))
    p = posterior(s, 1.0)
    assert p.var == pytest.approx(0.5) and p.mean == pytest.approx(1.0)


def test_posterior_diffuse_limit():
    s = stat_from_samples([1.0, 3.0], prior=PriorSpec.normal(5.0, 1e12))
    p = posterior(s, 1.0)
    assert abs(p.mean - 2.0) <= 1e-6 and abs(p.var - 0.5) <= 1e-6


def test_posterior_errors():
    with pytest.raises(DegenerateState):
        posterior(AlternativeStat(), 1.0)
    with pytest.raises(DomainError):
        posterior(stat_from_samples([1.0, 2.0]), 0.0)
    with pytest.raises(DomainError):
        PriorSpec.normal(0.0, -1.0)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=20), st.floats(0.01, 100), st.floats(-50, 50))
@settings(max_examples=200, deadline=None)
def test_posterior_var_strictly_decreases(xs, var, x):
    for prior in (PriorSpec(), PriorSpec.normal(0.0, 3.0)):
        s = stat_from_samples(xs, prior=prior)
        v0 = posterior(s, var).var
        v1 = posterior(update_stat(s, x), var).var
        assert v1 < v0
        assert lookahead_var(s, var) == pytest.approx(v1, rel=1e-12)


def test_pcs_mc_examples():
    p, se = posterior_pcs_mc([PosteriorParams(0, 1), PosteriorParams(0, 1)], 1, 200_000, seed=1)
    assert abs(p - 0.5) <= 3 * se
    p, se = posterior_pcs_mc([PosteriorParams(1, 0.5), PosteriorParams(0, 0.5)], 1, 200_000, seed=2)
    assert abs(p - norm.cdf(1.0)) <= 3 * se
    assert abs(norm.cdf(1.0) - 0.8413) < 1e-4
    p, _ = posterior_pcs_mc([PosteriorParams(100, 1), PosteriorParams(0, 1), PosteriorParams(0, 1)], 1, 10_000, seed=3)
    assert p >= 0.999


def test_pcs_mc_matches_closed_form_two_alternatives():
    rng = np.random.default_rng(5)
    for _ in range(100):
        a = PosteriorParams(rng.normal(), rng.uniform(0.1, 2))
        b = PosteriorParams(rng.normal(), rng.uniform(0.1, 2))
        p, se = posterior_pcs_mc([a, b], 1, 20_000, seed=int(rng.integers(1 << 30)))
        top, bot = (a, b) if a.mean >= b.mean else (b, a)
        exact = norm.cdf(vfa_distance(top, bot))
        assert abs(p - exact) <= 4 * max(se, 1e-3)


def test_pcs_mc_invalid_m():
    with pytest.raises(InvalidM):
        posterior_pcs_mc([PosteriorParams(0, 1)] * 3, 3, 10)


def test_vfa_distance_examples():
    assert vfa_distance(PosteriorParams(1, 0.5), PosteriorParams(0, 0.5)) == 1.0
    assert vfa_distance(PosteriorParams(1, 0.5), PosteriorParams(1, 0.5)) == 0.0
    assert vfa_distance(PosteriorParams(3, 0.25), PosteriorParams(0, 1.0)) == pytest.approx(2.6833, abs=1e-4)


def test_vfa_current_examples():
    post = [PosteriorParams(3, 0.25), PosteriorParams(2, 0.5), PosteriorParams(0, 1.0)]
    assert vfa_current(post, 2) == pytest.approx(min(9 / 1.25, 4 / 1.5))
    assert vfa_current(post, 2) == pytest.approx(2.6667, abs=1e-4)
    assert vfa_current([PosteriorParams(1, 0.5), PosteriorParams(0, 0.5)], 1) == 1.0
    assert vfa_current([PosteriorParams(1, 0.5), PosteriorParams(1, 0.5)], 1) == 0.0
    with pytest.raises(InvalidM):
        vfa_current(post, 0)


def test_vfa_current_permutation_invariant():
    rng = np.random.default_rng(9)
    for _ in range(50):
        k = int(rng.integers(3, 8))
        post = [PosteriorParams(rng.normal(), rng.uniform(0.1, 2)) for _ in range(k)]
        m = int(rng.integers(1, k))
        base = vfa_current(post, m)
        perm = rng.permutation(k)
        assert vfa_current([post[i] for i in perm], m) == pytest.approx(base, rel=1e-15)


def test_rank_desc_ties_by_index():
    assert rank_desc([1.0, 2.0, 2.0, 0.0]).tolist() == [1, 2, 0, 3]


def test_sum_sq_consistent():
    s = stat_from_samples([1.0, 2.0, 4.0])
    assert s.sum_sq >= s.sum**2 / s.count - 1e-12
    assert math.isclose(s.sum_sq, 21.0)
