import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cached_run
from gwperc import analytics as an
from gwperc.errors import InvalidRange, InvalidScenario, InvalidThreshold, NearCritical, SupercriticalInfinite
from gwperc.offspring import OffspringDistribution
from gwperc.oracle import build_deterministic_tree, enumerate_exact
from gwperc.simulator import Scenario

DISTS = [
    OffspringDistribution.deterministic(1),
    OffspringDistribution.deterministic(2),
    OffspringDistribution.deterministic(3),
    OffspringDistribution.shifted_geometric(0.5),
    OffspringDistribution.table({1: 0.5, 3: 0.5}),
    OffspringDistribution.shifted_poisson(1.2),
]


def test_nu_and_sigma_examples(det2):
    assert an.nu_moments(det2, 0.3) == pytest.approx((0.6, 0.3), abs=1e-15)
    assert an.sigma_moments(det2, 0.5) == pytest.approx((0.5, 0.25), abs=1e-15)
    table = OffspringDistribution.table({1: 0.5, 3: 0.5})
    assert an.nu_moments(table, 0.3) == pytest.approx((0.6, 0.3))
    assert an.sigma_moments(table, 0.5) == pytest.approx((0.75, 0.5), abs=1e-15)
    for k in (1, 2, 5):
        assert an.sigma_moments(OffspringDistribution.deterministic(k), 0.3)[0] == pytest.approx(0.21 * k)


def test_d_moments_against_pmf_sums():
    for q, r in [(0.5, 3), (0.2, 1), (0.9, 7), (0.995, 12), (0.3, 0)]:
        pmf = [q**k * (1 - q) for k in range(r)] + [q**r]
        mean = sum(k * w for k, w in enumerate(pmf))
        fact2 = sum(k * (k - 1) * w for k, w in enumerate(pmf))
        got = an.d_moments(q, r)
        assert got[0] == pytest.approx(mean, rel=1e-12, abs=1e-15)
        assert got[1] == pytest.approx(fact2, rel=1e-11, abs=1e-15)
    assert an.d_moments(0.5, 3) == pytest.approx((0.875, 1.0), rel=1e-14)


def test_reach_pmf_sums_to_one():
    assert math.fsum(an.reach_pmf(0.37, 9)) == pytest.approx(1.0, abs=1e-15)


def test_subtree_examples():
    assert an.subtree_moments(0, 0.6, 0.42) == (1.0, 1.0)
    assert an.subtree_moments(None, 0.5, 0.25) == pytest.approx((2.0, 6.0), rel=1e-14)
    first, second = an.subtree_moments(2, 0.6, 0.42)
    assert first == pytest.approx(1.96, rel=1e-14)
    # Complete binary tree, p = 0.3, source at the root: exact enumeration.
    stats = enumerate_exact(build_deterministic_tree(2, 2), 0.3, 0.5, 0)
    assert first == pytest.approx(stats.mean_size, abs=1e-12)
    assert second == pytest.approx(stats.second_moment_size, abs=1e-12)
    assert second == pytest.approx(5.1688, abs=1e-12)


def test_subtree_infinite_regime_errors():
    with pytest.raises(NearCritical):
        an.subtree_moments(None, 1.0, 0.5)
    with pytest.raises(SupercriticalInfinite):
        an.subtree_moments(None, 1.2, 0.5)
    with pytest.raises(InvalidRange):
        an.subtree_moments(-1, 0.5, 0.5)


def _variance_recursion(h, nu, s2):
    mean, var = 1.0, 0.0
    for _ in range(h):
        mean, var = 1.0 + nu * mean, nu * var + s2 * mean * mean
    return mean, var + mean * mean


@pytest.mark.parametrize("nu", [0.3, 0.99, 1.0, 1.0 + 1e-7, 1.005, 1.02, 1.7])
@pytest.mark.parametrize("h", [1, 5, 17])
def test_finite_subtree_matches_recursion(nu, h):
    first, second = an.subtree_moments(h, nu, 0.4)
    ref_first, ref_second = _variance_recursion(h, nu, 0.4)
    assert first == pytest.approx(ref_first, rel=1e-12)
    assert second == pytest.approx(ref_second, rel=1e-10)


def test_excluded_subtree_examples():
    assert an.excluded_subtree_moments(1.0, 1.0, 0.3, 0.21) == pytest.approx((1.3, 1.9), rel=1e-14)
    # Root of the depth-2 binary tree with vertex 1's subtree removed.
    tree = build_deterministic_tree(2, 2).without_subtree(1)
    stats = enumerate_exact(tree, 0.3, 0.5, 0)
    inner = an.subtree_moments(1, 0.6, 0.42)
    first, second = an.excluded_subtree_moments(*inner, 0.3, 0.21)
    assert first == pytest.approx(stats.mean_size, abs=1e-12)
    assert second == pytest.approx(stats.second_moment_size, abs=1e-12)


def test_first_moment_examples(det1, det2):
    assert an.first_moment(Scenario(det2, 0.3, 0.7, radius=1)) == pytest.approx(1.6, abs=1e-14)
    assert an.first_moment(Scenario(det1, 0.5, 0.5, source_depth=2)) == pytest.approx(2.75, abs=1e-14)
    oracle = enumerate_exact(build_deterministic_tree(2, 2), 0.3, 0.7, 1).mean_size
    assert an.first_moment(Scenario(det2, 0.3, 0.7, radius=2, source_depth=1)) == pytest.approx(oracle, abs=1e-12)
    with pytest.raises(SupercriticalInfinite, match="supercritical"):
        an.first_moment(Scenario(det2, 0.6, 0.5))
    with pytest.raises(NearCritical):
        an.first_moment(Scenario(det2, 0.5, 0.5))


def test_first_moment_singular_paths_use_direct_sum(det2):
    for p, q in [(0.5, 0.3), (0.5 + 2e-10, 0.3), (0.8, 0.625)]:  # mu p = 1 and mu p q = 1
        s = Scenario(det2, p, q, radius=9, source_depth=4)
        assert an.first_moment(s) == pytest.approx(an.first_moment_direct(s), rel=1e-12)


def test_first_moment_symmetric_examples(det2):
    s = Scenario(det2, 0.5, 0.5, radius=2, source_depth=1)
    oracle = enumerate_exact(build_deterministic_tree(2, 2), 0.5, 0.5, 1).mean_size
    assert an.first_moment_symmetric(s) == pytest.approx(oracle, abs=1e-12)
    assert an.first_moment_symmetric(s) == pytest.approx(an.first_moment(s), rel=1e-13)
    with pytest.raises(InvalidScenario):
        an.first_moment_symmetric(Scenario(det2, 0.4, 0.5, radius=3))
    with pytest.raises(InvalidScenario):
        an.first_moment_symmetric(Scenario(det2, 0.4, 0.4))


def test_second_moment_examples(det1, geom_half):
    assert an.second_moment_infinite(Scenario(det1, 0.5, 0.5)) == pytest.approx(6.0, rel=1e-14)
    with pytest.raises(InvalidScenario):
        an.second_moment_infinite(Scenario(det1, 0.5, 0.5, radius=4))
    with pytest.raises(SupercriticalInfinite):
        an.second_moment_infinite(Scenario(geom_half, 0.6, 0.5))


@pytest.mark.parametrize("dist", DISTS, ids=lambda d: d.descriptor)
def test_second_moment_source_at_root_is_subtree_moment(dist):
    p = 0.8 / dist.mu
    s = Scenario(dist, p, 0.5)
    nu_p, _ = an.nu_moments(dist, p)
    s2_p, _ = an.sigma_moments(dist, p)
    assert an.second_moment_infinite(s) == pytest.approx(an.subtree_moments(None, nu_p, s2_p)[1], rel=1e-13)


def test_second_moment_direct_matches_oracle_on_finite_trees(det2):
    tree = build_deterministic_tree(2, 2)
    for r in range(3):
        stats = enumerate_exact(tree, 0.3, 0.7, tree.vertices_at_depth(r)[0])
        s = Scenario(det2, 0.3, 0.7, radius=2, source_depth=r)
        assert an.second_moment_direct(s) == pytest.approx(stats.second_moment_size, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    dist=st.sampled_from(DISTS),
    frac=st.floats(0.01, 0.97),
    q=st.floats(0.01, 0.99),
    r=st.integers(0, 12),
)
def test_variance_nonnegative(dist, frac, q, r):
    s = Scenario(dist, min(frac / dist.mu, 0.99), q, source_depth=r)
    report = an.exact_report(s)
    assert report.variance >= -1e-9 * report.second_moment


def test_chebyshev_examples(det1, geom_half):
    s = Scenario(det1, 0.5, 0.5)
    assert an.chebyshev_tail_bound(s, 10) == pytest.approx(0.09375, rel=1e-14)
    with pytest.raises(InvalidThreshold):
        an.chebyshev_tail_bound(s, 2)
    s = Scenario(geom_half, 0.4, 0.5, source_depth=2)
    second = an.second_moment_infinite(s)
    assert an.chebyshev_tail_bound(s, 1e8) * 1e16 == pytest.approx(second, rel=1e-6)


def test_diameter_bound_examples(det2):
    s = Scenario(det2, 0.3, 0.5)
    for n in range(1, 8):
        assert an.diameter_tail_bound(s, n) == pytest.approx(0.6**n, rel=1e-14)
    s = Scenario(det2, 0.3, 0.6, source_depth=1)  # q = mu p
    for n in range(2, 11):
        assert an.diameter_tail_bound(s, n) == pytest.approx(2 * 0.6**n, rel=1e-14)
    with pytest.raises(InvalidRange):
        an.diameter_tail_bound(s, 1)
    with pytest.raises(SupercriticalInfinite):
        an.diameter_tail_bound(Scenario(det2, 0.6, 0.5), 3)


def test_diameter_bound_log_slope(det2):
    s = Scenario(det2, 0.35, 0.45, source_depth=3)
    logs = np.log([an.diameter_tail_bound(s, n) for n in range(4, 20)])
    assert np.allclose(np.diff(logs), math.log(0.7), rtol=0, atol=1e-12)


def test_front_profile_examples(det1, det2):
    assert an.expected_front_profile(Scenario(det1, 0.5, 0.5, source_depth=1), 2) == pytest.approx(
        [1.0, 0.75, 0.375], rel=1e-15
    )
    s = Scenario(det2, 0.3, 0.9)
    assert an.expected_front_profile(s, 6) == pytest.approx(0.6 ** np.arange(7), rel=1e-14)


def test_front_profile_monte_carlo(det2):
    s = Scenario(det2, 0.3, 0.5, source_depth=2)
    res = cached_run(s, 10**6, profile_max=8)
    exact = an.expected_front_profile(s, 8)
    for n, est in enumerate(res.profile_means):
        assert abs(est.mean - exact[n]) <= 4 * est.stderr + 1e-12


def test_second_moment_monte_carlo(det2):
    s = Scenario(det2, 0.3, 0.5, source_depth=2)
    res = cached_run(s, 10**6, profile_max=8)
    assert abs(res.s_mean.mean - an.first_moment(s)) <= 4 * res.s_mean.stderr
    assert abs(res.s2_mean.mean - an.second_moment_infinite(s)) <= 4 * res.s2_mean.stderr


@pytest.mark.parametrize("dist", DISTS[1:4], ids=lambda d: d.descriptor)
def test_first_moment_monotone(dist):
    ps = np.linspace(0.1, 0.9, 5)
    qs = np.linspace(0.1, 0.9, 5)
    radii = [3, 4, 6, 9, 14]
    r = 2
    val = {
        (p, q, R): an.first_moment(Scenario(dist, p, q, radius=R, source_depth=r))
        for p, q, R in itertools.product(ps, qs, radii)
    }
    for p, q, R in val:
        i, j, k = list(ps).index(p), list(qs).index(q), radii.index(R)
        if k + 1 < len(radii):
            assert val[p, q, radii[k + 1]] >= val[p, q, R] * (1 - 1e-14)
        if i + 1 < len(ps):
            assert val[ps[i + 1], q, R] > val[p, q, R]
        if j + 1 < len(qs):
            assert val[p, qs[j + 1], R] > val[p, q, R]


@pytest.mark.parametrize("dist", DISTS, ids=lambda d: d.descriptor)
def test_large_radius_limit(dist):
    p, q, r, R = 0.7 / dist.mu, 0.6, 3, 50
    nu = dist.mu * p
    finite = an.first_moment(Scenario(dist, p, q, radius=R, source_depth=r))
    infinite = an.first_moment(Scenario(dist, p, q, source_depth=r))
    assert infinite >= finite
    assert infinite - finite <= 2 * nu ** (R - r + 1) / ((1 - nu) * (1 - nu * q))


@settings(max_examples=300, deadline=None)
@given(x=st.floats(0.0, 3.0), m=st.integers(0, 40))
def test_geom_sum(x, m):
    assert an.geom_sum(x, m) == pytest.approx(math.fsum(x**k for k in range(m)), rel=1e-10, abs=1e-300)


def test_exact_report_fields(geom_half):
    s = Scenario(geom_half, 0.4, 0.5, source_depth=2)
    rep = an.exact_report(s)
    assert rep.first_moment == an.first_moment(s)
    assert rep.variance == pytest.approx(rep.second_moment - rep.first_moment**2)
    assert rep.to_dict()["scenario"]["radius"] == "inf"
    finite = an.exact_report(s.replace(radius=10))
    assert finite.second_moment is None
