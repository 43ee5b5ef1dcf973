import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwperc.errors import InvalidParameter, InvalidPmf
from gwperc.offspring import OffspringDistribution, make_distribution, read_table_csv, sample_offspring
from gwperc.streams import Stream

N_DRAWS = 10**6


def test_trivial_moments():
    d = OffspringDistribution.deterministic(2)
    assert (d.mu, d.sigma2) == (2.0, 0.0)
    g = OffspringDistribution.shifted_geometric(0.5)
    assert (g.mu, g.sigma2) == (2.0, 2.0)
    t = OffspringDistribution.table({1: 0.5, 3: 0.5})
    assert (t.mu, t.sigma2) == (2.0, 1.0)
    p = OffspringDistribution.shifted_poisson(1.3)
    assert p.mu == pytest.approx(2.3, abs=1e-15) and p.sigma2 == 1.3


@pytest.mark.parametrize(
    "pmf",
    [{0: 0.1, 1: 0.9}, {1: -0.1, 2: 1.1}, {1: 0.5, 2: 0.4}, {1: 0.5, 2: 0.5 + 1e-6}, {}],
)
def test_invalid_tables(pmf):
    with pytest.raises(InvalidPmf):
        OffspringDistribution.table(pmf)


def test_zero_mass_at_zero_is_allowed():
    assert OffspringDistribution.table({0: 0.0, 2: 1.0}).mu == 2.0


@pytest.mark.parametrize(
    "ctor,arg",
    [
        (OffspringDistribution.deterministic, 0),
        (OffspringDistribution.deterministic, 1.5),
        (OffspringDistribution.shifted_geometric, 0.0),
        (OffspringDistribution.shifted_geometric, 1.0),
        (OffspringDistribution.shifted_poisson, 0.0),
        (OffspringDistribution.shifted_poisson, -1.0),
    ],
)
def test_invalid_parameters(ctor, arg):
    with pytest.raises(InvalidParameter):
        ctor(arg)


def test_descriptor_parsing(tmp_path):
    assert make_distribution("det:3") == OffspringDistribution.deterministic(3)
    assert make_distribution("geom:0.25").mu == 4.0
    assert make_distribution("pois1:0.7").mu == pytest.approx(1.7)
    inline = make_distribution("table:1=0.5,3=0.5")
    assert (inline.mu, inline.sigma2) == (2.0, 1.0)
    path = tmp_path / "pmf.csv"
    path.write_text("k,prob\n1,0.25\n2,0.75\n")
    assert read_table_csv(path) == {1: 0.25, 2: 0.75}
    from_file = make_distribution(f"table:{path}")
    assert from_file.mu == 1.75
    assert from_file.descriptor == f"table:{path}"
    for bad in ("det", "det:x", "foo:1", "det:2.5"):
        with pytest.raises(InvalidParameter):
            make_distribution(bad)
    with pytest.raises(InvalidPmf):
        make_distribution(f"table:{tmp_path / 'missing.csv'}")


def test_table_csv_header_required(tmp_path):
    path = tmp_path / "pmf.csv"
    path.write_text("1,1.0\n")
    with pytest.raises(InvalidPmf):
        read_table_csv(path)


def test_descriptor_round_trip():
    for desc in ("det:2", "geom:0.5", "pois1:1.5", "table:1=0.2,4=0.8"):
        d = make_distribution(desc)
        assert make_distribution(d.descriptor) == d
        assert make_distribution(d.descriptor).mu == d.mu


def test_poisson_truncation_keeps_exact_moments():
    d = OffspringDistribution.shifted_poisson(2.5)
    k = np.arange(1, d.pmf.size + 1)
    assert math.fsum(d.pmf) == pytest.approx(1.0, abs=1e-14)
    assert math.fsum(k * d.pmf) == pytest.approx(d.mu, rel=1e-12)
    assert math.fsum((k - d.mu) ** 2 * d.pmf) == pytest.approx(d.sigma2, rel=1e-10)


def test_degenerate_samplers():
    assert np.all(sample_offspring(OffspringDistribution.deterministic(3), Stream(1), 1000) == 3)
    assert np.all(sample_offspring(OffspringDistribution.table({1: 1.0}), Stream(1), 1000) == 1)
    assert sample_offspring(OffspringDistribution.deterministic(4), Stream(1)) == 4


@pytest.mark.parametrize(
    "dist",
    [
        OffspringDistribution.deterministic(2),
        OffspringDistribution.shifted_geometric(0.5),
        OffspringDistribution.shifted_geometric(0.3),
        OffspringDistribution.shifted_poisson(1.0),
        OffspringDistribution.table({1: 0.5, 3: 0.5}),
        OffspringDistribution.table({1: 0.1, 2: 0.2, 5: 0.7}),
    ],
    ids=lambda d: d.descriptor,
)
def test_sample_moments_within_five_se(dist):
    y = sample_offspring(dist, Stream(2024), N_DRAWS).astype(float)
    assert y.min() >= 1
    n = y.size
    mean = y.mean()
    assert abs(mean - dist.mu) <= 5 * math.sqrt(dist.sigma2 / n) + 1e-12
    if dist.sigma2 > 0:
        var = y.var(ddof=1)
        m4 = np.mean((y - mean) ** 4)
        se_var = math.sqrt((m4 - var**2) / n)
        assert abs(var - dist.sigma2) <= 5 * se_var


@pytest.mark.parametrize(
    "dist",
    [OffspringDistribution.table({1: 0.1, 2: 0.2, 5: 0.7}), OffspringDistribution.shifted_geometric(0.4)],
    ids=lambda d: d.descriptor,
)
def test_sample_pmf_per_atom(dist):
    y = sample_offspring(dist, Stream(77), N_DRAWS)
    counts = np.bincount(y)
    for k in range(1, 8):
        prob = dist.probability(k)
        freq = counts[k] / y.size if k < counts.size else 0.0
        assert abs(freq - prob) <= 5 * math.sqrt(prob * (1 - prob) / y.size) + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.integers(1, 12), st.floats(0.01, 1.0), min_size=1, max_size=6))
def test_table_moments_match_direct_sums(weights):
    total = sum(weights.values())
    pmf = {k: w / total for k, w in weights.items()}
    d = OffspringDistribution.table(pmf)
    mu = sum(k * p for k, p in pmf.items())
    var = sum((k - mu) ** 2 * p for k, p in pmf.items())
    assert d.mu == pytest.approx(mu, rel=1e-12)
    assert d.sigma2 == pytest.approx(var, rel=1e-9, abs=1e-12)
    draws = sample_offspring(d, Stream(3), 200)
    assert set(draws.tolist()) <= set(pmf)
