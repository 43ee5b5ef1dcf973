"""Replicated simulation, streaming estimators and exact-vs-estimate comparison.

Replicates are processed in fixed blocks of ``BLOCK`` indices. Each block is
reduced to Welford accumulators and integer counts inside a numba kernel; the
blocks are then merged in index order. Replicate ``i`` always uses the stream
``replicate_key(seed, i)``, so every output is independent of ``workers``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy import stats

from gwperc import analytics
from gwperc.errors import GWPercError, ScenarioMismatch
from gwperc.simulator import Scenario, _sample_one, check_simulable, kernel_scenario_args
from gwperc.streams import MIX_FUNCTION_ID, _replicate_key, mix64

BLOCK = 4096
CONFIDENCE = 0.99
Z_CONFIDENCE = float(stats.norm.ppf(0.5 + CONFIDENCE / 2))
CSV_HEADER = ("name", "estimate", "stderr", "exact", "z")

# fixed rows of the per-block Welford table; profile rows follow
_ROW_S, _ROW_S2, _ROW_D, _ROW_D2 = range(4)
_N_FIXED = 4


@dataclass(frozen=True)
class MomentEstimate:
    """Streaming mean with ``m2`` the sum of squared deviations."""

    mean: float = 0.0
    m2: float = 0.0
    count: int = 0

    @classmethod
    def from_values(cls, values) -> "MomentEstimate":
        n, mean, m2 = 0, 0.0, 0.0
        for x in values:
            n += 1
            delta = x - mean
            mean += delta / n
            m2 += delta * (x - mean)
        return cls(mean, m2, n)

    def merge(self, other: "MomentEstimate") -> "MomentEstimate":
        return merge(self, other)

    @property
    def variance(self) -> float:
        """Unbiased sample variance of the observations."""
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 0 else math.inf

    @property
    def ci_halfwidth(self) -> float:
        return Z_CONFIDENCE * self.stderr

    def to_dict(self) -> dict:
        return {"mean": self.mean, "m2": self.m2, "count": self.count,
                "stderr": _finite_or_none(self.stderr), "ci_halfwidth": _finite_or_none(self.ci_halfwidth)}

    @classmethod
    def from_dict(cls, data) -> "MomentEstimate":
        return cls(float(data["mean"]), float(data["m2"]), int(data["count"]))


def merge(a: MomentEstimate, b: MomentEstimate) -> MomentEstimate:
    """Pairwise combination of two estimates (Chan, Golub and LeVeque)."""
    if a.count == 0:
        return b
    if b.count == 0:
        return a
    n = a.count + b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.count / n)
    m2 = a.m2 + b.m2 + delta * delta * (a.count * b.count / n)
    return MomentEstimate(mean, m2, n)


def _finite_or_none(x):
    return x if x is not None and math.isfinite(x) else None


@nb.njit(nogil=True, cache=True)
def _welford(mean, m2, row, n, x):
    delta = x - mean[row]
    mean[row] += delta / n
    m2[row] += delta * (x - mean[row])


@nb.njit(nogil=True, cache=True)
def _simulate_block(code, k, log1m_a, cdf, p, q, R, r, cap, mixed_seed, lo, hi,
                    n_profile, n_diam, n_size):
    rows = 4 + n_profile + 1
    mean = np.zeros(rows)
    m2 = np.zeros(rows)
    d_counts = np.zeros(r + 1, dtype=np.int64)
    diam_ge = np.zeros(n_diam + 1, dtype=np.int64)
    size_gt = np.zeros(n_size + 1, dtype=np.int64)
    st = np.zeros(1, dtype=np.uint64)
    n = 0
    censored = 0
    for i in range(lo, hi):
        st[0] = _replicate_key(mixed_seed, i)
        size, reach, diam, cens, profile, _ = _sample_one(code, k, log1m_a, cdf, p, q, R, r, cap, st)
        if cens:
            censored += 1
            continue
        n += 1
        s = np.float64(size)
        _welford(mean, m2, 0, n, s)
        _welford(mean, m2, 1, n, s * s)
        _welford(mean, m2, 2, n, np.float64(reach))
        _welford(mean, m2, 3, n, np.float64(reach * (reach - 1)))
        for j in range(n_profile + 1):
            x = np.float64(profile[j]) if j < profile.shape[0] else 0.0
            _welford(mean, m2, 4 + j, n, x)
        d_counts[reach] += 1
        for j in range(min(diam // 2, n_diam) + 1):
            diam_ge[j] += 1
        for j in range(min(size - 1, n_size) + 1):
            size_gt[j] += 1
    return n, censored, mean, m2, d_counts, diam_ge, size_gt


@dataclass(frozen=True)
class ExperimentResult:
    """Aggregated output of :func:`run_experiment`.

    ``diam_tail[n]`` is the frequency of ``diam >= 2n`` and ``size_tail[n]``
    the frequency of ``S > n``, both among non-censored replicates.
    """

    scenario: Scenario
    replicates: int
    seed: int
    censored: int
    s_mean: MomentEstimate
    s2_mean: MomentEstimate
    d_mean: MomentEstimate
    d_factorial2: MomentEstimate
    d_pmf: tuple[float, ...]
    diam_tail: dict[int, float]
    size_tail: dict[int, float]
    profile_means: tuple[MomentEstimate, ...]
    mix_function_id: str = MIX_FUNCTION_ID

    @property
    def accepted(self) -> int:
        return self.replicates - self.censored

    @property
    def censor_rate(self) -> float:
        return self.censored / self.replicates

    def tail_stderr(self, freq: float) -> float:
        n = self.accepted
        return math.sqrt(freq * (1.0 - freq) / n) if n > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "replicates": self.replicates,
            "seed": self.seed,
            "mix_function_id": self.mix_function_id,
            "censored": self.censored,
            "censor_rate": self.censor_rate,
            "s_mean": self.s_mean.to_dict(),
            "s2_mean": self.s2_mean.to_dict(),
            "d_mean": self.d_mean.to_dict(),
            "d_factorial2": self.d_factorial2.to_dict(),
            "d_pmf": list(self.d_pmf),
            "diam_tail": {str(n): f for n, f in self.diam_tail.items()},
            "size_tail": {str(n): f for n, f in self.size_tail.items()},
            "profile_means": [m.to_dict() for m in self.profile_means],
        }

    @classmethod
    def from_dict(cls, data) -> "ExperimentResult":
        return cls(
            scenario=Scenario.from_dict(data["scenario"]),
            replicates=int(data["replicates"]),
            seed=int(data["seed"]),
            censored=int(data["censored"]),
            s_mean=MomentEstimate.from_dict(data["s_mean"]),
            s2_mean=MomentEstimate.from_dict(data["s2_mean"]),
            d_mean=MomentEstimate.from_dict(data["d_mean"]),
            d_factorial2=MomentEstimate.from_dict(data["d_factorial2"]),
            d_pmf=tuple(float(x) for x in data["d_pmf"]),
            diam_tail={int(n): float(f) for n, f in data["diam_tail"].items()},
            size_tail={int(n): float(f) for n, f in data["size_tail"].items()},
            profile_means=tuple(MomentEstimate.from_dict(m) for m in data["profile_means"]),
            mix_function_id=data.get("mix_function_id", MIX_FUNCTION_ID),
        )

    def to_json(self, comparison: "Comparison | None" = None) -> str:
        doc = {"result": self.to_dict()}
        if comparison is not None:
            doc["comparison"] = comparison.to_dict()
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def rows(self) -> list[tuple[str, float, float]]:
        """``(name, estimate, stderr)`` for every reported quantity."""
        out = [
            ("S_mean", self.s_mean.mean, self.s_mean.stderr),
            ("S2_mean", self.s2_mean.mean, self.s2_mean.stderr),
            ("D_mean", self.d_mean.mean, self.d_mean.stderr),
            ("D_factorial2", self.d_factorial2.mean, self.d_factorial2.stderr),
        ]
        out += [(f"D_pmf[{k}]", f, self.tail_stderr(f)) for k, f in enumerate(self.d_pmf)]
        out += [(f"X[{n}]", m.mean, m.stderr) for n, m in enumerate(self.profile_means)]
        out += [(f"P(diam>=2n)[{n}]", f, self.tail_stderr(f)) for n, f in self.diam_tail.items()]
        out += [(f"P(S>n)[{n}]", f, self.tail_stderr(f)) for n, f in self.size_tail.items()]
        return out


def run_experiment(
    scenario: Scenario,
    replicates: int,
    seed: int,
    workers: int = 1,
    profile_max: int | None = None,
    diam_n_max: int = 20,
    size_n_max: int = 100,
) -> ExperimentResult:
    """Simulate ``replicates`` independent clusters of ``scenario``.

    ``profile_max`` defaults to ``max(8, r + 6)``.
    """
    check_simulable(scenario)
    if int(replicates) != replicates or replicates < 1:
        raise ValueError(f"replicates must be a positive integer, got {replicates!r}")
    if workers < 1:
        raise ValueError(f"workers must be positive, got {workers!r}")
    r = scenario.source_depth
    if profile_max is None:
        profile_max = max(8, r + 6)
    seed = int(seed) & ((1 << 64) - 1)
    args = kernel_scenario_args(scenario)
    mixed = np.uint64(mix64(seed))
    bounds = [(lo, min(lo + BLOCK, replicates)) for lo in range(0, replicates, BLOCK)]

    def run(bound):
        return _simulate_block(*args, mixed, bound[0], bound[1], profile_max, diam_n_max, size_n_max)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(run, bounds))
    else:
        blocks = [run(b) for b in bounds]

    rows = _N_FIXED + profile_max + 1
    acc = [MomentEstimate()] * rows
    censored = 0
    d_counts = np.zeros(r + 1, dtype=np.int64)
    diam_ge = np.zeros(diam_n_max + 1, dtype=np.int64)
    size_gt = np.zeros(size_n_max + 1, dtype=np.int64)
    for n, cens, mean, m2, dc, dg, sg in blocks:
        censored += int(cens)
        if n:
            acc = [merge(a, MomentEstimate(float(mean[j]), float(m2[j]), int(n))) for j, a in enumerate(acc)]
        d_counts += dc
        diam_ge += dg
        size_gt += sg
    accepted = replicates - censored
    denom = accepted if accepted else 1
    return ExperimentResult(
        scenario=scenario,
        replicates=int(replicates),
        seed=seed,
        censored=censored,
        s_mean=acc[_ROW_S],
        s2_mean=acc[_ROW_S2],
        d_mean=acc[_ROW_D],
        d_factorial2=acc[_ROW_D2],
        d_pmf=tuple(int(c) / denom for c in d_counts),
        diam_tail={n: int(diam_ge[n]) / denom for n in range(1, diam_n_max + 1)},
        size_tail={n: int(size_gt[n]) / denom for n in range(0, size_n_max + 1)},
        profile_means=tuple(acc[_N_FIXED:]),
    )


def exact_or_none(scenario: Scenario) -> analytics.ExactReport | None:
    """Exact report, or ``None`` when the first moment is not finite."""
    try:
        return analytics.exact_report(scenario)
    except GWPercError:
        return None


def z_score(estimate: float, stderr: float, exact: float) -> float:
    if stderr > 0.0 and math.isfinite(stderr):
        return (estimate - exact) / stderr
    if math.isclose(estimate, exact, rel_tol=1e-12, abs_tol=1e-12):
        return 0.0
    return math.copysign(math.inf, estimate - exact)


@dataclass(frozen=True)
class QuantityRow:
    name: str
    estimate: float
    stderr: float
    exact: float | None = None

    @property
    def z(self) -> float | None:
        return None if self.exact is None else z_score(self.estimate, self.stderr, self.exact)


@dataclass(frozen=True)
class TailCheck:
    n: int
    empirical: float
    stderr: float
    bound: float
    margin: float  # multiples of stderr allowed above the bound

    @property
    def satisfied(self) -> bool:
        return self.empirical <= self.bound + self.margin * self.stderr


@dataclass(frozen=True)
class Comparison:
    """Per-quantity z-scores and bound checks for one experiment."""

    rows: tuple[QuantityRow, ...]
    diameter_checks: tuple[TailCheck, ...]
    chebyshev_checks: tuple[TailCheck, ...]
    d_chi2: float
    d_chi2_df: int
    d_chi2_pvalue: float
    censor_rate: float
    extra: dict = field(default_factory=dict)

    def moment_rows(self) -> list[QuantityRow]:
        return [row for row in self.rows if row.exact is not None]

    @property
    def max_abs_z(self) -> float:
        zs = [abs(row.z) for row in self.moment_rows()]
        return max(zs) if zs else 0.0

    def passed(self, z_limit: float = 4.0) -> bool:
        return (
            self.max_abs_z <= z_limit
            and all(c.satisfied for c in self.diameter_checks)
            and all(c.satisfied for c in self.chebyshev_checks)
        )

    def to_dict(self) -> dict:
        return {
            "rows": [
                {"name": r.name, "estimate": r.estimate, "stderr": _finite_or_none(r.stderr),
                 "exact": r.exact, "z": _finite_or_none(r.z)}
                for r in self.rows
            ],
            "diameter_checks": [_check_dict(c) for c in self.diameter_checks],
            "chebyshev_checks": [_check_dict(c) for c in self.chebyshev_checks],
            "d_chi2": self.d_chi2,
            "d_chi2_df": self.d_chi2_df,
            "d_chi2_pvalue": self.d_chi2_pvalue,
            "censor_rate": self.censor_rate,
            "max_abs_z": _finite_or_none(self.max_abs_z),
            "passed": self.passed(),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in self.rows:
            z = row.z
            writer.writerow([
                row.name,
                repr(row.estimate),
                repr(row.stderr),
                "" if row.exact is None else repr(row.exact),
                "" if z is None else repr(z),
            ])
        return buf.getvalue()


def _check_dict(c: TailCheck) -> dict:
    return {"n": c.n, "empirical": c.empirical, "stderr": c.stderr, "bound": c.bound,
            "margin": c.margin, "satisfied": c.satisfied}


def compare(exact: analytics.ExactReport | None, result: ExperimentResult) -> Comparison:
    """Match every estimate in ``result`` with its closed form, where one exists.

    ``exact=None`` produces estimate-only rows and no bound checks.
    """
    scenario = result.scenario
    if exact is not None and exact.scenario != scenario:
        raise ScenarioMismatch("exact report and experiment result use different scenarios")
    r = scenario.source_depth
    names = {}
    if exact is not None:
        names = {"S_mean": exact.first_moment, "D_mean": exact.d_mean, "D_factorial2": exact.d_factorial2}
        if exact.second_moment is not None:
            names["S2_mean"] = exact.second_moment
        for k_, prob in enumerate(exact.d_pmf):
            names[f"D_pmf[{k_}]"] = prob
        depth_ok = len(result.profile_means) - 1
        if not scenario.infinite:
            depth_ok = min(depth_ok, scenario.radius - r)
        if depth_ok >= 0:
            profile = analytics.expected_front_profile(scenario, depth_ok)
            for n in range(depth_ok + 1):
                names[f"X[{n}]"] = float(profile[n])
    rows = tuple(QuantityRow(name, est, se, names.get(name)) for name, est, se in result.rows())

    diameter_checks = []
    chebyshev_checks = []
    if exact is not None and scenario.mu_p < 1.0:
        for n, freq in result.diam_tail.items():
            if n > r:
                bound = analytics.diameter_tail_bound(scenario, n)
                diameter_checks.append(TailCheck(n, freq, result.tail_stderr(freq), bound, 3.0))
        if exact.second_moment is not None:
            for n, freq in result.size_tail.items():
                if n > exact.first_moment:
                    bound = analytics.chebyshev_tail_bound(scenario, n)
                    chebyshev_checks.append(TailCheck(n, freq, result.tail_stderr(freq), bound, 0.0))

    expected = np.asarray(analytics.reach_pmf(scenario.q, r)) * result.accepted
    observed = np.asarray(result.d_pmf) * result.accepted
    mask = expected > 0
    chi2 = float(np.sum((observed[mask] - expected[mask]) ** 2 / expected[mask]))
    df = max(int(mask.sum()) - 1, 0)
    pvalue = float(stats.chi2.sf(chi2, df)) if df > 0 else 1.0
    return Comparison(
        rows=rows,
        diameter_checks=tuple(diameter_checks),
        chebyshev_checks=tuple(chebyshev_checks),
        d_chi2=chi2,
        d_chi2_df=df,
        d_chi2_pvalue=pvalue,
        censor_rate=result.censor_rate,
    )


@dataclass(frozen=True)
class DecayRow:
    n: int
    diam_tail: float
    diam_tail_stderr: float
    diam_bound: float
    size_tail: float | None
    size_bound: float | None


def decay_table(result: ExperimentResult, n_grid) -> list[DecayRow]:
    """Empirical tails against the diameter and Chebyshev bounds; rows with ``n <= r`` are dropped."""
    scenario = result.scenario
    r = scenario.source_depth
    mean = second = None
    if scenario.infinite and scenario.mu_p < 1.0:
        mean = analytics.first_moment(scenario)
        second = analytics.second_moment_infinite(scenario)
    out = []
    for n in sorted(set(int(n) for n in n_grid)):
        if n <= r:
            continue
        if n not in result.diam_tail:
            raise ValueError(f"n={n} beyond the simulated diameter grid")
        freq = result.diam_tail[n]
        size_tail = size_bound = None
        if n in result.size_tail:
            size_tail = result.size_tail[n]
        if mean is not None and n > mean:
            size_bound = second / (n - mean) ** 2
        out.append(DecayRow(n, freq, result.tail_stderr(freq),
                            analytics.diameter_tail_bound(scenario, n), size_tail, size_bound))
    return out


def decay_csv(rows: list[DecayRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "diam_tail", "diam_tail_stderr", "diam_bound", "size_tail", "size_bound"])
    for row in rows:
        writer.writerow([
            row.n, repr(row.diam_tail), repr(row.diam_tail_stderr), repr(row.diam_bound),
            "" if row.size_tail is None else repr(row.size_tail),
            "" if row.size_bound is None else repr(row.size_bound),
        ])
    return buf.getvalue()
