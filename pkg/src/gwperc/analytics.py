"""Closed-form moments and tail bounds of the cluster size.

Notation: ``nu_plus = mu p`` and ``nu_minus = (mu - 1) p`` are the mean
numbers of wet children of a wet vertex, without and with one designated
child excluded; ``sigma2_plus`` and ``sigma2_minus`` are the matching
variances. ``D`` is the upward reach of the cluster.

Every ratio of the form ``(1 - x**m) / (1 - x)`` goes through
:func:`geom_sum`, which switches to explicit summation when ``x`` is within
``SINGULAR_TOL`` of one, so finite-radius quantities stay defined at the
removable singularities ``mu p = 1``, ``mu p q = 1`` and ``q = mu p``.
Infinite-radius quantities refuse ``mu p >= 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gwperc.errors import (
    InvalidRange,
    InvalidScenario,
    InvalidThreshold,
    NearCritical,
    SupercriticalInfinite,
)
from gwperc.offspring import OffspringDistribution
from gwperc.simulator import Scenario

SINGULAR_TOL = 1e-9
# second-order closed forms divide a vanishing bracket by (1 - x)**2 and lose
# ~eps / (1 - x)**2 relative accuracy; inside this band exact finite sums are used
CANCELLATION_TOL = 1e-2


def geom_sum(x: float, m: int) -> float:
    """``1 + x + ... + x**(m - 1)``; zero for ``m <= 0``."""
    if m <= 0:
        return 0.0
    if x == 1.0:
        return float(m)
    if abs(x - 1.0) < 0.5:
        # x - 1 is exact here, so this keeps full relative precision near 1
        return math.expm1(m * math.log1p(x - 1.0)) / (x - 1.0)
    return (1.0 - x**m) / (1.0 - x)


def _require_subcritical(nu: float) -> None:
    if abs(1.0 - nu) < SINGULAR_TOL:
        raise NearCritical(f"critical regime: mu*p = {nu!r} is within {SINGULAR_TOL:g} of 1")
    if nu > 1.0:
        raise SupercriticalInfinite(
            f"supercritical regime: mu*p = {nu!r} > 1, so cluster moments on the infinite tree are infinite"
        )


def nu_moments(dist: OffspringDistribution, p: float) -> tuple[float, float]:
    """Mean wet-children counts ``(mu p, (mu - 1) p)``."""
    return dist.mu * p, (dist.mu - 1.0) * p


def sigma_moments(dist: OffspringDistribution, p: float) -> tuple[float, float]:
    """Variances of the wet-children counts, by the law of total variance."""
    thinning = p * (1.0 - p)
    spread = p * p * dist.sigma2
    return thinning * dist.mu + spread, thinning * (dist.mu - 1.0) + spread


def reach_pmf(q: float, r: int) -> np.ndarray:
    """``P(D = k)`` for ``k = 0..r``."""
    return np.array([q**k * (1.0 - q) for k in range(r)] + [q**r])


def d_moments(q: float, r: int) -> tuple[float, float]:
    """``(E(D), E(D(D - 1)))`` for the upward reach from depth ``r``."""
    if r == 0:
        return 0.0, 0.0
    if abs(1.0 - q) < CANCELLATION_TOL:
        pmf = reach_pmf(q, r)
        ks = np.arange(r + 1)
        return math.fsum(ks * pmf), math.fsum(ks * (ks - 1) * pmf)
    mean = q * geom_sum(q, r)
    factorial2 = 2.0 * q * q * (1.0 - r * q ** (r - 1) + (r - 1) * q**r) / (1.0 - q) ** 2
    return mean, factorial2


def subtree_moments(depth_to_boundary: int | None, nu_plus: float, sigma2_plus: float) -> tuple[float, float]:
    """First and second moments of the wet subtree hanging from a wet vertex.

    ``depth_to_boundary`` is ``R - j`` for a vertex at depth ``j`` of the tree
    of radius ``R``, or ``None`` on the infinite tree.
    """
    if depth_to_boundary is None:
        _require_subcritical(nu_plus)
        first = 1.0 / (1.0 - nu_plus)
        return first, first * first * (1.0 + sigma2_plus / (1.0 - nu_plus))
    h = int(depth_to_boundary)
    if h < 0:
        raise InvalidRange(f"depth to boundary must be >= 0, got {h}")
    first = geom_sum(nu_plus, h + 1)
    if abs(1.0 - nu_plus) >= CANCELLATION_TOL:
        bracket = geom_sum(nu_plus, 2 * h + 1) - (2 * h + 1) * nu_plus**h
        second = sigma2_plus / (1.0 - nu_plus) ** 2 * bracket + first * first
    else:
        # Var T_h = nu Var T_{h-1} + sigma2 (E T_{h-1})^2, unrolled
        var = math.fsum(nu_plus**i * geom_sum(nu_plus, h - i) ** 2 for i in range(h))
        second = sigma2_plus * var + first * first
    return first, second


def excluded_subtree_moments(
    inner_first: float, inner_second: float, nu_minus: float, sigma2_minus: float
) -> tuple[float, float]:
    """Moments of a wet path vertex's subtree with its path child's subtree removed.

    ``inner_first`` and ``inner_second`` are the subtree moments of one of its
    other children.
    """
    first = 1.0 + nu_minus * inner_first
    second = (
        1.0
        + 2.0 * nu_minus * inner_first
        + nu_minus * inner_second
        + (sigma2_minus + nu_minus**2 - nu_minus) * inner_first**2
    )
    return first, second


def first_moment(scenario: Scenario) -> float:
    """``E_r(S)`` on the tree of radius ``R`` (or the infinite tree when subcritical)."""
    mu, p, q, r = scenario.dist.mu, scenario.p, scenario.q, scenario.source_depth
    nu = mu * p
    up = q * geom_sum(q, r) * (1.0 - p)
    if scenario.infinite:
        _require_subcritical(nu)
        return (1.0 + up) / (1.0 - nu)
    R = scenario.radius
    if abs(1.0 - nu) < SINGULAR_TOL or abs(1.0 - nu * q) < SINGULAR_TOL:
        return first_moment_direct(scenario)
    boundary = nu ** (R - r + 1) * (1.0 - p * q * (1.0 + (mu - 1.0) * (nu * q) ** r)) / (1.0 - nu * q)
    return (1.0 + up - boundary) / (1.0 - nu)


def first_moment_symmetric(scenario: Scenario) -> float:
    """``E_r(S)`` on the tree of radius ``R`` in the symmetric case ``p = q``."""
    if scenario.p != scenario.q:
        raise InvalidScenario(f"symmetric formula needs p == q, got p={scenario.p!r}, q={scenario.q!r}")
    if scenario.infinite:
        raise InvalidScenario("symmetric formula is stated for a finite radius")
    mu, p, r, R = scenario.dist.mu, scenario.p, scenario.source_depth, scenario.radius
    nu = mu * p
    if abs(1.0 - nu) < SINGULAR_TOL or abs(1.0 - nu * p) < SINGULAR_TOL:
        return first_moment_direct(scenario)
    boundary = nu ** (R - r + 1) * (1.0 - p * p * (1.0 + (mu - 1.0) * (mu * p * p) ** r)) / (1.0 - mu * p * p)
    return (1.0 + p * (1.0 - p**r) - boundary) / (1.0 - nu)


def _boundary_depth(scenario: Scenario, depth: int) -> int | None:
    return None if scenario.infinite else scenario.radius - depth


def first_moment_direct(scenario: Scenario) -> float:
    """``E_r(S)`` by conditioning on ``D`` and summing subtree means explicitly."""
    nu_p, nu_m = nu_moments(scenario.dist, scenario.p)
    s2_p, _ = sigma_moments(scenario.dist, scenario.p)
    r = scenario.source_depth
    pmf = reach_pmf(scenario.q, r)
    mean_d, _ = d_moments(scenario.q, r)
    own, _ = subtree_moments(_boundary_depth(scenario, r), nu_p, s2_p)
    ancestors = [subtree_moments(_boundary_depth(scenario, r - i), nu_p, s2_p)[0] for i in range(r)]
    acc = math.fsum(
        math.fsum(ancestors[i] for i in range(k)) * pmf[k] for k in range(1, r + 1)
    )
    return own + mean_d + nu_m * acc


def second_moment_infinite(scenario: Scenario) -> float:
    """``E_r(S^2)`` on the infinite tree, ``mu p < 1``."""
    if not scenario.infinite:
        raise InvalidScenario("the second-moment closed form holds on the infinite tree only")
    dist, p = scenario.dist, scenario.p
    mu, sigma2 = dist.mu, dist.sigma2
    nu, _ = nu_moments(dist, p)
    _require_subcritical(nu)
    mean_d, fact2_d = d_moments(scenario.q, scenario.source_depth)
    gap = 1.0 - mu * p
    var_plus = p * (1.0 - p) * mu + p * p * sigma2
    own = (1.0 + var_plus / gap) / gap**2
    linear = (
        1.0
        + 2.0 * (1.0 + (mu - 1.0) * p) / gap
        + (2.0 * (mu - 1.0) * p + p * (1.0 - p) * (mu - 1.0) + p * p * sigma2 + (mu - 1.0) ** 2 * p * p) / gap**2
        + var_plus * (mu - 1.0) * p / gap**3
    )
    pairs = (1.0 + (mu - 1.0) * p / gap) ** 2
    return own + linear * mean_d + pairs * fact2_d


def second_moment_direct(scenario: Scenario) -> float:
    """``E_r(S^2)`` by conditioning on ``D`` and combining independent subtree moments.

    Works on truncated trees as well as the infinite one.
    """
    nu_p, nu_m = nu_moments(scenario.dist, scenario.p)
    s2_p, s2_m = sigma_moments(scenario.dist, scenario.p)
    r = scenario.source_depth
    pmf = reach_pmf(scenario.q, r)
    a1, a2 = subtree_moments(_boundary_depth(scenario, r), nu_p, s2_p)
    excluded = []
    for i in range(1, r + 1):
        inner = subtree_moments(_boundary_depth(scenario, r - i + 1), nu_p, s2_p)
        excluded.append(excluded_subtree_moments(*inner, nu_m, s2_m))
    total = []
    for k in range(r + 1):
        b1 = [excluded[i][0] for i in range(k)]
        b2 = [excluded[i][1] for i in range(k)]
        s1 = math.fsum(b1)
        cross = s1 * s1 - math.fsum(x * x for x in b1)
        total.append((a2 + 2.0 * a1 * s1 + math.fsum(b2) + cross) * pmf[k])
    return math.fsum(total)


def chebyshev_tail_bound(scenario: Scenario, n: float) -> float:
    """Upper bound ``E(S^2) / (n - E(S))^2`` on ``P(S > n)``, for ``n > E(S)``."""
    mean = first_moment(scenario)
    second = second_moment_infinite(scenario)
    if n <= mean:
        raise InvalidThreshold(f"threshold {n!r} must exceed E(S) = {mean!r}")
    return second / (n - mean) ** 2


def diameter_tail_bound(scenario: Scenario, n: int) -> float:
    """Upper bound on ``P(diam >= 2n)`` for ``n > r``, ``mu p < 1``."""
    r = scenario.source_depth
    if n <= r:
        raise InvalidRange(f"the diameter bound needs n > r = {r}, got n = {n}")
    nu = scenario.mu_p
    if nu >= 1.0:
        raise SupercriticalInfinite(f"supercritical regime: mu*p = {nu!r} >= 1, no exponential decay")
    return geom_sum(scenario.q / nu, r + 1) * nu**n


def expected_front_profile(scenario: Scenario, n_max: int) -> np.ndarray:
    """Expected number of wet vertices at each distance ``0..n_max`` below the highest wet vertex."""
    nu = scenario.mu_p
    p, q, r = scenario.p, scenario.q, scenario.source_depth
    out = np.empty(n_max + 1)
    out[0] = 1.0
    for n in range(n_max):
        out[n + 1] = nu * out[n] + ((1.0 - p) * q ** (n + 1) if n < r else 0.0)
    return out


@dataclass(frozen=True)
class ExactReport:
    """All closed-form quantities available for one scenario."""

    scenario: Scenario
    first_moment: float
    second_moment: float | None
    variance: float | None
    nu_plus: float
    nu_minus: float
    sigma2_plus: float
    sigma2_minus: float
    d_mean: float
    d_factorial2: float
    d_pmf: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "mu": self.scenario.dist.mu,
            "sigma2": self.scenario.dist.sigma2,
            "first_moment": self.first_moment,
            "second_moment": self.second_moment,
            "variance": self.variance,
            "nu_plus": self.nu_plus,
            "nu_minus": self.nu_minus,
            "sigma2_plus": self.sigma2_plus,
            "sigma2_minus": self.sigma2_minus,
            "d_mean": self.d_mean,
            "d_factorial2": self.d_factorial2,
            "d_pmf": list(self.d_pmf),
        }


def exact_report(scenario: Scenario) -> ExactReport:
    """Evaluate every closed form that applies to ``scenario``.

    Raises :class:`SupercriticalInfinite` or :class:`NearCritical` when the
    first moment itself is not finite.
    """
    first = first_moment(scenario)
    second = variance = None
    if scenario.infinite:
        second = second_moment_infinite(scenario)
        variance = second - first * first
    nu_p, nu_m = nu_moments(scenario.dist, scenario.p)
    s2_p, s2_m = sigma_moments(scenario.dist, scenario.p)
    mean_d, fact2_d = d_moments(scenario.q, scenario.source_depth)
    return ExactReport(
        scenario=scenario,
        first_moment=first,
        second_moment=second,
        variance=variance,
        nu_plus=nu_p,
        nu_minus=nu_m,
        sigma2_plus=s2_p,
        sigma2_minus=s2_m,
        d_mean=mean_d,
        d_factorial2=fact2_d,
        d_pmf=tuple(float(x) for x in reach_pmf(scenario.q, scenario.source_depth)),
    )
