"""Offspring laws on {1, 2, ...} and their samplers.

Four kinds are supported, all with ``P(Y = 0) = 0``:

* ``det:<k>``      point mass at ``k >= 1``
* ``geom:<a>``     ``P(Y = k) = a (1 - a)**(k - 1)``, ``k >= 1``
* ``pois1:<lam>``  ``1 + Poisson(lam)``
* ``table:<src>``  explicit finite pmf; ``<src>`` is a CSV path with header
  ``k,prob`` or an inline list ``1=0.5,3=0.5``
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Mapping

import numba as nb
import numpy as np
from scipy import stats

from gwperc.errors import InvalidParameter, InvalidPmf
from gwperc.streams import Stream, _uniform

KIND_DET = 0
KIND_GEOM = 1
KIND_TABLE = 2  # also used for pois1, sampled from its truncated cdf

PMF_TOL = 1e-9
POISSON_TAIL = 1e-15


@dataclass(frozen=True, eq=False)
class OffspringDistribution:
    """Offspring law with exact mean ``mu`` and variance ``sigma2``.

    Instances are immutable; build them with the ``deterministic``,
    ``shifted_geometric``, ``shifted_poisson`` and ``table`` constructors or
    from a descriptor string with :func:`make_distribution`.
    """

    kind: str
    param: float
    mu: float
    sigma2: float
    descriptor: str
    pmf: np.ndarray = field(repr=False)  # pmf[j] = P(Y = j + 1); empty for geom
    _code: int = field(repr=False, default=KIND_TABLE)
    _cdf: np.ndarray = field(repr=False, default=None)

    @classmethod
    def deterministic(cls, k: int) -> "OffspringDistribution":
        if isinstance(k, bool) or int(k) != k or k < 1:
            raise InvalidParameter(f"deterministic offspring count must be an integer >= 1, got {k!r}")
        k = int(k)
        pmf = np.zeros(k)
        pmf[-1] = 1.0
        return cls("det", float(k), float(k), 0.0, f"det:{k}", pmf, KIND_DET, np.zeros(0))

    @classmethod
    def shifted_geometric(cls, a: float) -> "OffspringDistribution":
        a = float(a)
        if not 0.0 < a < 1.0:
            raise InvalidParameter(f"geometric parameter must lie in (0, 1), got {a!r}")
        return cls("geom", a, 1.0 / a, (1.0 - a) / (a * a), f"geom:{a!r}",
                   np.zeros(0), KIND_GEOM, np.zeros(0))

    @classmethod
    def shifted_poisson(cls, lam: float) -> "OffspringDistribution":
        lam = float(lam)
        if not (lam > 0.0 and math.isfinite(lam)):
            raise InvalidParameter(f"Poisson rate must be positive and finite, got {lam!r}")
        zmax = int(stats.poisson.isf(POISSON_TAIL, lam))
        while stats.poisson.sf(zmax, lam) >= POISSON_TAIL:
            zmax += 1
        pmf = stats.poisson.pmf(np.arange(zmax + 1), lam)
        cdf = np.cumsum(pmf)
        cdf[-1] = 1.0  # residual tail mass goes to the cutoff atom
        return cls("pois1", lam, 1.0 + lam, lam, f"pois1:{lam!r}", pmf, KIND_TABLE, cdf)

    @classmethod
    def table(cls, pmf: Mapping[int, float], source: str | None = None) -> "OffspringDistribution":
        """Explicit pmf ``{k: P(Y = k)}`` on a finite subset of {1, 2, ...}."""
        if not pmf:
            raise InvalidPmf("empty pmf")
        items = {}
        for k, prob in pmf.items():
            if int(k) != k:
                raise InvalidPmf(f"support point {k!r} is not an integer")
            k, prob = int(k), float(prob)
            if not math.isfinite(prob) or prob < 0.0:
                raise InvalidPmf(f"negative or non-finite mass {prob!r} at k={k}")
            if k < 0:
                raise InvalidPmf(f"support point {k} is negative")
            if k == 0 and prob > 0.0:
                raise InvalidPmf("P(Y = 0) must be zero")
            if k in items:
                raise InvalidPmf(f"duplicate support point {k}")
            items[k] = prob
        items.pop(0, None)
        total = math.fsum(items.values())
        if abs(total - 1.0) > PMF_TOL:
            raise InvalidPmf(f"pmf sums to {total!r}, not 1")
        kmax = max(k for k, prob in items.items() if prob > 0.0)
        vec = np.zeros(kmax)
        for k, prob in items.items():
            if k <= kmax:
                vec[k - 1] = prob
        vec /= total
        support = np.arange(1, kmax + 1, dtype=float)
        mu = math.fsum(support * vec)
        sigma2 = math.fsum((support - mu) ** 2 * vec)
        cdf = np.cumsum(vec)
        cdf[-1] = 1.0
        if source is None:
            source = ",".join(f"{k}={float(vec[k - 1])!r}" for k in range(1, kmax + 1) if vec[k - 1] > 0)
        return cls("table", float("nan"), mu, sigma2, f"table:{source}", vec, KIND_TABLE, cdf)

    def kernel_args(self):
        """Arguments consumed by the numba samplers: (code, k, log1m_a, cdf)."""
        log1m_a = math.log1p(-self.param) if self._code == KIND_GEOM else 0.0
        k = int(self.param) if self._code == KIND_DET else 0
        return self._code, k, log1m_a, self._cdf

    def probability(self, k: int) -> float:
        """Exact ``P(Y = k)`` under the declared law."""
        if k < 1:
            return 0.0
        if self.kind == "geom":
            return self.param * (1.0 - self.param) ** (k - 1)
        if self.kind == "pois1":
            return float(stats.poisson.pmf(k - 1, self.param))
        return float(self.pmf[k - 1]) if k <= self.pmf.shape[0] else 0.0

    def __eq__(self, other):
        if not isinstance(other, OffspringDistribution):
            return NotImplemented
        return self.descriptor == other.descriptor

    def __hash__(self):
        return hash(self.descriptor)


def read_table_csv(path: str | os.PathLike) -> dict[int, float]:
    """Read a ``k,prob`` CSV file into a pmf mapping."""
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows or [c.strip() for c in rows[0]] != ["k", "prob"]:
        raise InvalidPmf(f"{path}: expected header 'k,prob'")
    pmf = {}
    try:
        for k, prob in rows[1:]:
            if int(k) in pmf:
                raise InvalidPmf(f"{path}: duplicate support point {k.strip()}")
            pmf[int(k)] = float(prob)
    except ValueError as exc:
        if isinstance(exc, InvalidPmf):
            raise
        raise InvalidPmf(f"{path}: malformed row") from exc
    return pmf


def make_distribution(descriptor: str) -> OffspringDistribution:
    """Parse a descriptor such as ``det:2``, ``geom:0.5``, ``pois1:1.3`` or ``table:pmf.csv``."""
    kind, sep, arg = descriptor.partition(":")
    if not sep or not arg:
        raise InvalidParameter(f"malformed distribution descriptor {descriptor!r}")
    kind = kind.strip().lower()
    try:
        if kind == "det":
            value = float(arg)
            if not value.is_integer():
                raise InvalidParameter(f"det needs an integer, got {arg!r}")
            return OffspringDistribution.deterministic(int(value))
        if kind == "geom":
            return OffspringDistribution.shifted_geometric(float(arg))
        if kind == "pois1":
            return OffspringDistribution.shifted_poisson(float(arg))
    except ValueError as exc:
        if isinstance(exc, InvalidParameter):
            raise
        raise InvalidParameter(f"bad numeric argument in {descriptor!r}") from exc
    if kind == "table":
        if os.path.exists(arg):
            return OffspringDistribution.table(read_table_csv(arg), source=arg)
        if "=" not in arg:
            raise InvalidPmf(f"table file {arg!r} not found")
        pmf = {}
        try:
            for atom in arg.split(","):
                k, prob = atom.split("=")
                pmf[int(k)] = float(prob)
        except ValueError as exc:
            raise InvalidPmf(f"malformed inline table {arg!r}") from exc
        return OffspringDistribution.table(pmf)
    raise InvalidParameter(f"unknown distribution kind {kind!r}")


@nb.njit(nogil=True, cache=True)
def _draw(code, k, log1m_a, cdf, st):
    if code == KIND_DET:
        return k
    u = _uniform(st)
    if code == KIND_GEOM:
        return 1 + np.int64(math.floor(math.log1p(-u) / log1m_a))
    # smallest j with cdf[j] > u, by bisection
    lo = 0
    hi = cdf.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) >> 1
        if cdf[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo + 1


@nb.njit(nogil=True, cache=True)
def _draw_many(code, k, log1m_a, cdf, st, out):
    for i in range(out.shape[0]):
        out[i] = _draw(code, k, log1m_a, cdf, st)


def sample_offspring(dist: OffspringDistribution, rng: Stream, size: int | None = None):
    """Draw one offspring count (or an array of ``size`` counts) from ``dist``."""
    code, k, log1m_a, cdf = dist.kernel_args()
    if size is None:
        return int(_draw(code, k, log1m_a, cdf, rng.state))
    out = np.empty(int(size), dtype=np.int64)
    _draw_many(code, k, log1m_a, cdf, rng.state, out)
    return out
