"""Exact sampling of one bidirectional percolation cluster.

The Galton-Watson tree is never built beyond the wet frontier. A draw proceeds
as follows:

1. The upward reach ``D`` is the number of consecutive open up-arrows on the
   path from the source towards the root (at most ``r`` of them).
2. Each wet ancestor strictly above the source draws its offspring count ``Y``;
   its first child is the next vertex on the path (already wet) and each of the
   other ``Y - 1`` children is wet with probability ``p``.
3. Every other wet vertex draws ``Y`` and opens each down-arrow with
   probability ``p``; vertices at depth ``R`` have no children.

Exploration is breadth first from the highest wet vertex, children in draw
order, so a draw is a pure function of the scenario and the stream state.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numba as nb
import numpy as np

from gwperc.errors import EmptyCluster, InvalidScenario
from gwperc.offspring import OffspringDistribution, _draw, make_distribution
from gwperc.streams import Stream, _uniform

DEFAULT_VERTEX_CAP = 10**6
_NO_CAP = np.iinfo(np.int64).max


@dataclass(frozen=True)
class Scenario:
    """Model parameters for one experiment.

    ``radius=None`` is the infinite tree. ``vertex_cap`` only affects
    simulation: exploration stops (and the draw is flagged censored) once
    that many wet vertices have been found.
    """

    dist: OffspringDistribution
    p: float
    q: float
    radius: int | None = None
    source_depth: int = 0
    vertex_cap: int | None = DEFAULT_VERTEX_CAP

    def __post_init__(self):
        for name in ("p", "q"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0.0 < value < 1.0:
                raise InvalidScenario(f"{name} must lie strictly inside (0, 1), got {value!r}")
            object.__setattr__(self, name, float(value))
        if not isinstance(self.dist, OffspringDistribution):
            raise InvalidScenario("dist must be an OffspringDistribution")
        r = self.source_depth
        if isinstance(r, bool) or int(r) != r or r < 0:
            raise InvalidScenario(f"source depth must be a nonnegative integer, got {r!r}")
        object.__setattr__(self, "source_depth", int(r))
        if self.radius is not None:
            R = self.radius
            if isinstance(R, bool) or int(R) != R or R < 0:
                raise InvalidScenario(f"radius must be a nonnegative integer or None, got {R!r}")
            object.__setattr__(self, "radius", int(R))
            if self.source_depth > self.radius:
                raise InvalidScenario(f"source depth {self.source_depth} exceeds radius {self.radius}")
        cap = self.vertex_cap
        if cap is not None:
            if isinstance(cap, bool) or int(cap) != cap or cap < 1:
                raise InvalidScenario(f"vertex cap must be a positive integer or None, got {cap!r}")
            object.__setattr__(self, "vertex_cap", int(cap))

    @property
    def infinite(self) -> bool:
        return self.radius is None

    @property
    def mu_p(self) -> float:
        return self.dist.mu * self.p

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "dist": self.dist.descriptor,
            "p": self.p,
            "q": self.q,
            "radius": "inf" if self.radius is None else self.radius,
            "source_depth": self.source_depth,
            "vertex_cap": self.vertex_cap,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Scenario":
        radius = data.get("radius", "inf")
        if isinstance(radius, str):
            radius = None if radius.strip().lower() in ("inf", "infinite", "none") else int(radius)
        return cls(
            dist=make_distribution(data["dist"]),
            p=data["p"],
            q=data["q"],
            radius=radius,
            source_depth=data.get("source_depth", 0),
            vertex_cap=data.get("vertex_cap", DEFAULT_VERTEX_CAP),
        )


@dataclass(frozen=True)
class ClusterObservation:
    """Statistics of one sampled cluster.

    ``profile[n]`` counts wet vertices at distance ``n`` below the highest wet
    vertex. ``parts[0]`` is the size of the source's own subtree and
    ``parts[i]`` the size of the subtree of the ``i``-th wet ancestor with the
    path child's subtree removed. For a censored draw every field describes
    only the explored part of the cluster.
    """

    size: int
    upward_reach: int
    diameter: int
    profile: tuple[int, ...]
    censored: bool
    parts: tuple[int, ...]


# -- diameter -----------------------------------------------------------------

@nb.njit(nogil=True, cache=True)
def _csr_from_parent(parent, n):
    deg = np.zeros(n + 1, dtype=np.int64)
    for v in range(n):
        u = parent[v]
        if u >= 0:
            deg[v + 1] += 1
            deg[u + 1] += 1
    for v in range(n):
        deg[v + 1] += deg[v]
    indptr = deg
    fill = indptr[:n].copy()
    indices = np.empty(indptr[n], dtype=np.int64)
    for v in range(n):
        u = parent[v]
        if u >= 0:
            indices[fill[v]] = u
            fill[v] += 1
            indices[fill[u]] = v
            fill[u] += 1
    return indptr, indices


@nb.njit(nogil=True, cache=True)
def _bfs_farthest(indptr, indices, n, src, dist, queue):
    for v in range(n):
        dist[v] = -1
    dist[src] = 0
    queue[0] = src
    head = 0
    tail = 1
    far = src
    while head < tail:
        v = queue[head]
        head += 1
        if dist[v] > dist[far]:
            far = v
        for e in range(indptr[v], indptr[v + 1]):
            w = indices[e]
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue[tail] = w
                tail += 1
    return far, dist[far], tail


@nb.njit(nogil=True, cache=True)
def _diameter_csr(indptr, indices, n):
    """Two farthest-vertex sweeps; returns (diameter, vertices reached)."""
    dist = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    u, _, seen = _bfs_farthest(indptr, indices, n, 0, dist, queue)
    _, diam, _ = _bfs_farthest(indptr, indices, n, u, dist, queue)
    return diam, seen


def tree_diameter(adjacency: Sequence[Iterable[int]] | Mapping[object, Iterable[object]]) -> int:
    """Diameter of a tree given as adjacency lists.

    ``adjacency`` is either a sequence where entry ``v`` lists the neighbours
    of vertex ``v``, or a mapping from vertex labels to neighbour labels.
    """
    if isinstance(adjacency, Mapping):
        labels = list(adjacency)
        index = {label: i for i, label in enumerate(labels)}
        rows = [[index[w] for w in adjacency[label]] for label in labels]
    else:
        rows = [list(nbrs) for nbrs in adjacency]
    n = len(rows)
    if n == 0:
        raise EmptyCluster("diameter of an empty vertex set")
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(r) for r in rows])
    indices = np.fromiter((w for r in rows for w in r), dtype=np.int64, count=int(indptr[-1]))
    if indices.size and (indices.min() < 0 or indices.max() >= n):
        raise ValueError("adjacency refers to an unknown vertex")
    diam, seen = _diameter_csr(indptr, indices, n)
    if seen != n:
        raise ValueError("adjacency is not connected")
    return int(diam)


# -- cluster sampling ---------------------------------------------------------

@nb.njit(nogil=True, cache=True)
def _grow(a):
    b = np.empty(2 * a.shape[0], dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@nb.njit(nogil=True, cache=True)
def _sample_one(code, k, log1m_a, cdf, p, q, R, r, cap, st):
    reach = 0
    while reach < r and _uniform(st) < q:
        reach += 1
    top_depth = r - reach

    parent = np.empty(64, dtype=np.int64)
    level = np.empty(64, dtype=np.int64)
    comp = np.empty(64, dtype=np.int64)
    on_path = np.empty(64, dtype=np.bool_)
    parent[0] = -1
    level[0] = 0
    comp[0] = reach
    on_path[0] = reach > 0
    n = 1
    head = 0
    censored = False
    while head < n and not censored:
        v = head
        head += 1
        t = level[v]
        path_vertex = on_path[v]
        if not path_vertex and R >= 0 and top_depth + t >= R:
            continue
        y = _draw(code, k, log1m_a, cdf, st)
        for j in range(y):
            path_child = path_vertex and j == 0
            if not path_child and not _uniform(st) < p:
                continue
            if n >= cap:
                censored = True
                break
            if n == parent.shape[0]:
                parent = _grow(parent)
                level = _grow(level)
                comp = _grow(comp)
                on_path = _grow(on_path)
            parent[n] = v
            level[n] = t + 1
            if path_child:
                comp[n] = reach - t - 1
                on_path[n] = t + 1 < reach
            else:
                comp[n] = comp[v]
                on_path[n] = False
            n += 1

    parts = np.zeros(reach + 1, dtype=np.int64)
    for v in range(n):
        parts[comp[v]] += 1
    if not censored and parts.sum() != n:
        raise AssertionError("subtree decomposition does not add up to the cluster size")

    profile = np.zeros(level[n - 1] + 1, dtype=np.int64)
    for v in range(n):
        profile[level[v]] += 1

    indptr, indices = _csr_from_parent(parent[:n], n)
    diam, _ = _diameter_csr(indptr, indices, n)
    return n, reach, diam, censored, profile, parts


def kernel_scenario_args(scenario: Scenario):
    """Flatten a scenario into the positional arguments of :func:`_sample_one`."""
    code, k, log1m_a, cdf = scenario.dist.kernel_args()
    R = -1 if scenario.radius is None else scenario.radius
    cap = _NO_CAP if scenario.vertex_cap is None else scenario.vertex_cap
    return code, k, log1m_a, cdf, scenario.p, scenario.q, R, scenario.source_depth, cap


def check_simulable(scenario: Scenario) -> None:
    if scenario.infinite and scenario.mu_p >= 1.0 and scenario.vertex_cap is None:
        raise InvalidScenario(
            f"mu*p = {scenario.mu_p:g} >= 1 on the infinite tree requires a finite vertex cap"
        )


def sample_cluster(scenario: Scenario, rng: Stream) -> ClusterObservation:
    """Sample one cluster, advancing ``rng``."""
    check_simulable(scenario)
    size, reach, diam, censored, profile, parts = _sample_one(*kernel_scenario_args(scenario), rng.state)
    obs = ClusterObservation(
        size=int(size),
        upward_reach=int(reach),
        diameter=int(diam),
        profile=tuple(int(x) for x in profile),
        censored=bool(censored),
        parts=tuple(int(x) for x in parts),
    )
    if not obs.censored:
        assert obs.size == sum(obs.parts) == sum(obs.profile)
    return obs


__all__ = [
    "DEFAULT_VERTEX_CAP",
    "ClusterObservation",
    "Scenario",
    "sample_cluster",
    "tree_diameter",
]
