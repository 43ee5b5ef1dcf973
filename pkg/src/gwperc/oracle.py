"""Exact cluster statistics on a small explicit tree by enumerating arrow states.

Vertex 0 is the root and edge ``i`` joins vertex ``i + 1`` to its parent. A
configuration is a ``2m``-bit integer: bit ``i`` opens the down-arrow of edge
``i`` (probability ``p``), bit ``m + i`` its up-arrow (probability ``q``).
Configurations are summed in fixed blocks of ``BLOCK`` indices whose partial
sums are merged in block order, so the result does not depend on how many
threads share the work.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba as nb
import numpy as np

from gwperc.errors import BudgetExceeded, InvalidScenario
from gwperc.simulator import _csr_from_parent, _diameter_csr

MAX_EDGES = 13
BLOCK = 1 << 12


@dataclass(frozen=True, eq=False)
class ExplicitTree:
    """A rooted tree on vertices ``0..m`` with ``parent[0] == -1``."""

    parent: np.ndarray
    depth: np.ndarray

    @property
    def edge_count(self) -> int:
        return int(self.parent.shape[0]) - 1

    @property
    def size(self) -> int:
        return int(self.parent.shape[0])

    @classmethod
    def from_parents(cls, parents) -> "ExplicitTree":
        """Build from ``parents[v]`` for ``v = 0..m`` (``parents[0]`` must be -1 or None)."""
        parent = np.array([-1 if x is None else int(x) for x in parents], dtype=np.int64)
        n = parent.shape[0]
        if n == 0 or parent[0] != -1:
            raise ValueError("vertex 0 must be the root")
        if n - 1 > MAX_EDGES:
            raise BudgetExceeded(f"{n - 1} edges exceed the enumeration budget of {MAX_EDGES}")
        if n > 1 and (parent[1:].min() < 0 or parent[1:].max() >= n):
            raise ValueError("parent index out of range")
        depth = np.full(n, -1, dtype=np.int64)
        depth[0] = 0
        for v in range(1, n):
            chain = []
            u = v
            while depth[u] < 0:
                chain.append(u)
                u = parent[u]
                if len(chain) > n:
                    raise ValueError("parent array contains a cycle")
            for w in reversed(chain):
                depth[w] = depth[parent[w]] + 1
        return cls(parent, depth)

    def children(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR child lists ``(ptr, idx)``, children in increasing order."""
        n = self.size
        counts = np.bincount(self.parent[1:], minlength=n) if n > 1 else np.zeros(1, dtype=np.int64)
        ptr = np.zeros(n + 1, dtype=np.int64)
        ptr[1:] = np.cumsum(counts)
        idx = np.argsort(self.parent[1:], kind="stable").astype(np.int64) + 1
        return ptr, idx

    def vertices_at_depth(self, d: int) -> list[int]:
        return [int(v) for v in np.flatnonzero(self.depth == d)]

    def without_subtree(self, v: int) -> "ExplicitTree":
        """Copy of the tree with vertex ``v`` and its descendants removed, relabelled in order."""
        if v == 0:
            raise ValueError("cannot remove the root")
        keep = [w for w in range(self.size) if not self._ancestor_in(w, v)]
        label = {w: i for i, w in enumerate(keep)}
        return ExplicitTree.from_parents([-1] + [label[int(self.parent[w])] for w in keep[1:]])

    def _ancestor_in(self, w: int, v: int) -> bool:
        while w >= 0:
            if w == v:
                return True
            w = int(self.parent[w])
        return False

    def to_edge_list(self) -> str:
        return "".join(f"{v} {int(self.parent[v])}\n" for v in range(1, self.size))


def build_deterministic_tree(k: int, R: int) -> ExplicitTree:
    """Complete ``k``-ary tree of depth ``R``, vertices in breadth-first order."""
    if k < 1 or R < 0:
        raise ValueError(f"need k >= 1 and R >= 0, got k={k}, R={R}")
    edges = sum(k**d for d in range(1, R + 1))
    if edges > MAX_EDGES:
        raise BudgetExceeded(f"complete {k}-ary tree of depth {R} has {edges} edges, over the enumeration budget of {MAX_EDGES}")
    parents = [-1]
    frontier = [0]
    for _ in range(R):
        nxt = []
        for v in frontier:
            for _ in range(k):
                parents.append(v)
                nxt.append(len(parents) - 1)
        frontier = nxt
    return ExplicitTree.from_parents(parents)


def read_edge_list(path: str | os.PathLike) -> ExplicitTree:
    """Read ``child parent`` lines (root 0 implicit, ``#`` comments allowed)."""
    pairs = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                child, par = (int(tok) for tok in line.split())
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: expected 'child parent'") from exc
            if child in pairs or child == 0:
                raise ValueError(f"{path}:{lineno}: vertex {child} listed twice or is the root")
            pairs[child] = par
    m = len(pairs)
    if sorted(pairs) != list(range(1, m + 1)):
        raise ValueError(f"{path}: children must be exactly 1..{m}")
    return ExplicitTree.from_parents([-1] + [pairs[v] for v in range(1, m + 1)])


def parse_tree(descriptor: str) -> ExplicitTree:
    """``det:<k>:<R>`` for a complete k-ary tree, otherwise an edge-list path."""
    if descriptor.startswith("det:"):
        try:
            _, k, R = descriptor.split(":")
            return build_deterministic_tree(int(k), int(R))
        except ValueError as exc:
            if isinstance(exc, BudgetExceeded):
                raise
            raise ValueError(f"malformed tree descriptor {descriptor!r}") from exc
    return read_edge_list(descriptor)


@nb.njit(nogil=True, cache=True)
def _wet_mask(config, m, parent, child_ptr, child_idx, source, wet, stack):
    for v in range(m + 1):
        wet[v] = False
    wet[source] = True
    stack[0] = source
    top = 1
    count = 1
    while top > 0:
        top -= 1
        v = stack[top]
        for e in range(child_ptr[v], child_ptr[v + 1]):
            c = child_idx[e]
            if not wet[c] and (config >> (c - 1)) & 1:
                wet[c] = True
                stack[top] = c
                top += 1
                count += 1
        u = parent[v]
        if u >= 0 and not wet[u] and (config >> (m + v - 1)) & 1:
            wet[u] = True
            stack[top] = u
            top += 1
            count += 1
    return count


@nb.njit(nogil=True, cache=True)
def _enumerate_block(lo, hi, m, parent, depth, child_ptr, child_idx, source, p, q):
    n = m + 1
    total = 0.0
    es = 0.0
    es2 = 0.0
    ed = 0.0
    pmf_s = np.zeros(n + 1)
    pmf_d = np.zeros(depth[source] + 1)
    pmf_diam = np.zeros(n)
    wet = np.empty(n, dtype=np.bool_)
    stack = np.empty(n, dtype=np.int64)
    label = np.empty(n, dtype=np.int64)
    local_parent = np.empty(n, dtype=np.int64)
    for config in range(lo, hi):
        prob = 1.0
        for i in range(m):
            prob *= p if (config >> i) & 1 else 1.0 - p
        for i in range(m):
            prob *= q if (config >> (m + i)) & 1 else 1.0 - q
        s = _wet_mask(config, m, parent, child_ptr, child_idx, source, wet, stack)
        top_depth = depth[source]
        j = 0
        for v in range(n):
            if wet[v]:
                label[v] = j
                j += 1
                if depth[v] < top_depth:
                    top_depth = depth[v]
        for v in range(n):
            if wet[v]:
                u = parent[v]
                local_parent[label[v]] = label[u] if u >= 0 and wet[u] else -1
        indptr, indices = _csr_from_parent(local_parent[:s], s)
        diam, _ = _diameter_csr(indptr, indices, s)
        reach = depth[source] - top_depth
        total += prob
        es += prob * s
        es2 += prob * s * s
        ed += prob * reach
        pmf_s[s] += prob
        pmf_d[reach] += prob
        pmf_diam[diam] += prob
    return total, es, es2, ed, pmf_s, pmf_d, pmf_diam


@dataclass(frozen=True)
class ExactStatistics:
    """Exact expectations of cluster statistics on an explicit tree."""

    mean_size: float
    second_moment_size: float
    mean_reach: float
    size_pmf: tuple[float, ...]
    reach_pmf: tuple[float, ...]
    diameter_pmf: tuple[float, ...]
    total_probability: float

    def to_dict(self) -> dict:
        return {
            "mean_size": self.mean_size,
            "second_moment_size": self.second_moment_size,
            "mean_reach": self.mean_reach,
            "size_pmf": list(self.size_pmf),
            "reach_pmf": list(self.reach_pmf),
            "diameter_pmf": list(self.diameter_pmf),
            "total_probability": self.total_probability,
        }


def _check_probabilities(p: float, q: float) -> None:
    if not (0.0 < p < 1.0 and 0.0 < q < 1.0):
        raise InvalidScenario(f"p and q must lie in (0, 1), got p={p!r}, q={q!r}")


def enumerate_exact(tree: ExplicitTree, p: float, q: float, source: int, workers: int = 1) -> ExactStatistics:
    """Sum cluster statistics over all ``2**(2m)`` arrow configurations."""
    _check_probabilities(p, q)
    m = tree.edge_count
    if m > MAX_EDGES:
        raise BudgetExceeded(f"{m} edges exceed the enumeration budget of {MAX_EDGES}")
    if not 0 <= source < tree.size:
        raise ValueError(f"source {source} is not a vertex")
    ptr, idx = tree.children()
    n_configs = 1 << (2 * m)
    bounds = [(lo, min(lo + BLOCK, n_configs)) for lo in range(0, n_configs, BLOCK)]

    def run(bound):
        return _enumerate_block(bound[0], bound[1], m, tree.parent, tree.depth, ptr, idx, source, float(p), float(q))

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]

    total = es = es2 = ed = 0.0
    pmf_s, pmf_d, pmf_diam = (np.zeros_like(a) for a in parts[0][4:])
    for t, a, b, c, ps, pd, pdiam in parts:
        total += t
        es += a
        es2 += b
        ed += c
        pmf_s += ps
        pmf_d += pd
        pmf_diam += pdiam
    smax = int(np.flatnonzero(pmf_s)[-1])
    dmax = int(np.flatnonzero(pmf_diam)[-1])
    return ExactStatistics(
        mean_size=es,
        second_moment_size=es2,
        mean_reach=ed,
        size_pmf=tuple(float(x) for x in pmf_s[: smax + 1]),
        reach_pmf=tuple(float(x) for x in pmf_d),
        diameter_pmf=tuple(float(x) for x in pmf_diam[: dmax + 1]),
        total_probability=total,
    )


def wet_set(tree: ExplicitTree, config: int, source: int) -> frozenset[int]:
    """Vertices reachable from ``source`` in one configuration (frontier expansion)."""
    ptr, idx = tree.children()
    n = tree.size
    wet = np.empty(n, dtype=np.bool_)
    stack = np.empty(n, dtype=np.int64)
    _wet_mask(int(config), tree.edge_count, tree.parent, ptr, idx, int(source), wet, stack)
    return frozenset(int(v) for v in np.flatnonzero(wet))


def wet_set_recursive(tree: ExplicitTree, config: int, source: int) -> frozenset[int]:
    """Same as :func:`wet_set` by recursive descent over open arrows."""
    m = tree.edge_count
    kids = {v: [] for v in range(tree.size)}
    for v in range(1, tree.size):
        kids[int(tree.parent[v])].append(v)
    seen = set()

    def visit(v):
        if v in seen:
            return
        seen.add(v)
        for c in kids[v]:
            if config >> (c - 1) & 1:
                visit(c)
        if v > 0 and config >> (m + v - 1) & 1:
            visit(int(tree.parent[v]))

    visit(source)
    return frozenset(seen)
