"""Compatibility graphs between item classes.

Classes are labelled ``1..n``. The letters ``0`` (matched / empty slot) and
``-1`` (latency slot) are reserved by the word-profile models and are never
compatible with anything.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable

import numpy as np


class GraphError(ValueError):
    """Invalid graph description or failed graph generation."""


@dataclass(frozen=True)
class CompatibilityGraph:
    """Simple undirected graph on the classes ``1..n``.

    Edges are stored canonically as a sorted tuple of ``(i, j)`` pairs with
    ``i < j``, so equal graphs compare and serialize identically.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    _adj: tuple[frozenset[int], ...] = field(init=False, repr=False, compare=False)

    def __init__(self, n: int, edges: Iterable[Iterable[int]] = ()):
        if n < 1:
            raise GraphError(f"graph needs at least one class, got n={n}")
        canon = set()
        for e in edges:
            i, j = (int(x) for x in e)
            if i == j:
                raise GraphError(f"self-loop on class {i}")
            for c in (i, j):
                if not 1 <= c <= n:
                    raise GraphError(f"edge endpoint {c} outside 1..{n}")
            canon.add((min(i, j), max(i, j)))
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "edges", tuple(sorted(canon)))
        adj = [set() for _ in range(n + 1)]
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        object.__setattr__(self, "_adj", tuple(frozenset(a) for a in adj))

    @property
    def classes(self) -> range:
        return range(1, self.n + 1)

    def _check(self, i: int) -> None:
        if not 1 <= i <= self.n:
            raise GraphError(f"class {i} outside 1..{self.n}")

    def compatible(self, i: int, j: int) -> bool:
        """True iff ``i - j`` is an edge."""
        self._check(i)
        self._check(j)
        return j in self._adj[i]

    def neighbors(self, i: int) -> frozenset[int]:
        self._check(i)
        return self._adj[i]

    def neighborhood(self, u: Iterable[int]) -> set[int]:
        """E(U): every class sharing an edge with some member of ``u``."""
        out: set[int] = set()
        for i in u:
            self._check(i)
            out |= self._adj[i]
        return out

    def adjacency_matrix(self) -> np.ndarray:
        """Boolean matrix indexed by letter + 1, so rows/cols cover -1, 0, 1..n.

        Sentinel rows and columns are all False.
        """
        m = np.zeros((self.n + 2, self.n + 2), dtype=bool)
        for i, j in self.edges:
            m[i + 1, j + 1] = m[j + 1, i + 1] = True
        return m

    def is_connected(self) -> bool:
        seen = {1}
        todo = deque([1])
        while todo:
            i = todo.popleft()
            for j in self._adj[i]:
                if j not in seen:
                    seen.add(j)
                    todo.append(j)
        return len(seen) == self.n

    def without_edge(self, i: int, j: int) -> "CompatibilityGraph":
        e = (min(i, j), max(i, j))
        return CompatibilityGraph(self.n, [x for x in self.edges if x != e])

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.edges]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "CompatibilityGraph":
        try:
            return cls(int(d["n"]), d["edges"])
        except (KeyError, TypeError) as exc:
            raise GraphError(f"malformed graph object: {exc}") from exc


def compatible(g: CompatibilityGraph, i: int, j: int) -> bool:
    return g.compatible(i, j)


def neighborhood(g: CompatibilityGraph, u: Iterable[int]) -> set[int]:
    return g.neighborhood(u)


def paw() -> CompatibilityGraph:
    return CompatibilityGraph(4, [(1, 2), (2, 3), (2, 4), (3, 4)])


def path_graph(n: int) -> CompatibilityGraph:
    return CompatibilityGraph(n, [(i, i + 1) for i in range(1, n)])


def complete_graph(n: int) -> CompatibilityGraph:
    return CompatibilityGraph(n, combinations(range(1, n + 1), 2))


def parse_graph(spec: str) -> CompatibilityGraph:
    """Resolve ``paw``, ``path:<n>``, ``complete:<n>`` or a JSON file path."""
    if spec == "paw":
        return paw()
    kind, _, arg = spec.partition(":")
    if kind in ("path", "complete") and arg:
        try:
            n = int(arg)
        except ValueError:
            raise GraphError(f"bad graph size in {spec!r}") from None
        return path_graph(n) if kind == "path" else complete_graph(n)
    path = Path(spec)
    if not path.is_file():
        raise GraphError(f"unknown graph {spec!r} (not a named graph or a file)")
    try:
        return CompatibilityGraph.from_dict(json.loads(path.read_text()))
    except json.JSONDecodeError as exc:
        raise GraphError(f"graph file {spec} is not valid JSON: {exc}") from exc


def random_connected_er(n: int, q: float, seed: int, max_attempts: int = 100_000) -> CompatibilityGraph:
    """Erdos-Renyi G(n, q) conditioned on connectivity by rejection.

    Raises GraphError when no connected draw is found in ``max_attempts``.
    """
    if n < 2:
        raise GraphError("n must be at least 2")
    if not 0 < q <= 1:
        raise GraphError("q must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    pairs = list(combinations(range(1, n + 1), 2))
    for _ in range(max_attempts):
        keep = rng.random(len(pairs)) < q
        g = CompatibilityGraph(n, [e for e, k in zip(pairs, keep) if k])
        if g.is_connected():
            return g
    raise GraphError(
        f"no connected G({n}, {q}) draw in {max_attempts} attempts; q is too small for connectivity"
    )


def all_connected_graphs(n: int) -> list[CompatibilityGraph]:
    """Every connected labelled graph on ``n`` classes (small n only)."""
    pairs = list(combinations(range(1, n + 1), 2))
    out = []
    for mask in range(1 << len(pairs)):
        g = CompatibilityGraph(n, [e for k, e in enumerate(pairs) if mask >> k & 1])
        if g.is_connected():
            out.append(g)
    return out
