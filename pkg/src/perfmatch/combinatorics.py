"""Exact counting of strongly synchronizing words and coalescence bounds.

A word ``w`` of length ``2p`` is strongly synchronizing when every letter
``w_i`` of the first half is incompatible with the second-half letters
``w_{p+1} .. w_{p+i}``. Words are grouped by their *trace* (distinct
second-half letters in order of first appearance) and each group is counted
in closed form.
"""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import combinations, permutations, product
from typing import Optional, Sequence

from .graph import CompatibilityGraph
from .randomness import LATENCY


def trace_of(w: Sequence[int]) -> tuple[int, ...]:
    """Distinct letters of the second half of ``w``, in order of first appearance."""
    if len(w) % 2:
        raise ValueError("trace is defined for words of even length 2p")
    p = len(w) // 2
    return tuple(dict.fromkeys(w[p:]))


def enumerate_traces(g: CompatibilityGraph) -> list[tuple[int, ...]]:
    """All orderings of every class set ``U`` with ``E(U) != V``."""
    everything = set(g.classes)
    out = []
    for size in range(1, g.n + 1):
        for u in combinations(g.classes, size):
            if g.neighborhood(u) != everything:
                out.extend(permutations(u))
    return out


def beta(z: Sequence[int], g: CompatibilityGraph) -> int:
    """Number of classes incompatible with every letter of ``z``."""
    hit = g.neighborhood(z)
    return sum(1 for v in g.classes if v not in hit)


def count_for_trace(z: Sequence[int], p: int, g: CompatibilityGraph) -> int:
    """Number of strongly synchronizing words of length ``2p`` with trace ``z``.

    Sums over first-occurrence positions ``1 = k_1 < ... < k_l < k_{l+1} = p+1``
    by dynamic programming on the gap lengths ``k_{i+1} - k_i``.
    """
    betas = [beta(z[: i + 1], g) for i in range(len(z))]
    return _weighted_trace_sum(list(range(1, len(z) + 1)), betas, [1] * len(z), p)


def _weighted_trace_sum(mass, incompatible, fixed, p):
    """Sum over gap vectors (g_1..g_l), g_i >= 1, sum = p, of
    prod_i fixed_i * mass_i^(g_i - 1) * incompatible_i^(g_i).

    ``mass_i`` weighs the repeated trace letters after the first occurrence of
    ``z_i``, ``incompatible_i`` each first-half letter facing them and
    ``fixed_i`` the first occurrence itself. Integer inputs give exact
    integer results; Fractions give exact probabilities.
    """
    length = len(mass)
    if length == 0 or p < length:
        return 0
    # acc[s] = total weight of prefixes of gaps summing to s
    acc = {0: 1}
    for i in range(length):
        nxt: dict = {}
        remaining = length - i - 1
        for s, val in acc.items():
            for gap in range(1, p - s - remaining + 1):
                term = val * fixed[i] * mass[i] ** (gap - 1) * incompatible[i] ** gap
                nxt[s + gap] = nxt.get(s + gap, 0) + term
        acc = nxt
    return acc.get(p, 0)


def count_for_trace_direct(z: Sequence[int], p: int, g: CompatibilityGraph) -> int:
    """Reference evaluation enumerating every index family explicitly."""
    length = len(z)
    if p < length:
        return 0
    betas = [beta(z[: i + 1], g) for i in range(length)]
    total = 0
    for middle in combinations(range(2, p + 1), length - 1):
        ks = (1,) + middle + (p + 1,)
        term = 1
        for i in range(length):
            gap = ks[i + 1] - ks[i]
            term *= (i + 1) ** (gap - 1) * betas[i] ** gap
        total += term
    return total


def count_strongly_synchronizing(g: CompatibilityGraph, p: int, per_trace: bool = False):
    """N(G, p); with ``per_trace`` also the dict trace -> count."""
    table = {z: count_for_trace(z, p, g) for z in enumerate_traces(g)}
    total = sum(table.values())
    return (total, table) if per_trace else total


def is_strongly_synchronizing_letters(w: Sequence[int], g: CompatibilityGraph) -> bool:
    """Plain predicate on a letter sequence (latency letters never conflict)."""
    if len(w) % 2:
        raise ValueError(f"strong synchronization needs an even-length word, got {len(w)}")
    p = len(w) // 2
    for i in range(p):
        a = w[i]
        if a <= 0:
            continue
        adj = g.neighbors(a)
        for j in range(p, p + i + 1):
            if w[j] in adj:
                return False
    return True


def brute_force_count(g: CompatibilityGraph, p: int, by_trace: bool = False):
    """Enumerate all ``n^(2p)`` words and count the strongly synchronizing ones."""
    count = 0
    groups: dict = {}
    for w in product(g.classes, repeat=2 * p):
        if is_strongly_synchronizing_letters(w, g):
            count += 1
            if by_trace:
                z = trace_of(w)
                groups[z] = groups.get(z, 0) + 1
    return (count, groups) if by_trace else count


def paw_closed_form(p: int) -> int:
    return 1 + 2 ** (2 * p + 3) - 3 ** (p + 1) - 4 * (p + 3) * 3 ** (p - 1)


def sync_probability(g: CompatibilityGraph, p: int, mu: Optional[Sequence] = None,
                     gamma=0) -> float | Fraction:
    """P(V_1..V_2p is strongly synchronizing) for IID letters.

    Letters are classes with law ``(1 - gamma) * mu`` and the latency letter
    with mass ``gamma``; latency is handled as an extra class compatible with
    nothing. Exact when ``mu`` and ``gamma`` are Fractions/ints.
    """
    n = g.n
    if mu is None:
        mu = [Fraction(1, n)] * n
    weights = {c: (1 - gamma) * m for c, m in zip(g.classes, mu)}
    letters = list(g.classes)
    if gamma:
        weights[LATENCY] = gamma
        letters.append(LATENCY)

    def nbr(c):
        return set() if c == LATENCY else g.neighbors(c)

    everything = set(letters)
    total = 0
    for size in range(1, len(letters) + 1):
        for u in combinations(letters, size):
            hit = set().union(*(nbr(c) for c in u))
            if hit == everything:
                continue
            for z in permutations(u):
                mass, incompatible, fixed = [], [], []
                seen: set = set()
                acc = 0
                for c in z:
                    seen |= nbr(c)
                    acc += weights[c]
                    mass.append(acc)
                    incompatible.append(sum(weights[v] for v in letters if v not in seen))
                    fixed.append(weights[c])
                total += _weighted_trace_sum(mass, incompatible, fixed, p)
    return total


def coalescence_bounds(n: int, p: int, count: int) -> tuple[float, float]:
    """Uniform-arrival bounds ``(E[I] bound, E[-T] bound)`` from N(G, p)."""
    if count <= 0:
        raise ValueError("no strongly synchronizing word: the control never triggers")
    bound_i = 1 + (2 * p * math.log(n) - math.log(count)) / math.log(2)
    return bound_i, p * 2**bound_i


def horizon_bound(p: int, q: float) -> float:
    """General-law bound 2p / q on the mean backward horizon."""
    if q <= 0:
        raise ValueError("sync probability is zero: the control never triggers")
    return 2 * p / float(q)
