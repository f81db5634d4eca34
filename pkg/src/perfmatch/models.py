"""Markov kernels of the matching model with reneging.

Two state representations:

* ``ProfileState`` -- tuple of ``(remaining_patience, class)`` pairs in
  arrival order, for general bounded patience.
* ``WordProfile`` -- tuple of ``p`` letters for deterministic patience
  ``p + eps``. Letter ``i`` (0-based) is the slot of the arrival at time
  ``n - p + i``; it holds the class if that item still waits, ``0`` if it
  was matched and ``-1`` if the slot was a latency.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Optional

from .graph import CompatibilityGraph
from .randomness import LATENCY, ConfigError, InputEvent

ProfileState = tuple  # tuple[tuple[float, int], ...]
WordProfile = tuple  # tuple[int, ...]

FCFM = "fcfm"
ML = "ml"
PRIORITY = "priority"
RANDOM = "random"


class OperationMeter:
    """Counts comparisons of two letters (equality or adjacency)."""

    __slots__ = ("count", "enabled")

    def __init__(self, enabled: bool = True):
        self.count = 0
        self.enabled = enabled

    def add(self, k: int) -> None:
        if self.enabled:
            self.count += k


@dataclass(frozen=True)
class Policy:
    """Admissible matching policy.

    ``order`` is the class ranking for PRIORITY. ``tie`` applies to ML ties
    between classes of equal multiplicity: ``"random"`` picks uniformly via
    the event draw, ``"lowest"`` takes the smallest class label.
    """

    kind: str
    order: tuple[int, ...] = ()
    tie: str = "random"

    def __post_init__(self):
        if self.kind not in (FCFM, ML, PRIORITY, RANDOM):
            raise ConfigError(f"unknown policy {self.kind!r}")
        if self.kind == PRIORITY and not self.order:
            raise ConfigError("priority policy needs a class order")
        if self.tie not in ("random", "lowest"):
            raise ConfigError(f"unknown ML tie rule {self.tie!r}")

    @property
    def deterministic(self) -> bool:
        """True when the decision never reads the draw."""
        return self.kind in (FCFM, PRIORITY) or (self.kind == ML and self.tie == "lowest")

    def rank(self, n: int) -> dict[int, int]:
        ranked = list(dict.fromkeys(self.order))
        ranked += [c for c in range(1, n + 1) if c not in ranked]
        return {c: k for k, c in enumerate(ranked)}

    @property
    def name(self) -> str:
        if self.kind == PRIORITY:
            return "priority:" + ",".join(map(str, self.order))
        if self.kind == ML and self.tie != "random":
            return f"ml:{self.tie}"
        return self.kind


def parse_policy(text: str) -> Policy:
    """``fcfm | ml | ml:lowest | priority:3,1,4,2 | random``."""
    kind, _, arg = text.partition(":")
    if kind == PRIORITY:
        try:
            return Policy(PRIORITY, tuple(int(c) for c in arg.split(",") if c))
        except ValueError:
            raise ConfigError(f"bad priority order {arg!r}") from None
    if kind == ML and arg:
        return Policy(ML, tie=arg)
    if arg:
        raise ConfigError(f"policy {kind!r} takes no argument")
    return Policy(kind)


def _choose(policy: Policy, g: CompatibilityGraph, classes: list[int], positions: list[int]):
    """Candidate positions among compatible ``positions`` (with letters ``classes``).

    Returns the tuple of equally valid choices; the draw picks among them.
    """
    kind = policy.kind
    if kind == FCFM:
        return (positions[0],)
    if kind == RANDOM:
        return tuple(positions)
    if kind == PRIORITY:
        rank = policy.rank(g.n)
        best = min(classes, key=rank.__getitem__)
        return (positions[classes.index(best)],)
    # ML: class of largest multiplicity among compatible stored letters,
    # earliest position within the class
    counts: dict[int, int] = {}
    for c in classes:
        counts[c] = counts.get(c, 0) + 1
    top = max(counts.values())
    tied = sorted(c for c, k in counts.items() if k == top)
    if policy.tie == "lowest":
        tied = tied[:1]
    return tuple(positions[classes.index(c)] for c in tied)


def word_candidates(state: WordProfile, arrival: int, policy: Policy, g: CompatibilityGraph):
    """All possible ``(next_state, matched_position)`` outcomes and the op count.

    ``matched_position`` is the 0-based index of the matched letter or None.
    """
    if arrival == LATENCY:
        return ((state[1:] + (LATENCY,), None),), 0
    adj = g.neighbors(arrival)
    ops = 0
    positions: list[int] = []
    classes: list[int] = []
    for i, x in enumerate(state):
        if x > 0:
            ops += 1
            if x in adj:
                positions.append(i)
                classes.append(x)
                if policy.kind == FCFM:
                    break
    if not positions:
        return ((state[1:] + (arrival,), None),), ops
    if policy.kind == ML:
        ops += len(classes)  # tallying multiplicities
    outs = []
    for i in _choose(policy, g, classes, positions):
        nxt = list(state)
        nxt[i] = 0
        outs.append((tuple(nxt[1:]) + (0,), i))
    return tuple(outs), ops


def pick(outcomes: tuple, draw: float):
    k = len(outcomes)
    return outcomes[0] if k == 1 else outcomes[min(int(draw * k), k - 1)]


def word_transition(state, arrival, policy, g, draw=0.0, meter: Optional[OperationMeter] = None):
    outs, ops = word_candidates(state, arrival, policy, g)
    if meter is not None:
        meter.add(ops)
    return pick(outs, draw)


def word_step(state: WordProfile, arrival: int, policy: Policy, g: CompatibilityGraph,
              draw: float = 0.0, meter: Optional[OperationMeter] = None) -> WordProfile:
    """One arrival (class or -1) applied to a word-profile."""
    return word_transition(state, arrival, policy, g, draw, meter)[0]


def apply_word(state: WordProfile, word, policy: Policy, g: CompatibilityGraph,
               draws=None, meter: Optional[OperationMeter] = None) -> WordProfile:
    """Left fold of :func:`word_step` over ``word`` (with per-letter draws)."""
    if draws is None:
        draws = [0.0] * len(word)
    for a, u in zip(word, draws):
        state = word_step(state, a, policy, g, u, meter)
    return state


class WordKernel:
    """Memoized word-profile transition for one ``(graph, policy)``.

    Outcomes depend only on ``(state, arrival)`` plus the draw, so they are
    cached per pair; the meter still receives the full comparison count of
    each transition.
    """

    def __init__(self, g: CompatibilityGraph, policy: Policy, p: int):
        self.g = g
        self.policy = policy
        self.p = p
        self._cache: dict = {}

    def transition(self, state, arrival, draw=0.0, meter=None):
        key = (state, arrival)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._cache[key] = word_candidates(state, arrival, self.policy, self.g)
        if meter is not None and meter.enabled:
            meter.count += hit[1]
        outs = hit[0]
        return outs[0] if len(outs) == 1 else pick(outs, draw)

    def step(self, state, arrival, draw=0.0, meter=None):
        return self.transition(state, arrival, draw, meter)[0]

    def fold(self, state, classes, draws, meter=None):
        cache = self._cache
        policy, g = self.policy, self.g
        ops = 0
        for a, u in zip(classes, draws):
            key = (state, a)
            hit = cache.get(key)
            if hit is None:
                hit = cache[key] = word_candidates(state, a, policy, g)
            ops += hit[1]
            outs = hit[0]
            state = (outs[0] if len(outs) == 1 else pick(outs, u))[0]
        if meter is not None:
            meter.add(ops)
        return state


def empty_word(p: int) -> WordProfile:
    return (0,) * p


def word_states(n: int, p: int, latency: bool = False) -> list[WordProfile]:
    """The full product space ``({0..n} [+ {-1}])^p`` of word-profiles."""
    letters = ([LATENCY] if latency else []) + list(range(n + 1))
    return [tuple(s) for s in product(letters, repeat=p)]


def format_word(w) -> str:
    """Compact printable form: letters concatenated, latency shown as ``-``."""
    if all(0 <= x <= 9 for x in w):
        return "".join(map(str, w))
    return ",".join("-" if x == LATENCY else str(x) for x in w)


def parse_word(text: str) -> tuple[int, ...]:
    if "," in text:
        return tuple(-1 if t == "-" else int(t) for t in text.split(","))
    return tuple(-1 if ch == "-" else int(ch) for ch in text)


def profile_step(state: ProfileState, ev: InputEvent, policy: Policy, g: CompatibilityGraph,
                 draw: Optional[float] = None, meter: Optional[OperationMeter] = None) -> ProfileState:
    """One arrival applied to a profile: match or store, then renege, then age.

    ``draw`` defaults to the event's own draw.
    """
    u = ev.draw if draw is None else draw
    items = list(state)
    if ev.cls != LATENCY:
        adj = g.neighbors(ev.cls)
        positions: list[int] = []
        classes: list[int] = []
        ops = 0
        for k, (_, c) in enumerate(items):
            ops += 1
            if c in adj:
                positions.append(k)
                classes.append(c)
                if policy.kind == FCFM:
                    break
        if positions:
            if policy.kind == ML:
                ops += len(classes)
            del items[pick(_choose(policy, g, classes, positions), u)]
        else:
            items.append((ev.patience, ev.cls))
        if meter is not None:
            meter.add(ops)
    return tuple((r - 1, c) for r, c in items if r >= 1)


def phi(state: ProfileState) -> float:
    """Largest remaining patience in the profile, 0 for the empty profile."""
    return max((r for r, _ in state), default=0.0)
