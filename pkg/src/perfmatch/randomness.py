"""Arrival models and the memoized, time-indexed input tape.

Every coupling-from-the-past run walks the same negative time indices again
after each horizon doubling, so the input at index ``j`` must be a pure
function of ``(seed, stream, j)``. The tape draws events in blocks of
``BLOCK`` consecutive indices, each block seeded from ``(seed, stream,
block index)``; access order therefore never changes the values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

LATENCY = -1
# Deterministic patience is p + EPSILON. Any value in (0, 1) gives the same
# dynamics; 1/2 is exact in binary so the dominating recursion stays exact.
EPSILON = 0.5
BLOCK = 64
_MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Arrival model or experiment configuration is invalid."""


@dataclass(frozen=True)
class DeterministicPatience:
    p: int

    def __post_init__(self):
        if not isinstance(self.p, (int, np.integer)) or self.p < 1:
            raise ConfigError(f"deterministic patience needs an integer p >= 1, got {self.p!r}")

    @property
    def bound(self) -> float:
        return self.p + EPSILON

    def to_dict(self) -> dict:
        return {"deterministic": int(self.p)}


@dataclass(frozen=True)
class DiscretePatience:
    """Finite-support patience law given as ``(value, probability)`` pairs."""

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ConfigError("discrete patience needs matching, non-empty value/prob lists")
        if any(pr < 0 for pr in self.probs) or abs(sum(self.probs) - 1) > 1e-12:
            raise ConfigError("patience probabilities must be non-negative and sum to 1")
        for v in self.values:
            if v <= 0:
                raise ConfigError(f"patience values must be positive, got {v}")
            # the profile chain compares remaining patience strictly with 1
            if abs(v - round(v)) < 1e-9:
                raise ConfigError(f"patience value {v} is (within 1e-9 of) an integer")

    @property
    def bound(self) -> float:
        return max(v for v, pr in zip(self.values, self.probs) if pr > 0)

    def prob_at_most(self, x: float) -> float:
        return sum(pr for v, pr in zip(self.values, self.probs) if v <= x)

    def to_dict(self) -> dict:
        return {"discrete": [[v, pr] for v, pr in zip(self.values, self.probs)]}


Patience = Union[DeterministicPatience, DiscretePatience]


@dataclass(frozen=True)
class ArrivalModel:
    """Class law ``mu`` over ``1..n``, patience law and latency probability."""

    mu: tuple[float, ...]
    patience: Patience
    gamma: float = 0.0

    def __post_init__(self):
        mu = tuple(float(x) for x in self.mu)
        object.__setattr__(self, "mu", mu)
        if not mu or any(x < 0 for x in mu) or abs(sum(mu) - 1) > 1e-12:
            raise ConfigError("mu must be a non-negative probability vector summing to 1")
        if not 0 <= self.gamma < 1:
            raise ConfigError(f"gamma must lie in [0, 1), got {self.gamma}")

    @classmethod
    def uniform(cls, n: int, patience: Patience, gamma: float = 0.0) -> "ArrivalModel":
        return cls(tuple([1.0 / n] * n), patience, gamma)

    @property
    def n(self) -> int:
        return len(self.mu)

    @property
    def deterministic(self) -> bool:
        return isinstance(self.patience, DeterministicPatience)

    @property
    def p(self) -> int:
        if not self.deterministic:
            raise ConfigError("word-profile models need deterministic patience")
        return self.patience.p

    @property
    def patience_bound(self) -> float:
        return self.patience.bound

    def prob_patience_at_most_one(self) -> float:
        """P(P <= 1) for the per-slot patience, latency slots counting as P = 0."""
        if self.deterministic:
            base = 0.0
        else:
            base = self.patience.prob_at_most(1.0)
        return self.gamma + (1 - self.gamma) * base

    def to_dict(self) -> dict:
        return {"mu": list(self.mu), "patience": self.patience.to_dict(), "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> "ArrivalModel":
        try:
            pat = d["patience"]
            if "deterministic" in pat:
                patience: Patience = DeterministicPatience(int(pat["deterministic"]))
            elif "discrete" in pat:
                pairs = pat["discrete"]
                patience = DiscretePatience(
                    tuple(float(v) for v, _ in pairs), tuple(float(pr) for _, pr in pairs)
                )
            else:
                raise ConfigError("patience must be 'deterministic' or 'discrete'")
            return cls(tuple(d["mu"]), patience, float(d.get("gamma", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed arrival model: {exc}") from exc


def parse_patience(text: str) -> Patience:
    """``deterministic:3`` or ``discrete:0.5@0.4,2.5@0.6``."""
    kind, _, arg = text.partition(":")
    try:
        if kind == "deterministic":
            return DeterministicPatience(int(arg))
        if kind == "discrete":
            pairs = [item.split("@") for item in arg.split(",")]
            return DiscretePatience(tuple(float(v) for v, _ in pairs), tuple(float(pr) for _, pr in pairs))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot parse patience {text!r}: {exc}") from exc
    raise ConfigError(f"unknown patience law {text!r}")


class InputEvent(NamedTuple):
    cls: int
    patience: float
    draw: float  # independent uniform for randomized matching decisions


def derive_replication_seed(master: int, replication: int) -> int:
    """Mix (master, replication) through numpy's SeedSequence hash into 63 bits."""
    if replication < 0:
        raise ValueError("replication index must be non-negative")
    ss = np.random.SeedSequence([master & _MASK64, replication])
    return int(ss.generate_state(1, np.uint64)[0]) & ((1 << 63) - 1)


class InputTape:
    """Memoized input ``v_j`` for negative time indices ``j``.

    ``stream`` separates independent tapes sharing a seed (for instance the
    extra arrival drawn after a perfect sample).
    """

    def __init__(self, model: ArrivalModel, seed: int, stream: int = 0):
        self.model = model
        self.seed = int(seed)
        self.stream = int(stream)
        self._blocks: dict[int, tuple] = {}
        self._cum = np.cumsum(model.mu)
        if not model.deterministic:
            pat = model.patience
            self._pvals = np.asarray(pat.values, dtype=float)
            self._pcum = np.cumsum(pat.probs)
        self.log: list[int] | None = None

    def _block(self, b: int) -> tuple:
        blk = self._blocks.get(b)
        if blk is not None:
            return blk
        m = self.model
        rng = np.random.default_rng([self.seed & _MASK64, self.stream, b])
        u = rng.random((4, BLOCK))
        cls = np.minimum(np.searchsorted(self._cum, u[1], side="right"), m.n - 1) + 1
        if m.deterministic:
            pat = np.full(BLOCK, m.patience.p + EPSILON)
        else:
            k = np.minimum(np.searchsorted(self._pcum, u[2], side="right"), len(self._pvals) - 1)
            pat = self._pvals[k]
        if m.gamma > 0:
            lat = u[0] < m.gamma
            cls = np.where(lat, LATENCY, cls)
            pat = np.where(lat, 0.0, pat)
        # index r within block b is time j = -(b * BLOCK + r) - 1
        cl = cls.tolist()
        pl = pat.tolist()
        dl = u[3].tolist()
        blk = (pl, cl, dl, cls[::-1].copy(), pat[::-1].copy())
        self._blocks[b] = blk
        return blk

    def event_at(self, j: int) -> InputEvent:
        if j >= 0:
            raise ValueError(f"the tape only holds strictly negative times, got {j}")
        if self.log is not None:
            self.log.append(j)
        b, r = divmod(-j - 1, BLOCK)
        pl, cl, dl, _, _ = self._block(b)
        return InputEvent(cl[r], pl[r], dl[r])

    def events(self, start: int, stop: int) -> list[InputEvent]:
        """Events for times ``start..stop-1`` in increasing time order."""
        return [self.event_at(j) for j in range(start, stop)]

    def arrays(self, start: int, stop: int) -> tuple[list[int], list[float]]:
        """Classes and policy draws for times ``start..stop-1`` (fast path)."""
        if stop > 0 or start > stop:
            raise ValueError(f"bad time range [{start}, {stop})")
        if self.log is not None:
            self.log.extend(range(start, stop))
        cls: list[int] = []
        drw: list[float] = []
        j = start
        while j < stop:
            b, r = divmod(-j - 1, BLOCK)
            _, cl, dl, _, _ = self._block(b)
            # times in a block run from index r down to 0 as time increases
            lo = max(r - (stop - j) + 1, 0)
            cls.extend(cl[lo : r + 1][::-1])
            drw.extend(dl[lo : r + 1][::-1])
            j += r - lo + 1
        return cls, drw

    def class_array(self, start: int, stop: int) -> np.ndarray:
        """Classes for times ``start..stop-1`` as an integer array."""
        return self._forward(start, stop, 3, np.int64)

    def patience_array(self, start: int, stop: int) -> np.ndarray:
        """Patiences for times ``start..stop-1`` (0 for latency slots)."""
        return self._forward(start, stop, 4, float)

    def _forward(self, start, stop, field, dtype):
        if stop > 0 or start > stop:
            raise ValueError(f"bad time range [{start}, {stop})")
        if self.log is not None:
            self.log.extend(range(start, stop))
        if start == stop:
            return np.zeros(0, dtype=dtype)
        b_lo, b_hi = (-stop) // BLOCK, (-start - 1) // BLOCK
        # each stored array runs forward in time over [-(b+1)B, -bB)
        parts = [self._block(b)[field] for b in range(b_hi, b_lo - 1, -1)]
        arr = np.concatenate(parts) if len(parts) > 1 else parts[0]
        offset = -(b_hi + 1) * BLOCK
        return arr[start - offset : stop - offset]


def event_at(tape: InputTape, j: int) -> InputEvent:
    return tape.event_at(j)

