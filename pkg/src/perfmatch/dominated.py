"""Perfect sampling by domination with an infinite-server queue.

The control ``Y`` is the largest remaining patience of an infinite-server
queue fed with the same patiences. It dominates ``phi`` of the matching
profile, so ``Y = 0`` forces the empty profile (or, for the latency
word-profile chain, the all-latency word).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .engine import DEFAULT_MAX_HORIZON, ControlSpec, SampleReport, sample_by_control
from .graph import CompatibilityGraph
from .models import OperationMeter, Policy, WordKernel, profile_step
from .randomness import LATENCY, ArrivalModel, ConfigError, InputTape


def dominating_step(y: float, patience: float) -> float:
    """``[max(y, patience) - 1]^+``."""
    return max(max(y, patience) - 1.0, 0.0)


def latency_endpoint_check(window: Sequence[float]) -> bool:
    """True iff every patience in the window is 0 (all latency slots)."""
    return all(v == 0 for v in window)


@dataclass(frozen=True)
class DominatedSpec:
    """Patience bound ``m`` of a validated model; the control starts at ``m``."""

    m: float

    @classmethod
    def for_model(cls, model: ArrivalModel) -> "DominatedSpec":
        if model.prob_patience_at_most_one() <= 0:
            raise ConfigError("patience law violates P(P<=1)>0")
        return cls(float(model.patience_bound))


def dominating_scan(patience: np.ndarray, m: float) -> Optional[int]:
    """First index ``k`` (events consumed) with ``Y_k = 0``, or None.

    Closed form of the recursion from ``Y_0 = m``:
    ``Y_k = max(m - k, max_j (P_j - (k - j)), 0)`` over events ``j < k``.
    """
    h = len(patience)
    if h == 0:
        return None
    reach = np.maximum.accumulate(patience + np.arange(h))  # j + P_j, j < k
    k = np.arange(1, h + 1)
    ok = (k >= m) & (reach[k - 1] <= k)
    hits = np.flatnonzero(ok)
    return int(hits[0]) + 1 if hits.size else None


def latency_scan(classes: np.ndarray, p: int) -> Optional[int]:
    """Counter form for the latency model: ``Y_k = 0`` iff ``k > p`` and the
    last ``p`` events are all latency."""
    lat = (classes == LATENCY).astype(np.int64)
    cs = np.concatenate(([0], np.cumsum(lat)))
    k = np.arange(p + 1, len(classes) + 1)
    hits = k[cs[k] - cs[k - p] == p]
    return int(hits[0]) if hits.size else None


def sample_dominated(model: ArrivalModel, policy: Policy, g: CompatibilityGraph, tape: InputTape,
                     initial_horizon: int = 1, max_horizon: int = DEFAULT_MAX_HORIZON,
                     meter: Optional[OperationMeter] = None, method: str = "fast",
                     kernel: Optional[WordKernel] = None) -> SampleReport:
    """Exact stationary sample by domination.

    Deterministic patience (which then needs latency) samples the word-profile
    chain with target ``(-1)^p``; discrete patience samples the profile chain
    with target the empty profile. ``method="literal"`` steps
    :func:`dominating_step` through the generic engine; ``"fast"`` uses the
    closed-form scans. The control is charged one operation per step.
    """
    spec = DominatedSpec.for_model(model)
    if g.n != model.n:
        raise ValueError(f"graph has {g.n} classes but mu has {model.n}")
    if method not in ("fast", "literal"):
        raise ValueError(f"unknown method {method!r}")
    words = model.deterministic
    if words:
        p = model.p
        kernel = kernel or WordKernel(g, policy, p)
        target_state = (LATENCY,) * p

        def fold(x, tape_, t):
            cls, draws = tape_.arrays(t, 0)
            return kernel.fold(x, cls, draws, meter)
    else:
        target_state = ()

        def fold(x, tape_, t):
            for ev in tape_.events(t, 0):
                x = profile_step(x, ev, policy, g, meter=meter)
            return x

    if method == "literal":

        def control_step(y, ev):
            if meter is not None:
                meter.add(1)
            return dominating_step(y, ev.patience)

        cspec = ControlSpec(start=spec.m, is_endpoint=lambda y: y == 0,
                            target=lambda y: target_state)
        return sample_by_control(control_step, None, cspec, tape, initial_horizon,
                                 max_horizon, meter, fold)

    def scan(tape_, horizon, meter_):
        if words:
            k = latency_scan(tape_.class_array(-horizon, 0), model.p)
        else:
            k = dominating_scan(tape_.patience_array(-horizon, 0), spec.m)
        if meter_ is not None:
            meter_.add(horizon if k is None else k)
        return None if k is None else (-horizon + k, 0.0)

    cspec = ControlSpec(start=spec.m, is_endpoint=lambda y: y == 0,
                        target=lambda y: target_state, scan=scan)
    return sample_by_control(None, None, cspec, tape, initial_horizon, max_horizon, meter, fold)
