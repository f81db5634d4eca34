"""Perfect sampling by control, and primitive coupling from the past.

Both samplers run backwards with doubling horizons over one memoized
:class:`~perfmatch.randomness.InputTape`, so every revisit of time ``j``
sees the same input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional

from .models import OperationMeter
from .randomness import InputTape

DEFAULT_MAX_HORIZON = 2**30


class NonTermination(RuntimeError):
    """The horizon cap was exceeded before an endpoint/coalescence was seen."""


@dataclass
class ControlSpec:
    """Control chain description.

    ``start`` is the control state ``y`` every horizon restarts from;
    ``is_endpoint``/``target`` give the endpoint predicate and the model
    state it forces. ``scan`` is an optional fast path with the semantics of
    the generic forward loop: given the tape and a horizon ``T`` it returns
    ``(t, y_t)`` for the first time ``t`` in ``[-T, 0]`` at which the control
    chain restarted at ``-T`` sits on an endpoint, or None.
    """

    start: Any
    is_endpoint: Callable[[Any], bool]
    target: Callable[[Any], Any]
    scan: Optional[Callable[[InputTape, int, Optional[OperationMeter]], Optional[tuple]]] = None

    @classmethod
    def from_endpoints(cls, pairs: Iterable[tuple], start: Any) -> "ControlSpec":
        """Explicit ``(b_k, a_k)`` endpoint/target pairs."""
        table = dict(pairs)
        if not table:
            raise ValueError("a control needs at least one endpoint")
        return cls(start, table.__contains__, table.__getitem__)


@dataclass
class SampleReport:
    sample: Any
    iterations: int
    start_time: int
    detection_time: int
    events_consumed: int
    operations: int = 0
    extra: dict = field(default_factory=dict)


def sample_by_control(control_step: Callable, model_step: Callable, spec: ControlSpec,
                      tape: InputTape, initial_horizon: int = 1,
                      max_horizon: int = DEFAULT_MAX_HORIZON,
                      meter: Optional[OperationMeter] = None,
                      model_fold: Optional[Callable] = None) -> SampleReport:
    """Run the control chain from ``spec.start`` at ``-T`` for T = h, 2h, 4h, ...

    On the first endpoint hit at time ``t`` the model is set to the forced
    state and folded over the events ``t..-1``. ``control_step(y, event)``
    and ``model_step(x, event)`` are the two transition maps;
    ``model_fold(x, tape, t)`` may replace the per-event model loop.
    """
    if initial_horizon < 1:
        raise ValueError("initial horizon must be positive")
    horizon = initial_horizon
    iterations = 1
    while True:
        if horizon > max_horizon:
            raise NonTermination(f"no endpoint hit within horizon {max_horizon}")
        if spec.scan is not None:
            hit = spec.scan(tape, horizon, meter)
        else:
            hit = _forward_scan(control_step, spec, tape, horizon)
        if hit is not None:
            break
        horizon *= 2
        iterations += 1
    t, y = hit
    x = spec.target(y)
    if model_fold is not None:
        x = model_fold(x, tape, t)
    else:
        for j in range(t, 0):
            x = model_step(x, tape.event_at(j))
    return SampleReport(
        sample=x,
        iterations=iterations,
        start_time=-horizon,
        detection_time=t,
        events_consumed=horizon,
        operations=meter.count if meter is not None else 0,
    )


def _forward_scan(control_step, spec: ControlSpec, tape: InputTape, horizon: int):
    y = spec.start
    t = -horizon
    if spec.is_endpoint(y):
        return t, y
    while t < 0:
        y = control_step(y, tape.event_at(t))
        t += 1
        if spec.is_endpoint(y):
            return t, y
    return None


def primitive_cftp(model_step: Callable, states: list, tape: InputTape,
                   initial_horizon: int = 1, max_horizon: int = DEFAULT_MAX_HORIZON,
                   meter: Optional[OperationMeter] = None, letters: Optional[int] = None) -> SampleReport:
    """Propp-Wilson CFTP over an explicit finite state list.

    ``model_step(x, event, meter)`` must be deterministic given the event.
    All copies read the same events; copies that meet stay merged, so only
    distinct states are stepped, but the meter is charged for every copy.
    The coalescence test compares every copy with the first one letter by
    letter after each step (``letters`` = word length for the op count).
    """
    if not states:
        raise ValueError("empty state space")
    horizon = initial_horizon
    iterations = 1
    total = len(states)
    while True:
        if horizon > max_horizon:
            raise NonTermination(f"no coalescence within horizon {max_horizon}")
        current: dict = {}
        for s in states:
            current[s] = current.get(s, 0) + 1
        t = -horizon
        while len(current) > 1 and t < 0:
            ev = tape.event_at(t)
            nxt: dict = {}
            for s, mult in current.items():
                if meter is not None:
                    before = meter.count
                    s2 = model_step(s, ev, meter)
                    meter.count += (meter.count - before) * (mult - 1)
                else:
                    s2 = model_step(s, ev, None)
                nxt[s2] = nxt.get(s2, 0) + mult
            current = nxt
            t += 1
            if meter is not None:
                meter.add(_equality_ops(current, letters, total))
        if len(current) == 1:
            (x,) = current
            for j in range(t, 0):
                x = model_step(x, tape.event_at(j), meter)
            return SampleReport(
                sample=x,
                iterations=iterations,
                start_time=-horizon,
                detection_time=t,
                events_consumed=horizon,
                operations=meter.count if meter is not None else 0,
            )
        horizon *= 2
        iterations += 1


def _equality_ops(current: dict, letters: Optional[int], total: int) -> int:
    """Letter comparisons to test all copies against the first copy."""
    if letters is None:
        return total - 1
    items = list(current.items())
    ref, mult0 = items[0]
    ops = (mult0 - 1) * letters
    for s, mult in items[1:]:
        k = 1
        for a, b in zip(ref, s):
            if a != b:
                break
            k += 1
        ops += mult * min(k, letters)
    return ops
