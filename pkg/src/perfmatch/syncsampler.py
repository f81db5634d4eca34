"""Perfect sampling for deterministic patience via strongly synchronizing words.

The control chain is the window of the last ``2p`` arrivals. Once that
window is strongly synchronizing every copy of the word-profile chain agrees,
on ``apply_word(0_p, second half of the window)``, whatever its start.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .combinatorics import is_strongly_synchronizing_letters
from .engine import DEFAULT_MAX_HORIZON, ControlSpec, NonTermination, SampleReport, sample_by_control
from .graph import CompatibilityGraph
from .models import (
    OperationMeter,
    Policy,
    WordKernel,
    apply_word,
    empty_word,
    word_states,
)
from .randomness import LATENCY, ArrivalModel, InputTape


def window_step(w: tuple, arrival, p: int) -> tuple:
    """Append ``arrival``; once ``2p`` letters are held, slide instead."""
    return w + (arrival,) if len(w) < 2 * p else w[1:] + (arrival,)


def is_strongly_synchronizing(w: Sequence[int], g: CompatibilityGraph,
                              meter: Optional[OperationMeter] = None) -> bool:
    """Full O(p^2) check: ``w_i`` incompatible with ``w_{p+1}..w_{p+i}`` for all i.

    Latency letters are compatible with nothing; comparisons involving them
    cost nothing on the meter.
    """
    if meter is None:
        return is_strongly_synchronizing_letters(w, g)
    if len(w) % 2:
        raise ValueError(f"strong synchronization needs an even-length word, got {len(w)}")
    p = len(w) // 2
    ops = 0
    ok = True
    for i in range(p):
        a = w[i]
        if a <= 0:
            continue
        adj = g.neighbors(a)
        for j in range(p, p + i + 1):
            if w[j] <= 0:
                continue
            ops += 1
            if w[j] in adj:
                ok = False
                break
        if not ok:
            break
    meter.add(ops)
    return ok


def endpoint_state(w: Sequence[int], policy: Policy, g: CompatibilityGraph,
                   draws: Optional[Sequence[float]] = None, check: bool = True,
                   meter: Optional[OperationMeter] = None) -> tuple:
    """The common state ``apply_word(0_p, second half)`` forced by ``w``.

    ``draws`` are the policy draws of the second-half arrivals.
    """
    if check and not is_strongly_synchronizing_letters(w, g):
        raise ValueError(f"word {tuple(w)} is not strongly synchronizing")
    p = len(w) // 2
    return apply_word(empty_word(p), tuple(w[p:]), policy, g, draws, meter)


def is_synchronizing_bruteforce(w: Sequence[int], policy: Policy, g: CompatibilityGraph, p: int,
                                draws: Optional[Sequence[float]] = None, latency: bool = False,
                                max_states: int = 200_000) -> bool:
    """Does feeding ``w`` to every word-profile state give a single result?

    With ``latency`` the state space includes ``-1`` letters and results are
    compared after mapping ``-1`` to ``0``.
    """
    size = (g.n + (2 if latency else 1)) ** p
    if size > max_states:
        raise ValueError(f"state space of {size} words exceeds the cap {max_states}")
    kernel = WordKernel(g, policy, p)
    if draws is None:
        draws = [0.0] * len(w)
    seen = None
    for x in word_states(g.n, p, latency):
        out = kernel.fold(x, w, draws)
        if latency:
            out = tuple(0 if c == LATENCY else c for c in out)
        if seen is None:
            seen = out
        elif out != seen:
            return False
    return True


def _compat_table(g: CompatibilityGraph) -> np.ndarray:
    return g.adjacency_matrix()


def scan_vectorized(cls: np.ndarray, p: int, adj: np.ndarray):
    """First strongly synchronizing window in ``cls`` (times T..-1 as 0..H-1).

    Returns ``(end, ops)`` where ``end`` is the index one past the window's
    last letter, or ``(None, ops)``. ``ops`` is the comparison count of the
    incremental scan (see :func:`scan_incremental`) up to detection.
    """
    h = len(cls)
    idx = cls + 1
    nwin = max(h - 2 * p + 1, 0)
    bad = np.zeros(nwin, dtype=bool)
    for d in range(1, p + 1 if nwin else 1):
        conflict = adj[idx[:-d], idx[d:]]  # pair (a, a + d)
        cs = np.concatenate(([0], np.cumsum(conflict)))
        s = np.arange(nwin)
        # window s holds pairs (s + i, s + i + d) for i in [p - d, p - 1]
        bad |= (cs[s + p] - cs[s + p - d]) > 0
    good = np.flatnonzero(~bad)
    real = (cls > 0).astype(np.int64)
    rc = np.concatenate(([0], np.cumsum(real)))
    if good.size:
        end = int(good[0]) + 2 * p
    else:
        end = h
    b = np.arange(p, end)
    ops = int(np.sum(real[b] * (rc[b] - rc[b - p])))
    return (end if good.size else None), ops


def scan_incremental(cls: Sequence[int], p: int, g: CompatibilityGraph):
    """Scalar incremental scan; same contract as :func:`scan_vectorized`.

    Each new letter at position ``b >= p`` is compared with the ``p``
    previous letters; a compatible pair ``(a, b)`` spoils exactly the windows
    starting in ``[a - p + 1, b - p]``, tracked by per-start counters.
    """
    h = len(cls)
    bad = [0] * max(h - 2 * p + 1, 0)
    ops = 0
    for b in range(p, h):
        v = cls[b]
        if v > 0:
            adj = g.neighbors(v)
            for a in range(b - p, b):
                u = cls[a]
                if u > 0:
                    ops += 1
                    if u in adj:
                        for s in range(max(a - p + 1, 0), min(b - p, len(bad) - 1) + 1):
                            bad[s] += 1
        s = b - 2 * p + 1
        if s >= 0 and bad[s] == 0:
            return b + 1, ops
    return None, ops


class SyncControl:
    """Sliding-window control for one ``(graph, p)``; it does not depend on the policy."""

    def __init__(self, g: CompatibilityGraph, p: int, method: str = "vectorized"):
        if method not in ("vectorized", "incremental", "full"):
            raise ValueError(f"unknown scan method {method!r}")
        self.g = g
        self.p = p
        self.method = method
        self._adj = _compat_table(g)

    def scan(self, tape: InputTape, horizon: int, meter: Optional[OperationMeter] = None):
        """First detection ``(t, window)`` for the window restarted at ``-horizon``."""
        p = self.p
        cls = tape.class_array(-horizon, 0)
        if self.method == "full":
            w: tuple = ()
            for k, v in enumerate(cls.tolist()):
                w = window_step(w, v, p)
                if len(w) == 2 * p and is_strongly_synchronizing(w, self.g, meter):
                    return -horizon + k + 1, w
            return None
        if self.method == "vectorized":
            end, ops = scan_vectorized(cls, p, self._adj)
        else:
            end, ops = scan_incremental(cls.tolist(), p, self.g)
        if meter is not None:
            meter.add(ops)
        if end is None:
            return None
        return -horizon + end, tuple(cls[end - 2 * p : end].tolist())

    def locate(self, tape: InputTape, initial_horizon: Optional[int] = None,
               max_horizon: int = DEFAULT_MAX_HORIZON, meter: Optional[OperationMeter] = None):
        """Doubling search; returns ``(t, window, horizon, iterations)``."""
        horizon = initial_horizon or 2 * self.p
        iterations = 1
        while True:
            if horizon > max_horizon:
                raise NonTermination(f"no strongly synchronizing window within horizon {max_horizon}")
            hit = self.scan(tape, horizon, meter)
            if hit is not None:
                return hit[0], hit[1], horizon, iterations
            horizon *= 2
            iterations += 1


def sample_syncword(model: ArrivalModel, policy: Policy, g: CompatibilityGraph, tape: InputTape,
                    initial_horizon: Optional[int] = None, max_horizon: int = DEFAULT_MAX_HORIZON,
                    meter: Optional[OperationMeter] = None, method: str = "vectorized",
                    kernel: Optional[WordKernel] = None, control: Optional[SyncControl] = None) -> SampleReport:
    """Exact stationary word-profile for deterministic patience (latency allowed).

    ``method="generic"`` drives the plain engine loop with an event window
    and the full predicate; the other methods use :class:`SyncControl` scans.
    ``kernel`` and ``control`` may be shared between calls on the same model.
    """
    p = model.p
    if g.n != model.n:
        raise ValueError(f"graph has {g.n} classes but mu has {model.n}")
    kernel = kernel or WordKernel(g, policy, p)
    h0 = initial_horizon or 2 * p

    def fold(x, tape_, t):
        cls, draws = tape_.arrays(t, 0)
        return kernel.fold(x, cls, draws, meter)

    if method == "generic":
        control_step, spec = syncword_control_spec(g, p, kernel, meter)
        report = sample_by_control(control_step, None, spec, tape, h0, max_horizon, meter, fold)
        return report

    control = control or SyncControl(g, p, method)

    def scan(tape_, horizon, meter_):
        hit = control.scan(tape_, horizon, meter_)
        return None if hit is None else (hit[0], hit)

    def target(hit):
        t, window = hit
        _, draws = tape.arrays(t - p, t)
        return kernel.fold(empty_word(p), window[p:], draws, meter)

    spec = ControlSpec(start=(), is_endpoint=lambda y: False, target=target, scan=scan)
    report = sample_by_control(None, None, spec, tape, h0, max_horizon, meter, fold)
    return report


def syncword_control_spec(g: CompatibilityGraph, p: int, kernel: WordKernel,
                          meter: Optional[OperationMeter] = None):
    """Generic-engine form of the sliding window, one event at a time.

    The control state is the tuple of the last (up to) ``2p`` events, so the
    target can replay the second-half policy draws. Returns
    ``(control_step, spec)`` for :func:`~perfmatch.engine.sample_by_control`.
    """

    def control_step(w, ev):
        return window_step(w, ev, p)

    def is_endpoint(w):
        return len(w) == 2 * p and is_strongly_synchronizing([e.cls for e in w], g, meter)

    def target(w):
        half = w[p:]
        return kernel.fold(empty_word(p), [e.cls for e in half], [e.draw for e in half], meter)

    return control_step, ControlSpec(start=(), is_endpoint=is_endpoint, target=target)


def cftp_states(model: ArrivalModel, g: CompatibilityGraph) -> list[tuple]:
    return word_states(g.n, model.p, latency=model.gamma > 0)
