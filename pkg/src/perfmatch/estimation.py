"""Monte-Carlo estimators over perfect samples.

Loss rates are estimated by taking a perfect sample, drawing one further
arrival and recording whether the head item leaves unmatched. Replication
``r`` always uses the tape seeded by ``derive_replication_seed(seed, r)``,
so results do not depend on the number of worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .dominated import sample_dominated
from .engine import DEFAULT_MAX_HORIZON, SampleReport, primitive_cftp
from .graph import CompatibilityGraph
from .models import OperationMeter, Policy, WordKernel, empty_word, profile_step, word_states
from .randomness import LATENCY, ArrivalModel, InputTape, derive_replication_seed
from .syncsampler import SyncControl, sample_syncword

SAMPLERS = ("algo2", "algo3", "cftp")
# stream 1 of a replication seed holds the extra arrival of the loss estimator
LOSS_STREAM = 1


class Sampler:
    """One sampler bound to a model, graph and policy, with shared caches."""

    def __init__(self, name: str, model: ArrivalModel, policy: Policy, g: CompatibilityGraph,
                 max_horizon: int = DEFAULT_MAX_HORIZON, cftp_horizon: Optional[int] = None):
        if name not in SAMPLERS + ("biased",):
            raise ValueError(f"unknown sampler {name!r}")
        self.name = name
        self.model = model
        self.policy = policy
        self.g = g
        self.max_horizon = max_horizon
        self.kernel = WordKernel(g, policy, model.p) if model.deterministic else None
        self.control = SyncControl(g, model.p) if name == "algo3" else None
        self._states = None
        if name in ("cftp", "biased") and not model.deterministic:
            raise ValueError(f"{name} needs the finite word-profile state space")
        if name == "cftp":
            self._states = word_states(g.n, model.p, latency=model.gamma > 0)
        self.cftp_horizon = cftp_horizon or (2 * model.p if model.deterministic else 1)

    def draw(self, tape: InputTape, meter: Optional[OperationMeter] = None) -> SampleReport:
        m, pol, g = self.model, self.policy, self.g
        if self.name == "algo3":
            return sample_syncword(m, pol, g, tape, max_horizon=self.max_horizon, meter=meter,
                                   kernel=self.kernel, control=self.control)
        if self.name == "algo2":
            return sample_dominated(m, pol, g, tape, max_horizon=self.max_horizon, meter=meter,
                                    kernel=self.kernel)
        if self.name == "cftp":
            k = self.kernel
            letters = m.p
            return primitive_cftp(lambda x, ev, mt: k.step(x, ev.cls, ev.draw, mt), self._states, tape,
                                  initial_horizon=self.cftp_horizon, max_horizon=self.max_horizon,
                                  meter=meter, letters=letters)
        # negative control: no coalescence check, fixed horizon 2p from 0_p
        p = m.p
        cls, draws = tape.arrays(-2 * p, 0)
        x = self.kernel.fold(empty_word(p), cls, draws, meter)
        return SampleReport(x, 1, -2 * p, -2 * p, 2 * p, meter.count if meter else 0)


def head_loss(state, arrival: int, draw: float, kernel: WordKernel) -> int:
    """Class lost at the next step (0 if none): head letter present, not matched."""
    head = state[0]
    if head <= 0:
        return 0
    _, pos = kernel.transition(state, arrival, draw)
    return 0 if pos == 0 else head


@dataclass
class LossEstimate:
    """Per-class loss rates with normal-approximation standard errors."""

    per_class: tuple
    per_class_se: tuple
    total: float
    total_se: float
    reps: int
    counts: tuple = ()

    def check(self) -> None:
        if not all(0.0 <= r <= 1.0 for r in self.per_class):
            raise AssertionError("loss rate outside [0, 1]")
        if abs(self.total - math.fsum(self.per_class)) > 1e-12:
            raise AssertionError("total loss differs from the sum over classes")

    def to_dict(self) -> dict:
        return {
            "reps": self.reps,
            "per_class": list(self.per_class),
            "per_class_se": list(self.per_class_se),
            "counts": list(self.counts),
            "total": self.total,
            "total_se": self.total_se,
        }


def loss_from_outcomes(lost: np.ndarray, n: int) -> LossEstimate:
    """Estimate from per-replication lost classes (0 = no loss)."""
    reps = len(lost)
    counts = tuple(int(np.count_nonzero(lost == i)) for i in range(1, n + 1))
    rates = tuple(c / reps for c in counts)
    ses = tuple(math.sqrt(r * (1 - r) / reps) for r in rates)
    total_count = sum(counts)
    total = total_count / reps
    return LossEstimate(rates, ses, total, math.sqrt(total * (1 - total) / reps), reps, counts)


def _run(fn: Callable[[int], object], reps: int, jobs: int) -> list:
    """``[fn(0), ..., fn(reps - 1)]``, optionally over worker processes."""
    if jobs <= 1 or reps < 2:
        return [fn(r) for r in range(reps)]
    chunk = max(1, reps // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, range(reps), chunksize=chunk))


class _LossJob:
    """Picklable per-replication worker for one or more policies."""

    def __init__(self, model, policies, g, sampler, seed, max_horizon):
        self.model = model
        self.policies = tuple(policies)
        self.g = g
        self.sampler = sampler
        self.seed = seed
        self.max_horizon = max_horizon
        self._samplers = None

    def __getstate__(self):
        d = self.__dict__.copy()
        d["_samplers"] = None
        return d

    def __call__(self, r: int) -> tuple:
        if self._samplers is None:
            self._samplers = [Sampler(self.sampler, self.model, pol, self.g, self.max_horizon)
                              for pol in self.policies]
        s = derive_replication_seed(self.seed, r)
        tape = InputTape(self.model, s)
        extra = InputTape(self.model, s, LOSS_STREAM).event_at(-1)
        out = []
        hit = None
        for smp in self._samplers:
            if smp.name == "algo3":
                # detection does not depend on the policy: reuse it
                if hit is None:
                    hit = smp.control.locate(tape, max_horizon=self.max_horizon)
                x = _finish_sync(smp.kernel, tape, hit[0], hit[1])
            else:
                x = smp.draw(tape).sample
            out.append(head_loss(x, extra.cls, extra.draw, smp.kernel))
        return tuple(out)


def _finish_sync(kernel: WordKernel, tape: InputTape, t: int, window: tuple):
    p = kernel.p
    cls, draws = tape.arrays(t - p, 0)
    x = kernel.fold(empty_word(p), cls[:p], draws[:p])
    return kernel.fold(x, cls[p:], draws[p:])


def _check_loss_model(model: ArrivalModel):
    if not model.deterministic:
        raise ValueError("loss estimation is defined on the word-profile chain (deterministic patience)")


def estimate_loss(model: ArrivalModel, policy: Policy, g: CompatibilityGraph, reps: int, seed: int,
                  sampler: str = "algo3", jobs: int = 1,
                  max_horizon: int = DEFAULT_MAX_HORIZON) -> LossEstimate:
    if reps < 1:
        raise ValueError("reps must be at least 1")
    _check_loss_model(model)
    job = _LossJob(model, [policy], g, sampler, seed, max_horizon)
    lost = np.array([o[0] for o in _run(job, reps, jobs)], dtype=np.int64)
    return loss_from_outcomes(lost, model.n)


@dataclass
class PolicyComparison:
    policies: tuple
    estimates: dict
    # paired differences of each policy against the first one
    differences: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "policies": [p.name for p in self.policies],
            "estimates": {k: v.to_dict() for k, v in self.estimates.items()},
            "differences": self.differences,
        }


def _paired(a: np.ndarray, b: np.ndarray) -> dict:
    d = a.astype(float) - b.astype(float)
    n = len(d)
    se = float(np.std(d, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return {"mean": float(d.mean()), "se": se}


def compare_policies(model: ArrivalModel, policies: Sequence[Policy], g: CompatibilityGraph, reps: int,
                     seed: int, sampler: str = "algo3", jobs: int = 1,
                     max_horizon: int = DEFAULT_MAX_HORIZON) -> PolicyComparison:
    """Loss estimates for several policies on common random numbers."""
    if len(policies) < 2:
        raise ValueError("compare_policies needs at least two policies")
    _check_loss_model(model)
    job = _LossJob(model, policies, g, sampler, seed, max_horizon)
    lost = np.array(_run(job, reps, jobs), dtype=np.int64).reshape(reps, len(policies))
    names = []
    for pol in policies:
        # a policy listed twice gets a positional suffix
        name = pol.name
        while name in names:
            name += "'"
        names.append(name)
    estimates = {nm: loss_from_outcomes(lost[:, k], model.n) for k, nm in enumerate(names)}
    diffs = {}
    ref = lost[:, 0]
    for k in range(1, len(policies)):
        col = lost[:, k]
        entry = {"total": _paired(col > 0, ref > 0)}
        for i in range(1, model.n + 1):
            entry[f"class_{i}"] = _paired(col == i, ref == i)
        diffs[f"{names[k]} - {names[0]}"] = entry
    return PolicyComparison(tuple(policies), estimates, diffs)


class _OpsJob:
    def __init__(self, model, policy, g, samplers, seed, max_horizon, cftp_horizon):
        self.args = (model, policy, g, tuple(samplers), seed, max_horizon, cftp_horizon)
        self._cache = None

    def __getstate__(self):
        return {"args": self.args, "_cache": None}

    def __call__(self, r: int) -> tuple:
        model, policy, g, names, seed, max_horizon, cftp_horizon = self.args
        if self._cache is None:
            self._cache = [Sampler(nm, model, policy, g, max_horizon, cftp_horizon) for nm in names]
        tape = InputTape(model, derive_replication_seed(seed, r))
        out = []
        for smp in self._cache:
            meter = OperationMeter()
            rep = smp.draw(tape, meter)
            out.append((meter.count, -rep.start_time))
        return tuple(out)


def compare_samplers_ops(model: ArrivalModel, policy: Policy, g: CompatibilityGraph,
                         samplers: Sequence[str], reps: int, seed: int, jobs: int = 1,
                         max_horizon: int = DEFAULT_MAX_HORIZON,
                         cftp_horizon: Optional[int] = None) -> dict:
    """Mean operation counts per sampler over shared tapes.

    Returns ``{name: {"mean_ops", "se_ops", "mean_T", "ops": array}}``.
    """
    job = _OpsJob(model, policy, g, samplers, seed, max_horizon, cftp_horizon)
    rows = np.array(_run(job, reps, jobs), dtype=np.int64).reshape(reps, len(samplers), 2)
    out = {}
    for k, nm in enumerate(samplers):
        ops = rows[:, k, 0]
        out[nm] = {
            "mean_ops": float(ops.mean()),
            "se_ops": float(ops.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0,
            "mean_T": float(rows[:, k, 1].mean()),
            "ops": ops,
        }
    return out


def _letter_stream(model: ArrivalModel, rng: np.random.Generator, size: int):
    probs = np.array([(1 - model.gamma) * m for m in model.mu] + [model.gamma])
    letters = np.array(list(range(1, model.n + 1)) + [LATENCY])
    cls = letters[rng.choice(len(letters), size=size, p=probs / probs.sum())]
    return cls.tolist(), rng.random(size).tolist()


def forward_word_run(model: ArrivalModel, policy: Policy, g: CompatibilityGraph, steps: int,
                     seed: int, burn_in: int = 1000, chunk: int = 1 << 16):
    """Visit counts of the word-profile chain and per-class head-loss counts.

    The chain starts from the empty word, runs ``burn_in`` unrecorded steps,
    then records the state before each of ``steps`` transitions.
    """
    p = model.p
    kernel = WordKernel(g, policy, p)
    rng = np.random.default_rng(seed)
    x = empty_word(p)
    cls, draws = _letter_stream(model, rng, burn_in)
    x = kernel.fold(x, cls, draws)
    visits: dict = {}
    losses = [0] * (model.n + 1)
    cache = kernel._cache
    done = 0
    while done < steps:
        k = min(chunk, steps - done)
        cls, draws = _letter_stream(model, rng, k)
        for a, u in zip(cls, draws):
            visits[x] = visits.get(x, 0) + 1
            key = (x, a)
            hit = cache.get(key)
            if hit is None:
                kernel.transition(x, a)
                hit = cache[key]
            outs = hit[0]
            nxt, pos = outs[0] if len(outs) == 1 else outs[min(int(u * len(outs)), len(outs) - 1)]
            if x[0] > 0 and pos != 0:
                losses[x[0]] += 1
            x = nxt
        done += k
    return visits, losses[1:]


def forward_profile_run(model: ArrivalModel, policy: Policy, g: CompatibilityGraph, steps: int,
                        seed: int, burn_in: int = 1000) -> dict:
    """Visit counts of the general profile chain, seeded forward simulation."""
    tape = InputTape(model, seed, stream=2)
    x: tuple = ()
    visits: dict = {}
    # forward time reads the tape backwards from -1; the law is the same
    for j in range(burn_in + steps):
        ev = tape.event_at(-1 - j)
        if j >= burn_in:
            visits[x] = visits.get(x, 0) + 1
        x = profile_step(x, ev, policy, g)
    return visits


@dataclass
class AgreementReport:
    statistic: float
    dof: int
    pvalue: float
    tv: float
    passed: bool
    cells: int
    aggregated: int
    alpha: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def agreement_test(sample_counts: dict, forward_counts: dict, alpha: float = 0.01,
                   min_expected: float = 5.0) -> AgreementReport:
    """Two-sample chi-square (homogeneity) test plus total-variation distance.

    Cells whose expected count in either sample falls below ``min_expected``
    are pooled into one cell; ``aggregated`` reports how many were pooled.
    """
    keys = sorted(set(sample_counts) | set(forward_counts), key=repr)
    a = np.array([sample_counts.get(k, 0) for k in keys], dtype=float)
    b = np.array([forward_counts.get(k, 0) for k in keys], dtype=float)
    na, nb = a.sum(), b.sum()
    tv = 0.5 * float(np.abs(a / na - b / nb).sum())
    pooled = (a + b) / (na + nb)
    small = (pooled * min(na, nb)) < min_expected
    if small.any():
        a = np.append(a[~small], a[small].sum())
        b = np.append(b[~small], b[small].sum())
        if a[-1] + b[-1] == 0:
            a, b = a[:-1], b[:-1]
    if len(a) < 2:
        return AgreementReport(0.0, 0, 1.0, tv, True, len(a), int(small.sum()), alpha)
    chi2, pval, dof, _ = stats.chi2_contingency(np.vstack([a, b]), correction=False)
    return AgreementReport(float(chi2), int(dof), float(pval), tv, bool(pval > alpha), len(a),
                           int(small.sum()), alpha)


def perfect_sample_counts(model: ArrivalModel, policy: Policy, g: CompatibilityGraph, sampler: str,
                          reps: int, seed: int) -> dict:
    smp = Sampler(sampler, model, policy, g)
    counts: dict = {}
    for r in range(reps):
        x = smp.draw(InputTape(model, derive_replication_seed(seed, r))).sample
        counts[x] = counts.get(x, 0) + 1
    return counts


def distribution_agreement(model: ArrivalModel, policy: Policy, g: CompatibilityGraph, sampler: str,
                           reps: int, forward_steps: int, seed: int, alpha: float = 0.01) -> AgreementReport:
    """Perfect-sample law against a forward-run empirical law."""
    counts = perfect_sample_counts(model, policy, g, sampler, reps, seed)
    fwd_seed = derive_replication_seed(seed, 1 << 40)
    if model.deterministic:
        visits, _ = forward_word_run(model, policy, g, forward_steps, fwd_seed)
    else:
        visits = forward_profile_run(model, policy, g, forward_steps, fwd_seed)
    return agreement_test(counts, visits, alpha)


class _SampleJob:
    def __init__(self, model, policy, g, sampler, seed, max_horizon, count_ops):
        self.args = (model, policy, g, sampler, seed, max_horizon, count_ops)
        self._smp = None

    def __getstate__(self):
        return {"args": self.args, "_smp": None}

    def __call__(self, r: int) -> dict:
        model, policy, g, sampler, seed, max_horizon, count_ops = self.args
        if self._smp is None:
            self._smp = Sampler(sampler, model, policy, g, max_horizon)
        s = derive_replication_seed(seed, r)
        meter = OperationMeter() if count_ops else None
        rep = self._smp.draw(InputTape(model, s), meter)
        return {
            "rep": r,
            "seed": s,
            "sample": list(rep.sample) if model.deterministic else [list(it) for it in rep.sample],
            "T": rep.start_time,
            "detection_time": rep.detection_time,
            "iterations": rep.iterations,
            "operations": meter.count if meter is not None else None,
        }


def sample_replications(model: ArrivalModel, policy: Policy, g: CompatibilityGraph, sampler: str,
                        reps: int, seed: int, jobs: int = 1, max_horizon: int = DEFAULT_MAX_HORIZON,
                        count_ops: bool = True) -> list[dict]:
    """One record per replication, ordered by replication index."""
    return _run(_SampleJob(model, policy, g, sampler, seed, max_horizon, count_ops), reps, jobs)
