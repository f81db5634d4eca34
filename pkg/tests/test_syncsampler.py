from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perfmatch.dominated import sample_dominated
from perfmatch.graph import complete_graph, paw
from perfmatch.models import OperationMeter, Policy, WordKernel, apply_word, parse_word, word_states
from perfmatch.randomness import ArrivalModel, DeterministicPatience, InputTape
from perfmatch.syncsampler import (
    SyncControl,
    endpoint_state,
    is_strongly_synchronizing,
    is_synchronizing_bruteforce,
    sample_syncword,
    scan_incremental,
    scan_vectorized,
    window_step,
)

G = paw()


def test_window_step():
    assert window_step((), 3, 2) == (3,)
    assert window_step((1, 2, 3, 4), 5, 2) == (2, 3, 4, 5)
    w = ()
    for v in range(1, 8):
        w = window_step(w, v, 2)
    assert w == (4, 5, 6, 7)


def test_predicate_examples(g_paw):
    assert is_strongly_synchronizing(parse_word("1131"), g_paw)
    assert not is_strongly_synchronizing(parse_word("1121"), g_paw)
    assert sum(is_strongly_synchronizing(w, g_paw) for w in product(range(1, 5), repeat=2)) == 8
    with pytest.raises(ValueError):
        is_strongly_synchronizing((1, 2, 3), g_paw)


def test_predicate_counts_comparisons(g_paw):
    m = OperationMeter()
    assert is_strongly_synchronizing((1, 3, 3, 1), g_paw, m)
    assert m.count == 3  # p(p+1)/2 letter pairs
    m = OperationMeter()
    is_strongly_synchronizing((-1, -1, 3, 1), g_paw, m)
    assert m.count == 0


def test_endpoint_state_examples(g_paw):
    fcfm = Policy("fcfm")
    assert endpoint_state((1, 3), fcfm, g_paw) == (3,)
    with pytest.raises(ValueError):
        endpoint_state((1, 2), fcfm, g_paw)
    w = (-1, -1, -1, 2, 4, 1)
    assert is_strongly_synchronizing(w, g_paw)
    assert endpoint_state(w, fcfm, g_paw) == apply_word((0, 0, 0), (2, 4, 1), fcfm, g_paw)


@pytest.mark.parametrize("pol", ["fcfm", "ml", "priority:3,1,4,2"])
def test_endpoint_state_exhaustive(pol):
    from perfmatch.models import parse_policy

    policy = parse_policy(pol)
    states = word_states(4, 2)
    for w in product(range(1, 5), repeat=4):
        if is_strongly_synchronizing(w, G):
            z = endpoint_state(w, policy, G)
            assert all(apply_word(x, w, policy, G) == z for x in states)


def test_bruteforce_examples():
    k2 = complete_graph(2)
    fcfm = Policy("fcfm")
    # 1 is incompatible with itself, so "11" is strongly synchronizing: every
    # start folds to "1"
    assert {apply_word(x, (1, 1), fcfm, k2) for x in word_states(2, 1)} == {(1,)}
    assert is_synchronizing_bruteforce((1, 1), fcfm, k2, 1)
    # "12": from "0" the 2 matches the stored 1, from "2" the 2 stays
    assert apply_word((0,), (1, 2), fcfm, k2) != apply_word((2,), (1, 2), fcfm, k2)
    assert not is_synchronizing_bruteforce((1, 2), fcfm, k2, 1)
    assert is_synchronizing_bruteforce((1, 1, 3, 1), Policy("fcfm"), G, 2)
    with pytest.raises(ValueError):
        is_synchronizing_bruteforce((1,) * 20, Policy("fcfm"), G, 10, max_states=1000)


def test_bruteforce_latency_maps_to_zero():
    # after p latency letters every state is (-1,)^p, which reads as 0_p
    w = (1, 2, -1, -1)
    assert is_synchronizing_bruteforce(w, Policy("fcfm"), G, 2, latency=True)


def full_scan(cls, p):
    for end in range(2 * p, len(cls) + 1):
        if is_strongly_synchronizing(tuple(cls[end - 2 * p : end]), G):
            return end
    return None


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 4), st.lists(st.sampled_from([-1, 1, 2, 3, 4]), max_size=60))
def test_scans_agree(p, cls):
    arr = np.array(cls, dtype=np.int64)
    e1, o1 = scan_vectorized(arr, p, G.adjacency_matrix())
    e2, o2 = scan_incremental(cls, p, G)
    assert (e1, o1) == (e2, o2)
    assert e1 == full_scan(cls, p)
    assert e1 is None or e1 >= 2 * p


@pytest.mark.parametrize("method", ["incremental", "full", "generic"])
def test_methods_agree(method):
    p = 3
    model = ArrivalModel.uniform(4, DeterministicPatience(p), 0.1)
    pol = Policy("ml")
    k = WordKernel(G, pol, p)
    for s in range(100):
        tape = InputTape(model, s)
        a = sample_syncword(model, pol, G, tape, kernel=k)
        b = sample_syncword(model, pol, G, tape, kernel=k, method=method)
        assert (a.sample, a.detection_time, a.start_time) == (b.sample, b.detection_time, b.start_time)


def test_incremental_ops_match_vectorized():
    p = 3
    model = ArrivalModel.uniform(4, DeterministicPatience(p))
    for s in range(100):
        tape = InputTape(model, s)
        m1, m2 = OperationMeter(), OperationMeter()
        sample_syncword(model, Policy("fcfm"), G, tape, meter=m1)
        sample_syncword(model, Policy("fcfm"), G, tape, meter=m2, method="incremental")
        assert m1.count == m2.count


def test_latency_model_matches_dominated():
    p = 3
    model = ArrivalModel.uniform(4, DeterministicPatience(p), 0.5)
    for pol in (Policy("fcfm"), Policy("ml")):
        k = WordKernel(G, pol, p)
        for s in range(200):
            tape = InputTape(model, s)
            a = sample_syncword(model, pol, G, tape, kernel=k)
            b = sample_dominated(model, pol, G, tape, kernel=k)
            assert a.sample == b.sample


def test_report_fields():
    p = 2
    model = ArrivalModel.uniform(4, DeterministicPatience(p))
    rep = sample_syncword(model, Policy("fcfm"), G, InputTape(model, 0))
    assert rep.start_time == -2 * p * 2 ** (rep.iterations - 1)
    assert rep.start_time + 2 * p <= rep.detection_time <= 0
    assert len(rep.sample) == p


def test_graph_model_mismatch():
    model = ArrivalModel.uniform(3, DeterministicPatience(1))
    with pytest.raises(ValueError):
        sample_syncword(model, Policy("fcfm"), G, InputTape(model, 0))


def test_control_reports_window():
    ctl = SyncControl(G, 2)
    model = ArrivalModel.uniform(4, DeterministicPatience(2))
    tape = InputTape(model, 5)
    t, w, h, it = ctl.locate(tape)
    assert is_strongly_synchronizing(w, G)
    assert h == 4 * 2 ** (it - 1)
