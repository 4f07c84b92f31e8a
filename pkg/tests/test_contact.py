import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from lrcontact.contact import (
    GraphicalRep,
    coupled_thinning,
    path_search_oracle,
    rep_from_marks,
    run_contact,
    sample_graph_rep,
    sample_rep,
    thinning_ladder,
    two_vertex_generator,
    two_vertex_oracle,
)
from lrcontact.graph import GraphParams, sample_window
from lrcontact.seeding import stream


def small_graph(rng, n):
    pairs = list(itertools.combinations(range(n), 2))
    k = rng.integers(0, len(pairs) + 1)
    pick = rng.choice(len(pairs), size=k, replace=False)
    return np.arange(n), np.array([pairs[i] for i in pick], dtype=np.int64).reshape(-1, 2)


def random_small_rep(seed):
    rng = stream(seed, 0, "small")
    n = int(rng.integers(1, 5))
    vertices, edges = small_graph(rng, n)
    lam = float(rng.uniform(0.2, 3.0))
    horizon = float(rng.uniform(0.5, 3.0))
    rep = sample_graph_rep(vertices, edges, lam, horizon, seed)
    return rep, rng


def test_zero_rate_has_no_transmissions():
    w = sample_window(GraphParams(3.0, 50, 0, 1))
    rep = sample_rep(w, 0.0, 5.0, 3)
    assert rep.tr_times.size == 0
    assert rep.rec_times.size > 0


def test_marks_sorted_and_in_range():
    w = sample_window(GraphParams(3.0, 100, 0, 1))
    rep = sample_rep(w, 0.7, 4.0, 3)
    for v in range(rep.n_vertices):
        r = rep.recoveries(v)
        assert np.all(np.diff(r) > 0) and np.all((r >= 0) & (r < 4.0))
    for e in range(rep.n_edges):
        r = rep.transmissions(e)
        assert np.all(np.diff(r) > 0) and np.all((r >= 0) & (r < 4.0))


def test_rep_deterministic():
    w = sample_window(GraphParams(3.0, 60, 0, 1))
    a, b = sample_rep(w, 0.5, 3.0, 9), sample_rep(w, 0.5, 3.0, 9)
    assert a.to_json() == b.to_json()
    back = GraphicalRep.from_json(a.to_json())
    assert np.array_equal(back.rec_times, a.rec_times) and np.array_equal(back.tr_ptr, a.tr_ptr)


def test_mark_count_means():
    n = 100_000
    rep = sample_graph_rep(np.arange(n), np.stack([np.arange(n - 1), np.arange(1, n)], 1), 0.3, 2.0, 5)
    rec = np.diff(rep.rec_ptr)
    tr = np.diff(rep.tr_ptr)
    assert abs(rec.mean() - 2.0) < 4 * math.sqrt(2.0 / n)
    assert abs(tr.mean() - 0.6) < 4 * math.sqrt(0.6 / (n - 1))


def test_empty_initial_set():
    rep, _ = random_small_rep(1)
    tr = run_contact(rep, [])
    assert tr.extinction_time == 0.0 and tr.events == []


def test_isolated_vertex_dies_at_first_recovery():
    rep = rep_from_marks([0], np.empty((0, 2)), [[0.3, 0.9]], [], 5.0, 2.0)
    tr = run_contact(rep, [0])
    assert tr.extinction_time == 0.3


def test_survival_when_no_recovery():
    rep = rep_from_marks([0, 1], [[0, 1]], [[], [0.5]], [[0.2]], 1.0, 1.0)
    tr = run_contact(rep, [1])
    assert tr.survived
    assert tr.infected_at(0.99) == {0}


def test_undirected_transmission():
    rep = rep_from_marks([0, 1], [[0, 1]], [[0.8], [0.9]], [[0.5]], 1.0, 1.0)
    assert run_contact(rep, [1]).infected_at(0.6) == {0, 1}
    assert run_contact(rep, [0]).infected_at(0.6) == {0, 1}


@pytest.mark.parametrize("seed", range(200))
def test_matches_path_oracle(seed):
    rep, rng = random_small_rep(seed)
    verts = rep.vertices.tolist()
    initial = [v for v in verts if rng.random() < 0.5] or verts[:1]
    tr = run_contact(rep, initial)
    qs = sorted(rng.uniform(0, rep.horizon, size=15).tolist())
    assert [tr.infected_at(q) for q in qs] == path_search_oracle(rep, initial, qs)


@given(st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_additive_in_initial_set(seed):
    w = sample_window(GraphParams(3.0, 30, 0, seed))
    rep = sample_rep(w, 1.5, 4.0, seed)
    rng = stream(seed, 0, "sets")
    big = [v for v in range(-30, 31) if rng.random() < 0.3]
    small = [v for v in big if rng.random() < 0.5]
    tb, ts = run_contact(rep, big), run_contact(rep, small)
    times = sorted({t for t, _, _ in tb.events + ts.events})
    for t in times:
        assert ts.infected_at(t) <= tb.infected_at(t)


@given(st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_restart_reproduces_tail(seed):
    w = sample_window(GraphParams(3.0, 30, 0, seed))
    rep = sample_rep(w, 2.0, 5.0, seed)
    tr = run_contact(rep, [0])
    if len(tr.events) < 4:
        return
    k = len(tr.events) // 2
    t0 = 0.5 * (tr.events[k - 1][0] + tr.events[k][0])
    again = run_contact(rep, tr.infected_at(t0), t_start=t0)
    start = len(again.initial)  # the restart logs its initial set at t0
    assert again.events[start:] == tr.events[k:]
    assert again.extinction_time == tr.extinction_time


def test_extinct_stays_extinct():
    w = sample_window(GraphParams(3.0, 40, 0, 2))
    rep = sample_rep(w, 0.3, 20.0, 4)
    tr = run_contact(rep, [0, 1, 2])
    assert not tr.survived
    assert tr.infected_at(tr.extinction_time) == frozenset()
    assert all(t <= tr.extinction_time for t, _, _ in tr.events)


def test_thinning_edge_cases():
    rep, _ = random_small_rep(3)
    assert coupled_thinning(rep, rep.lam, 1) is rep
    assert coupled_thinning(rep, 0.0, 1).tr_times.size == 0
    with pytest.raises(ValueError):
        coupled_thinning(rep, rep.lam * 2, 1)


def test_thinning_fraction():
    n = 200_000
    rep = sample_graph_rep(np.arange(n), np.stack([np.arange(n - 1), np.arange(1, n)], 1), 1.0, 5.0, 2)
    thin = coupled_thinning(rep, 0.3, 7)
    m = rep.tr_times.size
    assert m > 10**6 - 10**5
    f = thin.tr_times.size / m
    assert abs(f - 0.3) < 4 * math.sqrt(0.3 * 0.7 / m)
    assert set(thin.tr_times.tolist()) <= set(rep.tr_times.tolist())


def test_ladder_nested():
    w = sample_window(GraphParams(3.0, 50, 0, 1))
    rep = sample_rep(w, 2.0, 5.0, 1)
    reps = thinning_ladder(rep, [0.0, 0.5, 1.0, 2.0], 3)
    for a, b in zip(reps, reps[1:]):
        assert set(a.tr_times.tolist()) <= set(b.tr_times.tolist())
    assert reps[-1].tr_times.size == rep.tr_times.size


def test_two_vertex_trivial():
    assert np.array_equal(two_vertex_oracle(1.0, 0.0, (1, 1)), [0, 0, 0, 1])
    t = 0.7
    p = two_vertex_oracle(0.0, t, (1, 1))
    marg0 = p[1] + p[3]
    assert marg0 == pytest.approx(math.exp(-t), abs=1e-14)
    assert p[3] == pytest.approx(math.exp(-2 * t), abs=1e-14)


@pytest.mark.parametrize("lam,t", [(1.0, 1.0), (0.3, 2.5), (4.0, 0.4)])
def test_two_vertex_matches_expm(lam, t):
    x = np.zeros(4)
    x[1] = 1
    ref = x @ expm(two_vertex_generator(lam) * t)
    assert np.allclose(two_vertex_oracle(lam, t), ref, atol=1e-13)
    assert two_vertex_oracle(lam, t).sum() == pytest.approx(1.0, abs=1e-13)


def test_two_vertex_monte_carlo():
    runs = 20_000
    counts = np.zeros(4)
    for r in range(runs):
        rep = sample_graph_rep([0, 1], [[0, 1]], 1.0, 1.0 + 1e-9, 1000 + r)
        s = run_contact(rep, [0]).infected_at(1.0)
        counts[(0 in s) + 2 * (1 in s)] += 1
    p = two_vertex_oracle(1.0, 1.0)
    f = counts / runs
    se = np.sqrt(p * (1 - p) / runs)
    assert np.all(np.abs(f - p) < 3.5 * se + 1e-12)


def test_trace_csv():
    rep = rep_from_marks([0, 1], [[0, 1]], [[0.8], [0.9]], [[0.5]], 1.0, 1.0)
    csv = run_contact(rep, [0]).to_csv().splitlines()
    assert csv[0] == "time,vertex,event"
    assert csv[1].endswith(",0,infected")
