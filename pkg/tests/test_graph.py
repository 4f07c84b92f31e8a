import json
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrcontact.graph import (
    GraphParams,
    GraphWindow,
    WindowTooLarge,
    buffer_for_error,
    edge_open_probability,
    exterior_crossing_bound,
    from_edges,
    one_sided_exterior_sum,
    over_origin_sum,
    sample_window,
)


def test_unit_edges_always_open():
    assert edge_open_probability(1, 3.7) == 1.0


def test_length_two_at_cubic_tail():
    assert edge_open_probability(2, 3) == 0.125


def test_length_ten_matches_high_precision():
    with mp.workdps(30):
        ref = mp.mpf(10) ** mp.mpf(-2.5)
    assert edge_open_probability(10, 2.5) == pytest.approx(float(ref), rel=1e-14)
    assert edge_open_probability(10, 2.5) == pytest.approx(3.1623e-3, rel=1e-4)


def test_self_loop_rejected():
    with pytest.raises(ValueError):
        edge_open_probability(0, 3)


def test_params_validation():
    with pytest.raises(ValueError):
        GraphParams(s=0, half_width=5)
    with pytest.raises(ValueError):
        GraphParams(s=3, half_width=5, buffer=5)


def test_window_contains_unit_edges_and_is_deterministic():
    p = GraphParams(s=2.5, half_width=300, buffer=0, seed=11)
    w1, w2 = sample_window(p), sample_window(p)
    e = w1.all_edges
    units = e[e[:, 1] - e[:, 0] == 1]
    assert units.shape[0] == 600
    assert np.array_equal(e, w2.all_edges)
    assert np.array_equal(w1.uniforms, w2.uniforms)
    assert np.all(e[:, 0] < e[:, 1])
    assert e.min() >= -300 and e.max() <= 300


def test_different_seed_changes_edges():
    a = sample_window(GraphParams(2.5, 300, 0, 1))
    b = sample_window(GraphParams(2.5, 300, 0, 2))
    assert not np.array_equal(a.all_edges, b.all_edges)


def test_uniforms_below_threshold():
    w = sample_window(GraphParams(2.2, 2000, 0, 3))
    lengths = (w.right - w.left).astype(float)
    assert np.all(w.uniforms < lengths ** (-2.2))
    assert len(set(zip(w.left.tolist(), w.right.tolist()))) == w.n_long_edges


def test_open_frequency_near_formula():
    w = sample_window(GraphParams(3.0, 200_000, 0, 5))
    n = w.params.n_vertices
    for ell in range(2, 8):
        k = w.edges_by_length(ell).size
        m = n - ell
        q = ell**-3.0
        assert abs(k / m - q) < 4 * math.sqrt(q * (1 - q) / m)


@given(s=st.floats(2.0, 5.0), ds=st.floats(0.0, 2.0), seed=st.integers(0, 2**32))
@settings(max_examples=25, deadline=None)
def test_monotone_coupling_in_s(s, ds, seed):
    w = sample_window(GraphParams(s, 400, 0, seed))
    w2 = w.at_exponent(s + ds)
    big = set(zip(w.left.tolist(), w.right.tolist()))
    small = set(zip(w2.left.tolist(), w2.right.tolist()))
    assert small <= big


def test_coupling_thins_in_law():
    w = sample_window(GraphParams(2.5, 100_000, 0, 8))
    w2 = w.at_exponent(3.0)
    n = w.params.n_vertices
    for ell in (2, 3, 4):
        k = w2.edges_by_length(ell).size
        q = ell**-3.0
        m = n - ell
        assert abs(k / m - q) < 4 * math.sqrt(q * (1 - q) / m)


def test_json_roundtrip():
    w = sample_window(GraphParams(3.0, 80, 10, 4))
    obj = json.loads(w.to_json())
    assert obj["halfWidth"] == 80 and obj["buffer"] == 10
    assert obj["edges"] == sorted(obj["edges"])
    back = GraphWindow.from_json(w.to_json())
    assert np.array_equal(back.all_edges, w.all_edges)


def test_from_edges_validates():
    p = GraphParams(3.0, 5)
    with pytest.raises(ValueError):
        from_edges(p, [[0, 9]])


def test_memory_budget_enforced():
    with pytest.raises(WindowTooLarge):
        sample_window(GraphParams(0.5, 10**6))


def _brute_one_sided(d, s, depth):
    # sum over u, w >= 1 of (u + w + d)^-s, grouped by m = u + w and truncated at depth
    m = np.arange(2, depth, dtype=float)
    return math.fsum((m - 1) * (m + d) ** (-s))


@pytest.mark.parametrize("d", [0, 1, 5, 40])
def test_one_sided_sum_matches_double_sum(d):
    s, depth = 3.0, 2_000_000
    brute = _brute_one_sided(d, s, depth)
    tail = 1.0 / (depth - 1)  # (m-1)(m+d)^-3 <= m^-2
    v = float(one_sided_exterior_sum(d, s))
    assert brute <= v <= (brute + tail) * (1 + 2e-10)


def test_window_edge_gives_over_origin_sum():
    s = 3.0
    n = 50
    p = GraphParams(s, n, 0)
    b = exterior_crossing_bound(n, p) - float(one_sided_exterior_sum(2 * n, s))
    with mp.workdps(30):
        ref = mp.nsum(lambda m: (m - 1) * m ** (-s), [2, mp.inf])
    assert abs(b - float(ref)) < 1e-9
    assert abs(over_origin_sum(s) - float(ref)) < 1e-12
    assert abs(over_origin_sum(3) - (math.pi**2 / 6 - 1.2020569031595942)) < 1e-12


def test_bound_vanishes_with_buffer():
    vals = [exterior_crossing_bound(0, GraphParams(3.0, 10 + b, b)) for b in (0, 10, 100, 10_000, 10**6)]
    assert all(x >= y for x, y in zip(vals, vals[1:]))
    assert vals[-1] < 1e-6


def test_bound_is_one_when_heavy_tailed():
    assert exterior_crossing_bound(0, GraphParams(2.0, 10, 0)) == 1.0


@given(n=st.integers(5, 2000), b=st.integers(0, 4), s=st.floats(2.05, 6.0))
@settings(max_examples=50, deadline=None)
def test_bound_in_unit_interval_and_monotone(n, b, s):
    p = GraphParams(s, n, min(b, n - 1))
    pos = np.arange(0, p.inner_hi + 1)
    v = exterior_crossing_bound(pos, p)
    assert np.all((v >= 0) & (v <= 1))
    # farther from the boundary never increases the bound
    assert np.all(np.diff(v) >= -1e-15)


def test_bound_rejects_outer_positions():
    with pytest.raises(ValueError):
        exterior_crossing_bound(10, GraphParams(3.0, 10, 2))


def test_buffer_for_error_is_minimal():
    b = buffer_for_error(3.0, 1e-6, 10_000)
    worst = lambda bb: float(one_sided_exterior_sum(bb, 3.0) + one_sided_exterior_sum(20_000 + bb, 3.0))
    assert worst(b) <= 1e-6 < worst(b - 1)
