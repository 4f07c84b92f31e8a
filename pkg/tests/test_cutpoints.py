import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import zeta

from lrcontact.cutpoints import (
    NO_FAMILY,
    UncertifiableWindow,
    brute_force_cut_points,
    build_intervals_and_edges,
    cut_mask,
    cut_point_probability_lower_bound,
    decompose,
    edge_count,
    edge_count_mean,
    edge_count_report,
    edge_count_variance,
    empirical_moment,
    fast_interval_statistics,
    find_x_plus_minus,
    interval_statistics,
    lag1_autocorrelation,
    reassign_edges_reference,
    scan_cut_points,
    select_one_side_reference,
    select_strong_cut_points,
    strong_cut_points,
    _select_one_side,
)
from lrcontact.graph import GraphParams, from_edges, sample_window
from lrcontact.seeding import stream

# Figure 1: 45 vertices with these arcs (1-based labels)
FIGURE1_ARCS = [
    (1, 9), (1, 8), (2, 7), (3, 6), (4, 8), (11, 15), (11, 13), (13, 19), (13, 18), (13, 16),
    (16, 18), (21, 24), (21, 29), (24, 29), (24, 27), (25, 28), (29, 34), (31, 33), (32, 34),
    (36, 39), (37, 41), (41, 45), (42, 44), (42, 45),
]
FIGURE1_CUTS = {9, 10, 11, 19, 20, 21, 29, 34, 35, 36, 41}
FIGURE1_STRONG = {10, 20, 35}


def figure1_window():
    shift = 23
    p = GraphParams(3.0, 22, 0)
    return from_edges(p, [(a - shift, b - shift) for a, b in FIGURE1_ARCS]), shift


def test_figure1_cut_points():
    w, shift = figure1_window()
    mask = cut_mask(w)
    pos = np.arange(w.lo, w.hi + 1)
    got = set((pos[mask] + shift).tolist()) - {1, 45}
    assert got == FIGURE1_CUTS


def test_figure1_strong_cut_points():
    w, shift = figure1_window()
    pos = np.arange(w.lo, w.hi + 1)[cut_mask(w)]
    assert set((strong_cut_points(pos) + shift).tolist()) == FIGURE1_STRONG


def test_no_long_edges_every_vertex_is_cut():
    w = from_edges(GraphParams(3.0, 30, 0), [])
    assert cut_mask(w).all()
    cuts = scan_cut_points(w)
    assert cuts.x_plus == 0 and cuts.x_minus == 0
    assert cuts.right.tolist() == list(range(1, 31))
    assert cuts.left.tolist() == list(range(-1, -31, -1))


def test_x_plus_minus_examples():
    p = GraphParams(3.0, 10, 0)
    assert find_x_plus_minus(from_edges(p, [])) == (0, 0)
    assert find_x_plus_minus(from_edges(p, [(-1, 2), (-3, 1)])) == (-3, 2)
    assert find_x_plus_minus(from_edges(p, [(-1, 1)])) == (-1, 1)


def test_x_plus_uncertified():
    p = GraphParams(3.0, 10, 5)
    with pytest.raises(UncertifiableWindow) as err:
        find_x_plus_minus(from_edges(p, [(-1, 8)]))
    assert err.value.bound == 1.0
    with pytest.raises(UncertifiableWindow):
        find_x_plus_minus(from_edges(p, []), tol=1e-9)


def test_refuses_heavy_tail():
    with pytest.raises(ValueError):
        find_x_plus_minus(from_edges(GraphParams(2.0, 10), []))


@pytest.mark.parametrize("seed", range(100))
def test_scan_matches_brute_force(seed):
    w = sample_window(GraphParams(3.0, 500, 0, seed))
    pos = np.arange(w.lo, w.hi + 1)
    assert np.array_equal(pos[cut_mask(w)], brute_force_cut_points(w, w.lo, w.hi))


@given(st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_reported_cuts_not_straddled(seed):
    w = sample_window(GraphParams(2.6, 300, 40, seed))
    try:
        cuts = scan_cut_points(w)
    except UncertifiableWindow:
        return
    for x in np.concatenate([cuts.right, cuts.left]):
        assert not np.any((w.left < x) & (w.right > x))
        assert w.params.inner_lo <= x <= w.params.inner_hi
    assert np.all(cuts.right > cuts.x_plus) and np.all(cuts.left < cuts.x_minus)
    assert np.all(np.diff(cuts.right) > 0) and np.all(np.diff(cuts.left) < 0)


def test_selection_all_ones():
    seq = np.arange(1, 12)
    # n = 2, 3, 4, 5 -> x_4, x_6, x_8, x_10
    assert _select_one_side(seq).tolist() == [4, 6, 8, 10]


@given(st.lists(st.integers(1, 3), min_size=0, max_size=40))
def test_selection_matches_recursion(gaps):
    seq = np.concatenate([[5], 5 + np.cumsum(gaps)]).astype(int)
    assert _select_one_side(seq).tolist() == select_one_side_reference(seq.tolist())
    neg = -seq
    assert _select_one_side(neg).tolist() == select_one_side_reference(neg.tolist())


def test_selected_are_strong():
    w = sample_window(GraphParams(3.0, 3000, 200, 9))
    cuts = scan_cut_points(w)
    vl, vr = select_strong_cut_points(cuts)
    allcuts = set(np.concatenate([cuts.right, cuts.left]).tolist())
    for v in np.concatenate([vl, vr]):
        assert v - 1 in allcuts and v + 1 in allcuts


def test_figure3_layout():
    # strong cut-points at 0-based stand-ins: columns between them are open intervals
    w = from_edges(GraphParams(3.0, 40, 0), [(5, 9), (12, 16), (-9, -5), (-16, -12)])
    dec = decompose(w)
    iv = dec.intervals
    vr, vl = dec.v_right.tolist(), dec.v_left.tolist()
    for k in range(1, len(vr)):
        assert iv[2 * k] == (vr[k - 1] + 1, vr[k] - 1)
        assert iv[2 * k - 1] == (vr[k - 1], vr[k - 1])
    for k in range(1, len(vl)):
        assert iv[-2 * k] == (vl[k] + 1, vl[k - 1] - 1)
        assert iv[-(2 * k - 1)] == (vl[k - 1], vl[k - 1])
    assert iv[0] == (vl[0] + 1, vr[0] - 1)


def test_unit_only_singletons_have_one_edge():
    w = from_edges(GraphParams(3.0, 40, 0), [])
    dec = decompose(w)
    fam = dec.edge_families
    for k, (a, b) in dec.intervals.items():
        if k % 2 and k > 0:
            assert fam[k].tolist() == [[a, a + 1]]
        if k % 2 and k < 0:
            assert fam[k].tolist() == [[a - 1, a]]


def _check_decomposition(w, dec):
    lo, hi = dec.region
    # partition: contiguous, disjoint, increasing
    assert np.array_equal(dec.column_lo[1:], dec.column_hi[:-1] + 1)
    assert np.all(dec.column_hi >= dec.column_lo)
    odd = dec.column_index % 2 != 0
    assert np.all(dec.column_lo[odd] == dec.column_hi[odd])
    assert np.array_equal(np.sort(dec.column_index), dec.column_index)
    # cover: every window edge with both ends in the region is owned exactly once
    ref = reassign_edges_reference(dec)
    for (i, j), fam in zip(dec.edges.tolist(), dec.family.tolist()):
        owners = ref[(i, j)]
        assert len(owners) <= 1
        if lo <= i and j <= hi:
            assert owners == [fam]
        elif owners:
            assert owners == [fam]
        else:
            assert fam == NO_FAMILY
    # |V_k| <= |E_k| for k != 0
    nz = dec.column_index != 0
    assert np.all(dec.column_sizes[nz] <= dec.family_sizes[nz])
    # singleton columns own exactly their unit edge (strong cut-points have no long edges)
    assert np.all(dec.family_sizes[odd] == 1)


@given(st.integers(0, 10**6), st.sampled_from([2.5, 3.0, 4.0]))
@settings(max_examples=25, deadline=None)
def test_decomposition_invariants(seed, s):
    w = sample_window(GraphParams(s, 400, 60, seed))
    try:
        dec = decompose(w)
    except UncertifiableWindow:
        return
    _check_decomposition(w, dec)


def test_fast_statistics_agree():
    for seed in range(5):
        w = sample_window(GraphParams(3.0, 5000, 300, seed))
        a = interval_statistics(decompose(w))
        b = fast_interval_statistics(w)
        for key in ("theta", "eta", "V", "E"):
            assert np.array_equal(np.sort(a[key]), np.sort(b[key])), key


def test_decomposition_json_has_fields():
    import json

    w = sample_window(GraphParams(3.0, 300, 20, 1))
    obj = json.loads(decompose(w).to_json())
    for key in ("intervals", "edgeFamilies", "thetaSamples", "etaSamples", "certification", "xPlus", "xMinus"):
        assert key in obj


def test_moment_examples():
    m = empirical_moment([2, 2, 2], 1.5)
    assert m.estimate == pytest.approx(2**1.5) and m.stderr == 0
    assert empirical_moment([1, 2], 2).estimate == 2.5
    # jackknife of a mean equals the classical standard error
    x = np.array([1.0, 3.0, 4.0, 9.0])
    assert empirical_moment(x, 1).stderr == pytest.approx(x.std(ddof=1) / 2)


def test_cut_point_lower_bound():
    assert cut_point_probability_lower_bound(3) == pytest.approx(0.5 * math.exp(-(math.pi**2 / 6 - 1.2020569031595942)), abs=1e-12)
    assert cut_point_probability_lower_bound(3) == pytest.approx(0.32109304, abs=1e-8)
    assert cut_point_probability_lower_bound(60) == pytest.approx(0.5, abs=1e-12)
    assert 0 < cut_point_probability_lower_bound(2.5) < 0.5
    with pytest.raises(ValueError):
        cut_point_probability_lower_bound(2)


@pytest.mark.parametrize("s", [2.5, 3.0])
def test_cut_point_bound_two_summation_orders(s):
    import mpmath as mp

    with mp.workdps(30):
        by_length = mp.nsum(lambda n: (n - 1) * n ** (-s), [2, mp.inf], method="euler-maclaurin")
        # over i >= 1 of sum_{j >= 1} (i + j)^-s = zeta(s, i + 1)
        by_row = mp.nsum(lambda i: mp.zeta(s, i + 1), [1, mp.inf], method="euler-maclaurin")
    assert abs(by_length - by_row) < 1e-8
    assert cut_point_probability_lower_bound(s) == pytest.approx(0.5 * math.exp(-float(by_row)), abs=1e-8)


def test_theta_gaps_look_independent():
    w = sample_window(GraphParams(3.0, 200_000, 1000, 42))
    theta = scan_cut_points(w).right_gaps
    r, se = lag1_autocorrelation(theta)
    assert abs(r) < 4 * se


def test_edge_count_unit_only():
    w = from_edges(GraphParams(3.0, 50), [])
    assert edge_count(w, 20) == 20


def test_edge_count_moments():
    assert edge_count_mean(3) == pytest.approx(1.2020569031595942, abs=1e-12)
    assert edge_count_variance(3, 10) <= edge_count_mean(3, 10)
    rng = stream(3, 0, "nm")
    from lrcontact.cutpoints import sample_edge_counts

    n1 = sample_edge_counts(3.0, 1, 200_000, rng, max_length=10**5)
    assert abs(n1.mean() - zeta(3)) < 4 * math.sqrt(edge_count_variance(3) / n1.size)


def test_edge_count_chebyshev_small():
    rep = edge_count_report(3.0, 50, 0.5, 2000, stream(1, 0, "nm"), max_length=10**5)
    assert rep.passed
