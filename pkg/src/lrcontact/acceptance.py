"""The acceptance checks, one function per criterion.

Each ``criterion_<n>(seed, workers)`` returns a ``CheckResult``. ``passed``
covers the stated tolerance only; the wall-clock budget is reported next to it
and judged separately, since timing depends on the machine.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .contact import path_search_oracle, run_contact, sample_graph_rep, sample_rep, thinning_ladder, two_vertex_oracle
from .cutpoints import cut_mask, cut_point_probability_lower_bound, empirical_moment, fast_interval_statistics
from .exploration import convolution_bound_check, exploration_pmf
from .graph import GraphParams, certified_params, sample_window
from .renorm import block_length, classify_columns, domination_holds_exact, good_probability_closed_form
from .seeding import child_seed, stream
from .stretched.coupling import coupling_inequality_check, site_field_sample
from .stretched.lattice import check_Fk, crossing, crossing_reference, fk_events, sample_bond_config
from .stretched.renewal import geometric_interarrival, sample_renewal
from .stretched.scales import build_scales, largest_reachable_k, p_k_estimate


@dataclass
class CheckResult:
    id: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    runtime: float = 0.0
    budget: float = math.inf

    @property
    def within_budget(self) -> bool:
        return self.runtime <= self.budget

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] criterion {self.id:2d} {self.name}: {_summary(self.details)} ({self.runtime:.1f}s / budget {self.budget:.0f}s)"

    def record(self) -> dict:
        """Deterministic part of the result, for per-criterion CSV rows."""
        return {"criterion": self.id, "name": self.name, "passed": self.passed, "budget_s": self.budget, "summary": _summary(self.details)}


def _summary(details: dict) -> str:
    parts = []
    for key, value in details.items():
        if isinstance(value, float):
            parts.append(f"{key}={value:.6g}")
        elif isinstance(value, (int, str, bool)):
            parts.append(f"{key}={value}")
    return " ".join(parts)


def _timed(cid: int, name: str, budget: float, fn, *args) -> CheckResult:
    t0 = time.perf_counter()
    passed, details = fn(*args)
    return CheckResult(cid, name, bool(passed), details, time.perf_counter() - t0, budget)


# 1 -----------------------------------------------------------------------

def _edge_law(seed: int):
    n_per_length = 10**6
    s = 3.0
    half = (n_per_length + 10) // 2 + 1
    w = sample_window(GraphParams(s, half, 0, child_seed(seed, 0, "edge-law")))
    n = w.params.n_vertices
    worst = 0.0
    for ell in range(1, 11):
        trials = n - ell
        q = ell ** -s
        k = w.edges_by_length(ell).size
        sigma = math.sqrt(trials * q * (1 - q))
        z = 0.0 if sigma == 0 and k == trials else abs(k - trials * q) / sigma if sigma else math.inf
        worst = max(worst, z)
    return worst <= 4.0, {"max_sigma": worst, "trials_per_length": n - 10}


def criterion_1(seed: int = 0, workers: int = 1) -> CheckResult:
    return _timed(1, "edge-law fidelity", 10, _edge_law, seed)


# 2 -----------------------------------------------------------------------

def _cut_density(seed: int):
    s, inner, target, windows = 3.0, 10**4, 1e-6, 50
    freqs, worst_err = [], 0.0
    for r in range(windows):
        p = certified_params(s, inner, target, child_seed(seed, r, "cut-density"))
        w = sample_window(p)
        err = w.exterior_error
        worst_err = max(worst_err, float(err.max()))
        mask = cut_mask(w)[p.inner_lo - w.lo: p.inner_hi - w.lo + 1]
        freqs.append(float(mask.mean()))
    f = np.array(freqs)
    mean, se = float(f.mean()), float(f.std(ddof=1) / math.sqrt(f.size))
    threshold = 0.3213
    ok = mean >= threshold - 3 * se and worst_err < target
    return ok, {"frequency": mean, "stderr": se, "threshold": threshold, "bound": cut_point_probability_lower_bound(s),
                "max_exterior_error": worst_err, "buffer": p.buffer}


def criterion_2(seed: int = 0, workers: int = 1) -> CheckResult:
    return _timed(2, "cut-point density", 60, _cut_density, seed)


# 3 -----------------------------------------------------------------------

def _convolution(seed: int):
    rep = convolution_bound_check(exploration_pmf(3.0, 1, 200), m_max=4, n_max=200)
    return rep.passed, {"C": float(rep.constant), "safety": float(rep.safety), "worst_ratio": float(rep.worst_ratio), "violations": len(rep.violations)}


def criterion_3(seed: int = 0, workers: int = 1) -> CheckResult:
    return _timed(3, "convolution bound", 30, _convolution, seed)


# 4 -----------------------------------------------------------------------

def _collect_statistics(s: float, target: int, seed: int, tag: str) -> dict:
    """At least ``target`` samples of each statistic from independent windows."""
    pools = {k: [] for k in ("theta", "eta", "V", "E")}
    r = 0
    while min(sum(a.size for a in v) for v in pools.values()) < target:
        w = sample_window(certified_params(s, 10**6, 1e-6, child_seed(seed, r, tag)))
        for key, arr in fast_interval_statistics(w, tol=1e-6).items():
            pools[key].append(arr)
        r += 1
    return {k: np.concatenate(v)[:target] for k, v in pools.items()}


def _moment_stability(seed: int):
    s, delta = 3.5, 0.5
    eps = delta / (6 + 5 * delta)
    powers = {"theta": 1 + delta, "eta": 1 + delta, "V": 1 + delta, "E": 1 + eps}
    small = _collect_statistics(s, 10**5, seed, "moments-small")
    large = _collect_statistics(s, 10**6, seed, "moments-large")
    details, ok = {}, True
    for key, power in powers.items():
        a = empirical_moment(small[key], power).estimate
        b = empirical_moment(large[key], power).estimate
        rel = abs(a - b) / b
        details[f"{key}_rel_diff"] = rel
        ok &= rel < 0.10
    return ok, details


def criterion_4(seed: int = 0, workers: int = 1) -> CheckResult:
    return _timed(4, "moment stability", 300, _moment_stability, seed)


# 5 -----------------------------------------------------------------------

def synthetic_good_frequency(n_vertices: int, n_edges: int, lam: float, T: float, rows: int, seed: int) -> float:
    """Good-box frequency over ``rows`` independent time blocks of one column.

    The column holds ``n_vertices`` vertices; ``n_edges`` distinct edges each join
    a column vertex to its own helper vertex outside the column.
    """
    verts = list(range(n_vertices + n_edges))
    edges = np.array([(i % n_vertices, n_vertices + i) for i in range(n_edges)], dtype=np.int64)
    vcol = np.array([0] * n_vertices + [-1] * n_edges)
    rep = sample_graph_rep(verts, edges, lam, rows * T, seed)
    return float(classify_columns(rep, vcol, np.zeros(n_edges, dtype=np.int64), 1, T, rows)[0].mean())


def _good_box_law(seed: int):
    rows = 10**5
    worst, details = 0.0, {}
    for (nv, ne), lam in itertools.product([(1, 1), (2, 3), (4, 9)], [0.04, 1.0]):
        T = block_length(lam)
        p, _ = good_probability_closed_form(nv, ne, lam, T)
        f = synthetic_good_frequency(nv, ne, lam, T, rows, child_seed(seed, nv * 100 + ne, f"good-box-{lam}"))
        z = abs(f - p) / math.sqrt(p * (1 - p) / rows)
        worst = max(worst, z)
    sweep = all(
        domination_holds_exact(nv, ne, lam)
        for lam in (Fraction(1, 100), Fraction(1, 10), Fraction(1))
        for nv in range(1, 11) for ne in range(nv, 11)
    )
    details.update({"max_sigma": worst, "domination_grid_exact": sweep})
    return worst <= 3.0 and sweep, details


def criterion_5(seed: int = 0, workers: int = 1) -> CheckResult:
    return _timed(5, "good-box law", 60, _good_box_law, seed)


# 6 -----------------------------------------------------------------------

def _peierls(seed: int, workers: int):
    from .experiment import ExperimentConfig, pipeline_end_to_end

    rep = pipeline_end_to_end(ExperimentConfig(s=3.0, lam=0.01, N=2000, replicas=1000, seed=seed, workers=workers))
    agg = rep.aggregates
    ok = agg["certificates"] > 0 and agg["verified"] == agg["certificates"]
    return ok, {k: agg[k] for k in ("certified", "uncertifiable", "certificates", "verified")}


def criterion_6(seed: int = 0, workers: int = 1) -> CheckResult:
    return _timed(6, "Peierls soundness", 600, _peierls, seed, workers)


# 7 -----------------------------------------------------------------------

def _site_bond(seed: int):
    rep = coupling_inequality_check(max_width=3, max_height=3, even_phi=(1, 2), odd_phi=(1,))
    margin = min(c.margin for c in rep.cases)
    return rep.passed, {"cases": len(rep.cases), "violations": len(rep.violations), "min_margin": margin}


def criterion_7(seed: int = 0, workers: int = 1) -> CheckResult:
    return _timed(7, "site-to-bond coupling", 300, _site_bond, seed)


# 8 -----------------------------------------------------------------------

def _environment_control(seed: int):
    pmf = geometric_interarrival(0.5)
    desk = build_scales(4, 2, None, 0, "desk", gamma=1.5, height=False)
    e0 = p_k_estimate(pmf, desk, 0, 10**5, child_seed(seed, 0, "p0"))
    sigma = math.sqrt(e0.exact * (1 - e0.exact) / e0.replicas)
    k0_ok = abs(e0.estimate - e0.exact) <= 3 * sigma

    eps = 4.0
    paper = build_scales(16, 2, eps, 8, "paper", height=False)
    k = largest_reachable_k(paper, 10**4)
    ek = p_k_estimate(pmf, paper, k, 10**4, child_seed(seed, k, "pk"))
    return k0_ok and ek.passed, {
        "p0_exact": e0.exact, "p0_mc": e0.estimate, "k": k, "L_k": paper.L[k], "pk_mc": ek.estimate,
        "pk_stderr": ek.stderr, "pk_bound": ek.bound,
    }


def criterion_8(seed: int = 0, workers: int = 1) -> CheckResult:
    return _timed(8, "environment control", 300, _environment_control, seed)


# 9 -----------------------------------------------------------------------

def _small_rep(seed: int, max_marks: int = 20):
    """Random graph on at most four vertices with at most ``max_marks`` marks; (rep, initial, queries, redraws)."""
    for attempt in itertools.count():
        rng = stream(seed, attempt, "small-rep")
        n = int(rng.integers(1, 5))
        pairs = list(itertools.combinations(range(n), 2))
        pick = rng.choice(len(pairs), size=int(rng.integers(0, len(pairs) + 1)), replace=False) if pairs else []
        edges = np.array([pairs[i] for i in pick], dtype=np.int64).reshape(-1, 2)
        rep = sample_graph_rep(np.arange(n), edges, float(rng.uniform(0.2, 3.0)), float(rng.uniform(0.5, 3.0)),
                               child_seed(seed, attempt, "small-marks"))
        if rep.n_marks <= max_marks:
            initial = [v for v in range(n) if rng.random() < 0.5] or [0]
            queries = sorted(rng.uniform(0, rep.horizon, size=15).tolist())
            return rep, initial, queries, attempt


def _contact_oracles(seed: int):
    mismatches = redraws = 0
    for r in range(1000):
        rep, initial, qs, extra = _small_rep(child_seed(seed, r, "oracle"))
        redraws += extra
        tr = run_contact(rep, initial)
        if [tr.infected_at(q) for q in qs] != path_search_oracle(rep, initial, qs):
            mismatches += 1
    # 10^5 independent copies of the two-vertex chain as disjoint edges of one graph
    runs, lam, t = 10**5, 1.0, 1.0
    verts = np.arange(2 * runs)
    edges = np.stack([verts[::2], verts[1::2]], axis=1)
    rep = sample_graph_rep(verts, edges, lam, 2 * t, child_seed(seed, 0, "two-vertex"))
    state = run_contact(rep, verts[::2].tolist()).infected_at(t)
    a = np.isin(verts[::2], list(state))
    b = np.isin(verts[1::2], list(state))
    counts = np.bincount(a.astype(int) + 2 * b.astype(int), minlength=4)
    p = two_vertex_oracle(lam, t)
    f = counts / runs
    se = np.sqrt(p * (1 - p) / runs)
    z = float(np.max(np.abs(f - p) / se))
    return mismatches == 0 and z <= 3.0, {"mismatches": mismatches, "redraws": redraws, "two_vertex_max_sigma": z}


def criterion_9(seed: int = 0, workers: int = 1) -> CheckResult:
    return _timed(9, "contact-process oracles", 300, _contact_oracles, seed)


# 10 ----------------------------------------------------------------------

def _monotonicity(seed: int):
    # coupled thinning in lambda
    bad_thin = 0
    for r in range(10**4):
        rng = stream(seed, r, "thin-pair")
        w = sample_window(GraphParams(3.0, 20, 0, child_seed(seed, r, "thin-window")))
        hi = float(rng.uniform(0.5, 3.0))
        lo = float(rng.uniform(0, hi))
        top = sample_rep(w, hi, 4.0, child_seed(seed, r, "thin-marks"))
        low, high = thinning_ladder(top, [lo, hi], child_seed(seed, r, "thinning"))
        a, b = run_contact(low, [0]), run_contact(high, [0])
        if a.survived > b.survived or not a.ever_infected() <= b.ever_infected():
            bad_thin += 1
    # shared uniforms in s, in p and under edge additions
    bad_s = bad_site = bad_bond = bad_add = 0
    for r in range(1000):
        rng = stream(seed, r, "mono")
        w = sample_window(GraphParams(2.5, 200, 0, child_seed(seed, r, "mono-window")))
        w2 = w.at_exponent(2.5 + float(rng.uniform(0.01, 2.0)))
        bad_s += not set(map(tuple, w2.all_edges.tolist())) <= set(map(tuple, w.all_edges.tolist()))
        phi = rng.integers(1, 4, size=5)
        u = rng.random((5, 6))
        p1 = float(rng.uniform(0, 1))
        p2 = float(rng.uniform(p1, 1))
        bad_site += bool(np.any(site_field_sample(phi, p1, 6, 0, u) & ~site_field_sample(phi, p2, 6, 0, u)))
        pts = np.flatnonzero(rng.random(12) < 0.6)
        if pts.size == 0:
            continue
        cfg = sample_bond_config(pts, p1, (0, 12), 5, child_seed(seed, r, "mono-bonds"))
        up = cfg.with_p(p2)
        bad_bond += bool(np.any(cfg.open_vert & ~up.open_vert) or np.any(cfg.open_hor & ~up.open_hor))
        rect = (int(rng.integers(0, 6)), int(rng.integers(6, 13)), int(rng.integers(0, 2)), int(rng.integers(3, 6)))
        vert, hor = cfg.open_vert.copy(), cfg.open_hor.copy()
        vert |= rng.random(vert.shape) < 0.2
        hor |= rng.random(hor.shape) < 0.2
        more = cfg.with_states(vert, hor)
        for o in ("h", "v"):
            bad_add += crossing(cfg, rect, o) > crossing(more, rect, o)
            bad_add += crossing(cfg, rect, o) > crossing(up, rect, o)
    ok = bad_thin == bad_s == bad_site == bad_bond == bad_add == 0
    return ok, {"thinning_pairs": 10**4, "thinning_violations": bad_thin, "s_violations": bad_s,
                "site_p_violations": bad_site, "bond_p_violations": bad_bond, "crossing_violations": bad_add}


def criterion_10(seed: int = 0, workers: int = 1) -> CheckResult:
    return _timed(10, "monotonicity suite", 300, _monotonicity, seed)


# 11 ----------------------------------------------------------------------

def _fk_recomposition(seed: int):
    pmf = geometric_interarrival(0.5)
    scales = build_scales(2, 2, None, 1, "desk", gamma=2.0, mu=0.5)
    mismatches = occurred = 0
    configs = 1000
    for r in range(configs):
        k = r % 2
        L, H = scales.L[k], scales.H[k]
        rng = stream(seed, r, "fk")
        env = sample_renewal(pmf, "origin-started", (-2 * L, 2 * L), child_seed(seed, r, "fk-env"))
        cfg = sample_bond_config(env.points, float(rng.uniform(0.5, 0.99)), (-2 * L, 2 * L), 2 * H, child_seed(seed, r, "fk-bonds"))
        parts = fk_events(cfg, scales, k, crosser=crossing_reference)
        fk = check_Fk(cfg, scales, k)
        occurred += fk
        mismatches += fk != all(parts.values())
    return mismatches == 0, {"configs": configs, "mismatches": mismatches, "occurred": occurred}


def criterion_11(seed: int = 0, workers: int = 1) -> CheckResult:
    return _timed(11, "F_k recomposition", 60, _fk_recomposition, seed)


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11,
}


def run_criterion(cid: int, seed: int = 0, workers: int = 1) -> CheckResult:
    if cid not in CRITERIA:
        raise KeyError(f"no criterion {cid}")
    return CRITERIA[cid](seed=seed, workers=workers)
