"""Cut-points, strong cut-points and the interval/edge-family decomposition.

A cut-point is a vertex that no open edge jumps over. Positions are window
coordinates; only positions in the inner window are ever reported, and each
carries the window's exterior error bound.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import zeta

from .graph import GraphWindow

NO_FAMILY = np.iinfo(np.int64).min


class UncertifiableWindow(Exception):
    """The window cannot certify the requested structure; ``bound`` is the exterior error."""

    def __init__(self, message: str, bound: float):
        super().__init__(f"{message} (exterior bound {bound:.3g})")
        self.bound = bound


def _require_decomposable(window: GraphWindow):
    if window.s <= 2:
        raise ValueError("cut-point decomposition requires s > 2")


def cut_mask(window: GraphWindow) -> np.ndarray:
    """Boolean array over [lo, hi]: True where no window edge straddles the position."""
    n = window.params.n_vertices
    reach = np.arange(1, n + 1, dtype=np.int64)
    reach[-1] = n - 1
    if window.n_long_edges:
        np.maximum.at(reach, window.left - window.lo, window.right - window.lo)
    prefix = np.maximum.accumulate(reach)
    mask = np.ones(n, dtype=bool)
    # unit edges force prefix[x-1] >= x, so x is a cut-point iff equality holds
    mask[1:] = prefix[:-1] <= np.arange(1, n)
    return mask


def brute_force_cut_points(window: GraphWindow, lo: int, hi: int) -> np.ndarray:
    """Per-vertex straddle test against every long edge, for checking ``cut_mask``."""
    out = []
    for x in range(lo, hi + 1):
        if not np.any((window.left < x) & (window.right > x)):
            out.append(x)
    return np.asarray(out, dtype=np.int64)


def find_x_plus_minus(window: GraphWindow, tol: float = 1.0) -> tuple[int, int]:
    """(x_minus, x_plus): extreme endpoints of edges crossing over the origin.

    x_plus is the largest j >= 0 joined to some i < 0, x_minus the smallest
    i <= 0 joined to some j > 0; both are 0 when no such edge exists.
    """
    _require_decomposable(window)
    bound = float(window.exterior_error_at(0))
    if bound > tol:
        raise UncertifiableWindow("origin is not certified", bound)
    left, right = window.left, window.right
    sel = (left < 0) & (right >= 0)
    x_plus = int(right[sel].max()) if sel.any() else 0
    sel = (left <= 0) & (right > 0)
    x_minus = int(left[sel].min()) if sel.any() else 0
    x_plus = max(x_plus, 0)
    x_minus = min(x_minus, 0)
    p = window.params
    if x_plus > p.inner_hi or x_minus < p.inner_lo:
        raise UncertifiableWindow("an origin-straddling edge leaves the inner window", 1.0)
    return x_minus, x_plus


@dataclass(frozen=True)
class CutPoints:
    """Cut-points right of x_plus (x_1 < x_2 < ...) and left of x_minus (x_{-1} > x_{-2} > ...)."""

    x_minus: int
    x_plus: int
    right: np.ndarray
    left: np.ndarray
    certification: float
    diagnostic: str = ""

    @property
    def right_gaps(self) -> np.ndarray:
        return np.diff(self.right)

    @property
    def left_gaps(self) -> np.ndarray:
        return -np.diff(self.left)

    @property
    def theta_samples(self) -> np.ndarray:
        return np.concatenate([self.right_gaps, self.left_gaps])


def scan_cut_points(window: GraphWindow, tol: float = 1.0) -> CutPoints:
    """All certified cut-points on both sides of the origin, in scan order."""
    x_minus, x_plus = find_x_plus_minus(window, tol)
    p = window.params
    mask = cut_mask(window)
    pos = np.arange(window.lo, window.hi + 1, dtype=np.int64)
    inner = (pos >= p.inner_lo) & (pos <= p.inner_hi)
    if tol < 1.0:
        ok = np.zeros_like(inner)
        ok[inner] = window.exterior_error <= tol
        inner = ok
    cand = pos[mask & inner]
    right = cand[cand > x_plus]
    left = cand[cand < x_minus][::-1].copy()
    chosen = np.concatenate([right, left])
    cert = float(np.max(window.exterior_error_at(chosen))) if chosen.size else 0.0
    diag = "" if right.size and left.size else "no cut-point on at least one side of the certified region"
    return CutPoints(x_minus, x_plus, right, left, cert, diag)


def strong_cut_points(points: np.ndarray) -> np.ndarray:
    """Cut-points whose two neighbours are also cut-points (both adjacent gaps equal 1)."""
    pts = np.sort(np.asarray(points))
    if pts.size < 3:
        return pts[:0]
    g = np.diff(pts)
    inner = (g[:-1] == 1) & (g[1:] == 1)
    return pts[1:-1][inner]


def _select_one_side(seq: np.ndarray) -> np.ndarray:
    """Apply the every-other-pair rule to one ordered side x_1, x_2, ... (1-based)."""
    seq = np.asarray(seq)
    theta = np.abs(np.diff(seq))  # theta[k-1] = |x_{k+1} - x_k|
    m = seq.size
    # candidate n >= 2 needs theta_{2n-1} = theta_{2n} = 1 with 2n + 1 <= m
    n = np.arange(2, (m - 1) // 2 + 1)
    if n.size == 0:
        return seq[:0]
    ok = (theta[2 * n - 2] == 1) & (theta[2 * n - 1] == 1)
    return seq[2 * n[ok] - 1]


def select_strong_cut_points(cuts: CutPoints) -> tuple[np.ndarray, np.ndarray]:
    """(v_{-1}, v_{-2}, ...), (v_1, v_2, ...) via the every-other-pair rule.

    On the right, n_1 = min{n > 1 : theta_{2n-1} = theta_{2n} = 1}, each next
    n_k the next such n, and v_k = x_{2 n_k}. The left side uses the mirrored
    rule on x_{-1}, x_{-2}, ...
    """
    return _select_one_side(cuts.left), _select_one_side(cuts.right)


def select_one_side_reference(seq) -> list:
    """Literal transcription of the n_k recursion, used as an oracle."""
    seq = list(seq)
    theta = {k: abs(seq[k] - seq[k - 1]) for k in range(1, len(seq))}  # theta_k with 1-based k
    out, n = [], 1
    while True:
        n += 1
        if 2 * n not in theta:
            return out
        if theta[2 * n - 1] == 1 and theta[2 * n] == 1:
            out.append(seq[2 * n - 1])


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Columns V_k of the certified region and the edge families E_k.

    ``column_index``/``column_lo``/``column_hi`` list the columns in increasing
    spatial order. ``edges`` are the window edges (same order as
    ``window.all_edges``) and ``family[e]`` the column owning edge e, or
    ``NO_FAMILY`` when the edge lies outside the region.
    """

    window_fingerprint: tuple
    cuts: CutPoints
    v_left: np.ndarray
    v_right: np.ndarray
    column_index: np.ndarray
    column_lo: np.ndarray
    column_hi: np.ndarray
    edges: np.ndarray = field(repr=False)
    family: np.ndarray = field(repr=False)
    partial: bool = False

    @property
    def x_plus(self) -> int:
        return self.cuts.x_plus

    @property
    def x_minus(self) -> int:
        return self.cuts.x_minus

    @property
    def certification(self) -> float:
        return self.cuts.certification

    @property
    def region(self) -> tuple[int, int]:
        return int(self.column_lo[0]), int(self.column_hi[-1])

    @cached_property
    def intervals(self) -> dict[int, tuple[int, int]]:
        return {int(k): (int(a), int(b)) for k, a, b in zip(self.column_index, self.column_lo, self.column_hi)}

    @cached_property
    def edge_families(self) -> dict[int, np.ndarray]:
        out = {int(k): self.edges[:0] for k in self.column_index}
        owned = self.family != NO_FAMILY
        if not owned.any():
            return out
        fam = self.family[owned]
        e = self.edges[owned]
        order = np.argsort(fam, kind="stable")
        fam, e = fam[order], e[order]
        keys, starts = np.unique(fam, return_index=True)
        ends = np.append(starts[1:], fam.size)
        for k, a, b in zip(keys, starts, ends):
            out[int(k)] = e[a:b]
        return out

    @cached_property
    def column_sizes(self) -> np.ndarray:
        return self.column_hi - self.column_lo + 1

    @cached_property
    def family_sizes(self) -> np.ndarray:
        owned = self.family != NO_FAMILY
        pos = np.searchsorted(self.column_index, self.family[owned])
        return np.bincount(pos, minlength=self.column_index.size)

    @property
    def theta_samples(self) -> np.ndarray:
        return self.cuts.theta_samples

    @property
    def eta_samples(self) -> np.ndarray:
        return np.concatenate([np.diff(self.v_right), -np.diff(self.v_left)])

    def column_of(self, positions) -> np.ndarray:
        """Column index for each position, ``NO_FAMILY`` outside the region."""
        return _column_of(np.asarray(positions), self.column_lo, self.column_hi, self.column_index)

    def to_json(self) -> str:
        return json.dumps(
            {
                "xMinus": self.x_minus,
                "xPlus": self.x_plus,
                "cutPoints": {"right": self.cuts.right.tolist(), "left": self.cuts.left.tolist()},
                "strongCutPoints": {"right": self.v_right.tolist(), "left": self.v_left.tolist()},
                "intervals": {str(k): list(v) for k, v in self.intervals.items()},
                "edgeFamilies": {str(k): v.tolist() for k, v in self.edge_families.items()},
                "thetaSamples": self.theta_samples.tolist(),
                "etaSamples": self.eta_samples.tolist(),
                "certification": self.certification,
                "partial": self.partial,
            }
        )


def _column_of(pos, lo, hi, index):
    j = np.searchsorted(lo, pos, side="right") - 1
    jc = np.clip(j, 0, lo.size - 1)
    inside = (j >= 0) & (pos <= hi[jc])
    return np.where(inside, index[jc], NO_FAMILY)


def _columns_from_strong(v_left, v_right):
    """Column list (index, lo, hi) in spatial order for strong cut-points on both sides."""
    cols = []
    kn = v_left.size
    for m in range(kn, 0, -1):  # v_{-m}, outermost first
        v = int(v_left[m - 1])
        cols.append((-(2 * m - 1), v, v))
        if m >= 2:  # V_{-2(m-1)} = (v_{-m}, v_{-(m-1)})
            cols.append((-2 * (m - 1), v + 1, int(v_left[m - 2]) - 1))
    cols.append((0, int(v_left[0]) + 1, int(v_right[0]) - 1))
    for k in range(1, v_right.size + 1):
        v = int(v_right[k - 1])
        cols.append((2 * k - 1, v, v))
        if k < v_right.size:
            cols.append((2 * k, v + 1, int(v_right[k]) - 1))
    idx = np.array([c[0] for c in cols], dtype=np.int64)
    lo = np.array([c[1] for c in cols], dtype=np.int64)
    hi = np.array([c[2] for c in cols], dtype=np.int64)
    return idx, lo, hi


def build_intervals_and_edges(window: GraphWindow, cuts: CutPoints, strong=None) -> Decomposition:
    """Columns V_k and edge families E_k from the selected strong cut-points.

    V_0 = (v_{-1}, v_1); V_{2k-1} = {v_k} and V_{2k} = (v_k, v_{k+1}) for k > 0;
    V_{2k+1} = {v_k} and V_{2k} = (v_{k-1}, v_k) for k < 0. An edge touching
    V_0 belongs to E_0; otherwise a positive column owns the edges whose
    smaller endpoint it contains and a negative column those whose larger
    endpoint it contains.
    """
    v_left, v_right = select_strong_cut_points(cuts) if strong is None else strong
    v_left = np.asarray(v_left, dtype=np.int64)
    v_right = np.asarray(v_right, dtype=np.int64)
    partial = v_left.size < 2 or v_right.size < 2
    if v_left.size < 1 or v_right.size < 1:
        raise UncertifiableWindow("no strong cut-point on one side of the origin", cuts.certification)
    idx, lo, hi = _columns_from_strong(v_left, v_right)
    edges = window.all_edges
    ci = _column_of(edges[:, 0], lo, hi, idx)
    cj = _column_of(edges[:, 1], lo, hi, idx)
    fam = np.full(edges.shape[0], NO_FAMILY, dtype=np.int64)
    pos_side = (ci != NO_FAMILY) & (ci > 0)
    fam[pos_side] = ci[pos_side]
    neg_side = (cj != NO_FAMILY) & (cj < 0)
    fam[neg_side] = cj[neg_side]
    touches0 = (ci == 0) | (cj == 0)
    fam[touches0] = 0
    return Decomposition(window.fingerprint, cuts, v_left, v_right, idx, lo, hi, edges, fam, partial)


def decompose(window: GraphWindow, tol: float = 1.0) -> Decomposition:
    """Scan, select and build in one call."""
    cuts = scan_cut_points(window, tol)
    return build_intervals_and_edges(window, cuts)


def reassign_edges_reference(dec: Decomposition) -> dict:
    """Edge -> family by looping over the definitions literally; an oracle for ``family``."""
    cols = dec.intervals

    def members(k):
        a, b = cols[k]
        return set(range(a, b + 1))

    sets = {k: members(k) for k in cols}
    out = {}
    for i, j in dec.edges.tolist():
        owners = []
        for k, vk in sets.items():
            if k == 0 and (i in vk or j in vk):
                owners.append(k)
            elif k > 0 and min(i, j) in vk:
                owners.append(k)
            elif k < 0 and max(i, j) in vk:
                owners.append(k)
        out[(i, j)] = owners
    return out


def interval_statistics(dec: Decomposition) -> dict[str, np.ndarray]:
    """Samples for moment checks: theta, eta, |V_k| and |E_k| over even k != 0."""
    even = (dec.column_index % 2 == 0) & (dec.column_index != 0)
    return {
        "theta": dec.theta_samples,
        "eta": dec.eta_samples,
        "V": dec.column_sizes[even],
        "E": dec.family_sizes[even],
    }


def fast_interval_statistics(window: GraphWindow, tol: float = 1.0) -> dict[str, np.ndarray]:
    """Same samples as ``interval_statistics(decompose(window))`` without building edge families."""
    cuts = scan_cut_points(window, tol)
    v_left, v_right = select_strong_cut_points(cuts)
    eta = np.concatenate([np.diff(v_right), -np.diff(v_left)])
    # right columns V_{2k} = (v_k, v_{k+1}): unit edges plus long edges with left endpoint inside
    lefts = np.sort(window.left)
    rights = np.sort(window.right)
    a, b = v_right[:-1] + 1, v_right[1:] - 1
    e_right = (b - a + 1) + np.searchsorted(lefts, b, "right") - np.searchsorted(lefts, a, "left")
    # left columns V_{2k} = (v_{k-1}, v_k) with larger endpoint inside
    a, b = v_left[1:] + 1, v_left[:-1] - 1
    e_left = (b - a + 1) + np.searchsorted(rights, b, "right") - np.searchsorted(rights, a, "left")
    return {
        "theta": cuts.theta_samples,
        "eta": eta,
        "V": eta - 1,
        "E": np.concatenate([e_right, e_left]),
    }


@dataclass(frozen=True)
class MomentEstimate:
    power: float
    estimate: float
    stderr: float
    sample_size: int

    def csv_row(self) -> str:
        return f"{self.power},{self.estimate!r},{self.stderr!r},{self.sample_size}"


def empirical_moment(samples, power: float) -> MomentEstimate:
    """Mean of x^power with its jackknife standard error."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    y = x**power
    n = y.size
    mean = float(y.mean())
    if n < 2:
        return MomentEstimate(power, mean, float("nan"), n)
    # leave-one-out means are mean + (mean - y_i)/(n - 1); use their deviations directly
    dev = (mean - y) / (n - 1)
    var = (n - 1) / n * float(np.sum((dev - dev.mean()) ** 2))
    return MomentEstimate(power, mean, math.sqrt(var), n)


def cut_point_probability_lower_bound(s: float) -> float:
    """(1/2) exp(-sum_{n>=2} (n-1) n^(-s)), a lower bound on P(origin is a cut-point)."""
    if s <= 2:
        raise ValueError("the bound requires s > 2 (the series diverges otherwise)")
    total = float(zeta(s - 1.0, 2.0) - zeta(s, 2.0))
    return 0.5 * math.exp(-total)


def lag1_autocorrelation(x) -> tuple[float, float]:
    """Lag-1 sample autocorrelation and its standard error under independence."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    denom = float(np.dot(x, x))
    if denom == 0:
        return 0.0, 0.0
    r = float(np.dot(x[:-1], x[1:])) / denom
    return r, 1.0 / math.sqrt(x.size)


def edge_count(window: GraphWindow, m: int) -> int:
    """N_M: open edges whose smaller endpoint lies in [1, M]."""
    if m < 1 or m + 1 > window.hi:
        raise ValueError("[1, M] must lie inside the window with room for its unit edges")
    long_ = int(np.count_nonzero((window.left >= 1) & (window.left <= m)))
    return m + long_


@dataclass(frozen=True)
class EdgeCountReport:
    m: int
    alpha: float
    threshold: float
    exceed_frequency: float
    exceed_stderr: float
    bound: float
    mean: float
    exact_mean: float
    exact_variance: float
    stated_variance: float
    replicas: int

    @property
    def passed(self) -> bool:
        return self.exceed_frequency <= self.bound + 3 * self.exceed_stderr


def edge_count_mean(s: float, m: int = 1) -> float:
    """E[N_M] = M zeta(s)."""
    return m * float(zeta(s))


def edge_count_variance(s: float, m: int = 1) -> float:
    """Var[N_M] = M (zeta(s) - zeta(2s)) for the sum of independent Bernoullis."""
    return m * float(zeta(s) - zeta(2 * s))


def sample_edge_counts(s: float, m: int, replicas: int, rng, max_length: int = 10**7) -> np.ndarray:
    """Independent draws of N_M on the full line, lengths capped at ``max_length``.

    For each length the successes over all ``replicas * m`` slots are drawn as
    one binomial and scattered uniformly without replacement, which is exact.
    """
    counts = np.full(replicas, m, dtype=np.int64)
    slots = replicas * m
    lengths = np.arange(2, max_length + 1, dtype=float)
    q = lengths ** (-s)
    k = rng.binomial(slots, q)
    for idx in np.flatnonzero(k):
        c = int(k[idx])
        cells = rng.choice(slots, size=c, replace=False)
        np.add.at(counts, cells // m, 1)
    return counts


def edge_count_report(s: float, m: int, alpha: float, replicas: int, rng, max_length: int = 10**7) -> EdgeCountReport:
    """Compare exceedance frequency of N_M >= 2 M^(1+alpha) with M^(-1-3 alpha/2)."""
    n = sample_edge_counts(s, m, replicas, rng, max_length)
    thr = 2.0 * m ** (1 + alpha)
    hit = n >= thr
    f = float(hit.mean())
    se = math.sqrt(max(f * (1 - f), 1.0 / replicas) / replicas)
    return EdgeCountReport(
        m=m,
        alpha=alpha,
        threshold=thr,
        exceed_frequency=f,
        exceed_stderr=se,
        bound=m ** (-1 - 1.5 * alpha),
        mean=float(n.mean()),
        exact_mean=edge_count_mean(s, m),
        exact_variance=edge_count_variance(s, m),
        stated_variance=edge_count_mean(s, m),
        replicas=replicas,
    )
