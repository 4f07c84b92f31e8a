"""Bond percolation on the stretched lattice and the crossing events built on it.

Columns sit at the renewal points x_0 < x_1 < ... of the environment; rows
are 0..rows-1. A vertical edge is open with probability p, a horizontal edge
between consecutive columns at distance g with probability p^g. Every edge
carries its own uniform, so changing p is a monotone coupling.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ..seeding import child_seed, stream
from .renewal import pattern_probability, sample_renewal
from .scales import ScaleHierarchy, classify_intervals, classify_intervals_reference


@dataclass(frozen=True, eq=False)
class BondConfig:
    columns: np.ndarray  # x positions of the columns, increasing
    rows: int
    p: float
    x_window: tuple[int, int]
    u_vert: np.ndarray = field(repr=False)  # (n_columns, rows - 1)
    u_hor: np.ndarray = field(repr=False)  # (n_columns - 1, rows)
    seed: int | None = None

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.columns)

    @property
    def open_vert(self) -> np.ndarray:
        return self.u_vert < self.p

    @property
    def open_hor(self) -> np.ndarray:
        return self.u_hor < self.p ** self.gaps[:, None].astype(float)

    def with_p(self, p: float) -> "BondConfig":
        return BondConfig(self.columns, self.rows, p, self.x_window, self.u_vert, self.u_hor, self.seed)

    def with_states(self, vert: np.ndarray, hor: np.ndarray) -> "BondConfig":
        """Config whose edges are open exactly where the given masks say so."""
        return BondConfig(self.columns, self.rows, self.p, self.x_window,
                          np.where(vert, 0.0, 1.0), np.where(hor, 0.0, 1.0), self.seed)


def sample_bond_config(points, p: float, x_window: tuple[int, int], rows: int, seed: int) -> BondConfig:
    """Independent edges on the columns of ``points`` inside [x_lo, x_hi) and rows 0..rows-1."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    if rows < 1:
        raise ValueError("need at least one row")
    pts = np.asarray(points, dtype=np.int64)
    cols = np.sort(pts[(pts >= x_window[0]) & (pts < x_window[1])])
    rng = stream(seed, 0, "bonds")
    u_vert = rng.random((cols.size, rows - 1))
    u_hor = rng.random((max(cols.size - 1, 0), rows))
    return BondConfig(cols, rows, p, (int(x_window[0]), int(x_window[1])), u_vert, u_hor, seed)


def _rect_columns(config: BondConfig, rect) -> tuple[int, int, int, int]:
    x_lo, x_hi, r_lo, r_hi = (int(v) for v in rect)
    if x_lo < config.x_window[0] or x_hi > config.x_window[1] or r_lo < 0 or r_hi > config.rows:
        raise ValueError(f"rectangle {rect} leaves the configuration window")
    c0 = int(np.searchsorted(config.columns, x_lo, side="left"))
    c1 = int(np.searchsorted(config.columns, x_hi, side="left"))
    return c0, c1, r_lo, r_hi


def crossing(config: BondConfig, rect, orientation: str) -> bool:
    """Open crossing of [x_lo, x_hi) x [r_lo, r_hi).

    ``"h"`` joins the leftmost column inside to the rightmost one, ``"v"`` the
    bottom row to the top row, using open edges with both ends inside.
    """
    if orientation not in ("h", "v"):
        raise ValueError("orientation must be 'h' or 'v'")
    c0, c1, r0, r1 = _rect_columns(config, rect)
    w, h = c1 - c0, r1 - r0
    if w <= 0 or h <= 0:
        return False
    n = w * h
    node = np.arange(n).reshape(w, h)
    vert = config.open_vert[c0:c1, r0 : r1 - 1]
    hor = config.open_hor[c0 : c1 - 1, r0:r1] if w > 1 else np.zeros((0, h), bool)
    a = [node[:, :-1][vert], node[:-1, :][hor]]
    b = [node[:, 1:][vert], node[1:, :][hor]]
    src, dst = n, n + 1
    if orientation == "h":
        ends = (node[0], node[-1])
    else:
        ends = (node[:, 0], node[:, -1])
    a += [np.full(ends[0].size, src), np.full(ends[1].size, dst)]
    b += [ends[0], ends[1]]
    a, b = np.concatenate(a), np.concatenate(b)
    g = coo_matrix((np.ones(a.size, np.int8), (a, b)), shape=(n + 2, n + 2))
    _, labels = connected_components(g, directed=False)
    return bool(labels[src] == labels[dst])


def crossing_reference(config: BondConfig, rect, orientation: str) -> bool:
    """Breadth-first search over open edges, one vertex at a time."""
    c0, c1, r0, r1 = _rect_columns(config, rect)
    if c1 <= c0 or r1 <= r0:
        return False
    ov, oh = config.open_vert, config.open_hor
    if orientation == "h":
        start = [(c0, r) for r in range(r0, r1)]
        done = lambda c, r: c == c1 - 1
    else:
        start = [(c, r0) for c in range(c0, c1)]
        done = lambda c, r: r == r1 - 1
    seen = set(start)
    q = deque(start)
    while q:
        c, r = q.popleft()
        if done(c, r):
            return True
        nbrs = []
        if r + 1 < r1 and ov[c, r]:
            nbrs.append((c, r + 1))
        if r - 1 >= r0 and ov[c, r - 1]:
            nbrs.append((c, r - 1))
        if c + 1 < c1 and oh[c, r]:
            nbrs.append((c + 1, r))
        if c - 1 >= c0 and oh[c - 1, r]:
            nbrs.append((c - 1, r))
        for x in nbrs:
            if x not in seen:
                seen.add(x)
                q.append(x)
    return False


def c_rect(scales: ScaleHierarchy, k: int, i: int, j: int):
    """(I_i^k u I_{i+1}^k) x [j H_k, (j+1) H_k)."""
    L, H = scales.L[k], scales.H[k]
    return (i * L, (i + 2) * L, j * H, (j + 1) * H)


def d_rect(scales: ScaleHierarchy, k: int, i: int, j: int):
    """I_i^k x [j H_k, (j+2) H_k)."""
    L, H = scales.L[k], scales.H[k]
    return (i * L, (i + 1) * L, j * H, (j + 2) * H)


FK_EVENTS = tuple([("C", i, 1) for i in (-2, -1, 0)] + [("D", i, 0) for i in (-2, -1, 0, 1)])


def _require_fk_window(config: BondConfig, scales: ScaleHierarchy, k: int):
    L, H = scales.L[k], scales.H[k]
    if config.x_window[0] > -2 * L or config.x_window[1] < 2 * L or config.rows < 2 * H:
        raise ValueError("configuration window must cover [-2L_k, 2L_k) x [0, 2H_k)")


def fk_events(config: BondConfig, scales: ScaleHierarchy, k: int, crosser=crossing) -> dict:
    """The seven crossings that make up F_k, evaluated one by one."""
    _require_fk_window(config, scales, k)
    out = {}
    for kind, i, j in FK_EVENTS:
        if kind == "C":
            out[(kind, i, j)] = crosser(config, c_rect(scales, k, i, j), "h")
        else:
            out[(kind, i, j)] = crosser(config, d_rect(scales, k, i, j), "v")
    return out


def check_Fk(config: BondConfig, scales: ScaleHierarchy, k: int) -> bool:
    """C_{i,1} for i = -2..0 and D_{i,0} for i = -2..1 all occur."""
    _require_fk_window(config, scales, k)
    for kind, i, j in FK_EVENTS:
        rect = c_rect(scales, k, i, j) if kind == "C" else d_rect(scales, k, i, j)
        if not crossing(config, rect, "h" if kind == "C" else "v"):
            return False
    return True


def dual_escapes(config: BondConfig, scales: ScaleHierarchy, k: int) -> bool:
    """Can a dual path of closed edges get from the face above the origin to the outside?

    Faces (c, r) sit between columns c, c+1 and rows r, r+1 inside the window
    [-2L_k, 2L_k) x [0, 2H_k). Stepping between faces crosses one primal edge,
    allowed when that edge is closed. The floor below row 0 is a wall; leaving
    through a side or the top counts as escaping.
    """
    L, H = scales.L[k], scales.H[k]
    c0, c1, _, _ = _rect_columns(config, (-2 * L, 2 * L, 0, 2 * H))
    cols = config.columns
    start_c = int(np.searchsorted(cols, 0, side="right")) - 1
    if not c0 <= start_c < c1 - 1:
        return True
    ov, oh = config.open_vert, config.open_hor
    top = 2 * H - 1
    start = (start_c, 0)
    seen = {start}
    q = deque([start])
    while q:
        c, r = q.popleft()
        moves = []
        # up: crosses horizontal edge (c, r+1)-(c+1, r+1)
        if not oh[c, r + 1]:
            if r + 1 == top:
                return True
            moves.append((c, r + 1))
        # down: crosses horizontal edge at row r (the floor blocks r = 0)
        if r > 0 and not oh[c, r]:
            moves.append((c, r - 1))
        # left: crosses vertical edge on column c between rows r, r+1
        if not ov[c, r]:
            if c == c0:
                return True
            moves.append((c - 1, r))
        if not ov[c + 1, r]:
            if c + 1 == c1 - 1:
                return True
            moves.append((c + 1, r))
        for m in moves:
            if m not in seen:
                seen.add(m)
                q.append(m)
    return False


@dataclass(frozen=True)
class QkReport:
    k: int
    p: float
    estimate_c: float
    stderr_c: float
    estimate_d: float
    stderr_d: float
    max_env_c: float
    max_env_d: float
    accepted_c: int
    accepted_d: int
    attempts: int
    bound: float
    diagnostic: str = ""

    @property
    def estimate(self) -> float:
        return max(self.estimate_c, self.estimate_d)

    @property
    def rejection_rate(self) -> float:
        return 1 - self.accepted_d / self.attempts if self.attempts else math.nan

    def csv_rows(self) -> list[str]:
        return [
            f"{self.k},{self.p!r},C,{self.estimate_c!r},{self.stderr_c!r},{self.bound!r},{int(self.estimate_c <= self.bound + 3 * self.stderr_c)}",
            f"{self.k},{self.p!r},D,{self.estimate_d!r},{self.stderr_d!r},{self.bound!r},{int(self.estimate_d <= self.bound + 3 * self.stderr_d)}",
        ]


def _mean_se(x: list) -> tuple[float, float]:
    if not x:
        return math.nan, math.nan
    a = np.asarray(x, dtype=float)
    se = a.std(ddof=1) / math.sqrt(a.size) if a.size > 1 else math.nan
    return float(a.mean()), float(se)


def q_k_estimate(pmf, p: float, scales: ScaleHierarchy, k: int, environments: int, configs_per_env: int, seed: int,
                 max_rows: int = 10**5) -> QkReport:
    """Failure frequencies of C_{0,0}^k and D_{0,0}^k under good environments.

    Environments come from the stationary one-sided law on [0, 2L_k) and are
    kept when I_0^k (for D) and also I_1^k (for C) are good. Each kept
    environment is probed with ``configs_per_env`` bond configurations; the
    reported estimates average the per-environment failure frequencies and the
    per-environment maxima are returned alongside (the supremum over all
    environments is out of reach).
    """
    L, H = scales.L[k], scales.H[k]
    if 2 * H > max_rows:
        raise ValueError(f"2H_{k} = {2 * H} rows exceeds the budget of {max_rows}")
    fail_c, fail_d = [], []
    attempts = 0
    while len(fail_d) < environments:
        attempts += 1
        if attempts > 1000 * environments:
            break
        env = sample_renewal(pmf, "stationary-delay", (0, 2 * L), child_seed(seed, attempts, f"env{k}"))
        bad = classify_intervals(env.points, scales, k, n_top=2)[k]
        if bad[0]:
            continue
        fc, fd = 0, 0
        for m in range(configs_per_env):
            cfg = sample_bond_config(env.points, p, (0, 2 * L), 2 * H, child_seed(seed, attempts, f"bonds{k}.{m}"))
            fd += not crossing(cfg, d_rect(scales, k, 0, 0), "v")
            if not bad[1]:
                fc += not crossing(cfg, c_rect(scales, k, 0, 0), "h")
        fail_d.append(fd / configs_per_env)
        if not bad[1]:
            fail_c.append(fc / configs_per_env)
    ec, sc = _mean_se(fail_c)
    ed, sd = _mean_se(fail_d)
    bound = math.exp(-(scales.L[k] ** scales.beta)) if scales.beta is not None else math.nan
    diag = ""
    if attempts and 1 - len(fail_d) / attempts > 0.999:
        diag = "conditioning rejected more than 99.9% of environments"
    return QkReport(k, p, ec, sc, ed, sd, max(fail_c, default=math.nan), max(fail_d, default=math.nan),
                    len(fail_c), len(fail_d), attempts, bound, diag)


def _crossing_table(columns, rows: int, rect, orientation: str):
    """All edge states of the rectangle with the crossing indicator (exhaustive)."""
    w = len(columns)
    cfg0 = BondConfig(np.asarray(columns), rows, 1.0, (rect[0], rect[1]), np.zeros((w, rows - 1)), np.zeros((max(w - 1, 0), rows)))
    nv, nh = w * (rows - 1), max(w - 1, 0) * rows
    out = []
    for bits in itertools.product((False, True), repeat=nv + nh):
        vert = np.array(bits[:nv], bool).reshape(w, rows - 1)
        hor = np.array(bits[nv:], bool).reshape(max(w - 1, 0), rows)
        out.append((vert, hor, crossing_reference(cfg0.with_states(vert, hor), rect, orientation)))
    return out


def exact_failure_given_env(columns, rows: int, p: Fraction, rect, orientation: str) -> Fraction:
    """P(no crossing) for a fixed environment, by enumerating every edge configuration."""
    gaps = np.diff(np.asarray(columns))
    total = Fraction(0)
    for vert, hor, crossed in _crossing_table(columns, rows, rect, orientation):
        if crossed:
            continue
        prob = Fraction(1)
        for o in vert.ravel():
            prob *= p if o else 1 - p
        for g, row in zip(gaps, hor):
            q = p ** int(g)
            for o in row:
                prob *= q if o else 1 - q
        total += prob
    return total


def exact_q0(pmf, p: Fraction, scales: ScaleHierarchy) -> tuple[Fraction, Fraction]:
    """Exact conditional failure probabilities of C_{0,0}^0 and D_{0,0}^0.

    Averages over all environment patterns on [0, 2L_0) weighted by their
    stationary probability and conditioned on the goodness requirements.
    """
    L, H = scales.L[0], scales.H[0]
    width = 2 * L
    num_c = den_c = num_d = den_d = Fraction(0)
    for r in range(width + 1):
        for pts in itertools.combinations(range(width), r):
            w = pattern_probability(pmf, pts, width)
            if w == 0:
                continue
            good0 = not classify_intervals_reference(pts, scales, 0, 0)
            good1 = not classify_intervals_reference(pts, scales, 0, 1)
            if not good0:
                continue
            cols0 = [x for x in pts if x < L]
            den_d += w
            num_d += w * exact_failure_given_env(cols0, 2 * H, p, (0, L, 0, 2 * H), "v")
            if good1:
                den_c += w
                num_c += w * exact_failure_given_env(list(pts), H, p, (0, 2 * L, 0, H), "h")
    return num_c / den_c, num_d / den_d
