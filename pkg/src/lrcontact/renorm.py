"""Space-time renormalization: good boxes, blocking semi-circuits, confinement checks.

Time is cut into blocks [jT, (j+1)T). Box (k, j) is good when every vertex of
column V_k has a recovery mark in the block and no edge of E_k carries a
transmission mark there. Good boxes cannot be crossed by the infection, so a
chain of good boxes around the origin box traps it.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import sympy

from .contact import GraphicalRep, run_contact
from .cutpoints import NO_FAMILY, Decomposition


def block_length(lam: float) -> float:
    """T = lam^(-1/2)."""
    if not lam > 0:
        raise ValueError("block length needs lam > 0")
    return lam ** -0.5


def p_of_T(T: float) -> float:
    """(1 - e^-T) e^(-1/T): per-edge lower bound on the good-box probability."""
    if not T > 0:
        raise ValueError("T must be positive")
    return -math.expm1(-T) * math.exp(-1.0 / T)


def good_probability_closed_form(n_vertices: int, n_edges: int, lam: float, T: float) -> tuple[float, float]:
    """(P(box good), p^n_edges) for a column with the given sizes.

    P(good) = (1 - e^-T)^|V| e^(-lam T |E|). When T = lam^(-1/2) this is at
    least p(T)^|E| because |V| <= |E|; that inequality is asserted.
    """
    if n_vertices < 1 or n_edges < n_vertices:
        raise ValueError("need 1 <= n_vertices <= n_edges")
    closed = (-math.expm1(-T)) ** n_vertices * math.exp(-lam * T * n_edges)
    bound = p_of_T(T) ** n_edges
    if lam > 0 and math.isclose(T, lam ** -0.5, rel_tol=1e-12) and closed < bound * (1 - 1e-12):
        raise ArithmeticError("good-box probability fell below p^|E| at T = lam^(-1/2)")
    return closed, bound


def domination_holds_exact(n_vertices: int, n_edges: int, lam) -> bool:
    """Decide (1-e^-T)^V e^(-lam T E) >= ((1-e^-T) e^(-1/T))^E at T = lam^(-1/2) symbolically."""
    lam = sympy.Rational(Fraction(lam).limit_denominator(10**12)) if not isinstance(lam, sympy.Basic) else lam
    T = 1 / sympy.sqrt(lam)
    one_minus = 1 - sympy.exp(-T)
    log_gap = (n_vertices - n_edges) * sympy.log(one_minus) + n_edges * (1 / T - lam * T)
    log_gap = sympy.simplify(log_gap)
    if log_gap == 0:
        return True
    # (V - E) log(1 - e^-T) with V <= E is >= 0 and 1/T - lam T vanishes exactly
    val = sympy.N(log_gap, 60)
    if abs(val) < sympy.Float("1e-50"):
        raise ArithmeticError("could not decide the sign symbolically")
    return bool(val > 0)


@dataclass(frozen=True, eq=False)
class RenormGrid:
    T: float
    rows: int
    columns: np.ndarray  # column labels k, increasing
    good: np.ndarray = field(repr=False)  # (len(columns), rows) bool
    n_vertices: np.ndarray = field(repr=False)
    n_edges: np.ndarray = field(repr=False)
    lam: float = float("nan")

    @property
    def p(self) -> float:
        return p_of_T(self.T)

    @property
    def p_column(self) -> np.ndarray:
        return self.p ** self.n_edges.astype(float)

    @property
    def origin(self) -> int:
        hit = np.flatnonzero(self.columns == 0)
        if hit.size != 1:
            raise ValueError("grid has no column 0")
        return int(hit[0])

    def good_at(self, k: int, j: int) -> bool:
        c = int(np.searchsorted(self.columns, k))
        return bool(self.good[c, j])

    def closed_form(self) -> np.ndarray:
        """Exact per-column good probability at the grid's lam and T."""
        return (-math.expm1(-self.T)) ** self.n_vertices * np.exp(-self.lam * self.T * self.n_edges)

    def to_csv(self) -> str:
        lines = ["k,j,good"]
        for c, k in enumerate(self.columns.tolist()):
            lines += [f"{k},{j},{int(self.good[c, j])}" for j in range(self.rows)]
        return "\n".join(lines) + "\n"


def classify_columns(rep: GraphicalRep, vertex_col: np.ndarray, edge_col: np.ndarray, n_cols: int, T: float, rows: int) -> np.ndarray:
    """Good matrix for an arbitrary assignment of vertices/edges to column slots (-1 = none)."""
    if rows * T > rep.horizon * (1 + 1e-12):
        raise ValueError("representation horizon shorter than rows * T")
    size = np.bincount(vertex_col[vertex_col >= 0], minlength=n_cols)
    rec_owner = np.repeat(np.arange(rep.n_vertices), np.diff(rep.rec_ptr))
    rb = np.floor(rep.rec_times / T).astype(np.int64)
    ok = (rb < rows) & (vertex_col[rec_owner] >= 0)
    hit = np.zeros((rep.n_vertices, rows), dtype=bool)
    hit[rec_owner[ok], rb[ok]] = True
    vv, jj = np.nonzero(hit)
    recovered = np.zeros((n_cols, rows), dtype=np.int64)
    np.add.at(recovered, (vertex_col[vv], jj), 1)
    good = recovered == size[:, None]
    tr_owner = np.repeat(np.arange(rep.n_edges), np.diff(rep.tr_ptr))
    tb = np.floor(rep.tr_times / T).astype(np.int64)
    ok = (tb < rows) & (edge_col[tr_owner] >= 0)
    good[edge_col[tr_owner[ok]], tb[ok]] = False
    return good


def _slots(rep: GraphicalRep, dec: Decomposition):
    if rep.window_fingerprint is not None and rep.window_fingerprint != dec.window_fingerprint:
        raise ValueError("representation and decomposition come from different windows")
    if rep.edges.shape != dec.edges.shape or not np.array_equal(rep.edges, dec.edges):
        raise ValueError("representation edges do not match the decomposition's window")
    vk = dec.column_of(rep.vertices)
    vslot = np.where(vk == NO_FAMILY, -1, np.searchsorted(dec.column_index, vk))
    eslot = np.where(dec.family == NO_FAMILY, -1, np.searchsorted(dec.column_index, dec.family))
    return vslot.astype(np.int64), eslot.astype(np.int64)


def classify_good(rep: GraphicalRep, dec: Decomposition, T: float, rows: int | None = None) -> RenormGrid:
    """Good/bad flags for every column of the decomposition and every time block."""
    if rows is None:
        rows = int(math.floor(rep.horizon / T * (1 + 1e-12)))
    vslot, eslot = _slots(rep, dec)
    good = classify_columns(rep, vslot, eslot, dec.column_index.size, T, rows)
    return RenormGrid(T, rows, dec.column_index.copy(), good, dec.column_sizes.copy(), dec.family_sizes.copy(), rep.lam)


def classify_good_reference(rep: GraphicalRep, dec: Decomposition, T: float, rows: int) -> np.ndarray:
    """Definition-chasing re-scan of the marks, box by box."""
    fams = dec.edge_families
    eid = {tuple(e): i for i, e in enumerate(rep.edges.tolist())}
    out = np.zeros((dec.column_index.size, rows), dtype=bool)
    for c, k in enumerate(dec.column_index.tolist()):
        a, b = dec.intervals[k]
        verts = rep.index_of(np.arange(a, b + 1))
        edges = [eid[tuple(e)] for e in fams[k].tolist()]
        for j in range(rows):
            lo, hi = j * T, (j + 1) * T
            ok = all(any(lo <= t < hi for t in rep.recoveries(v).tolist()) for v in verts)
            ok = ok and not any(lo <= t < hi for e in edges for t in rep.transmissions(e).tolist())
            out[c, j] = ok
    return out


def recheck_grid(grid: RenormGrid, rep: GraphicalRep, dec: Decomposition) -> list[tuple[int, int]]:
    """Boxes whose stored flag disagrees with the marks."""
    fresh = classify_good(rep, dec, grid.T, grid.rows).good
    c, j = np.nonzero(fresh != grid.good)
    return [(int(grid.columns[a]), int(b)) for a, b in zip(c, j)]


def dominated_site_field(grid: RenormGrid, rng) -> np.ndarray:
    """Independent field with P(open) = p^|E_k| lying below the good flags.

    A good box is kept open with probability p^|E_k| / P(good), a bad box is
    closed; given P(good) >= p^|E_k| the result has exactly the target law.
    """
    target = grid.p_column
    exact = grid.closed_form()
    if np.any(exact < target * (1 - 1e-12)):
        raise ArithmeticError("good probability below the domination target")
    keep = np.minimum(target / exact, 1.0)
    u = rng.random(grid.good.shape)
    return grid.good & (u < keep[:, None])


@dataclass
class ExtinctionCertificate:
    circuit: list  # [(k, j), ...] in path order
    enclosed: set  # {(k, j)} boxes strictly inside the circuit
    T: float
    rows: int
    verified: bool = False

    def to_json(self) -> str:
        return json.dumps(
            {
                "circuit": [list(x) for x in self.circuit],
                "enclosedRegion": sorted(list(x) for x in self.enclosed),
                "T": self.T,
                "rows": self.rows,
                "verified": self.verified,
            }
        )


_FOUR = ((0, 1), (1, 0), (0, -1), (-1, 0))
_EIGHT = ((0, 1), (1, 0), (0, -1), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1))


def _flood(blocked: np.ndarray, start: tuple[int, int]) -> tuple[np.ndarray, bool]:
    """8-connected flood from ``start`` through unblocked cells; second value says whether
    the flood touches the side columns or the top row (i.e. reaches the exterior)."""
    nc, nr = blocked.shape
    seen = np.zeros_like(blocked)
    seen[start] = True
    q = deque([start])
    escaped = False
    while q:
        c, j = q.popleft()
        if c == 0 or c == nc - 1 or j == nr - 1:
            escaped = True
        for dc, dj in _EIGHT:
            a, b = c + dc, j + dj
            if 0 <= a < nc and 0 <= b < nr and not seen[a, b] and not blocked[a, b]:
                seen[a, b] = True
                q.append((a, b))
    return seen, escaped


def _barrier_path(good: np.ndarray, c0: int):
    """Shortest 4-connected path of good sites (origin excluded) from the floor left
    of column c0 to the floor right of it, by breadth-first search."""
    nc, nr = good.shape
    usable = good.copy()
    usable[c0, 0] = False
    parent = {}
    q = deque()
    for c in range(c0):
        if usable[c, 0]:
            parent[(c, 0)] = None
            q.append((c, 0))
    while q:
        cur = q.popleft()
        if cur[1] == 0 and cur[0] > c0:
            path = []
            while cur is not None:
                path.append(cur)
                cur = parent[cur]
            return path[::-1]
        c, j = cur
        for dc, dj in _FOUR:
            nxt = (c + dc, j + dj)
            if 0 <= nxt[0] < nc and 0 <= nxt[1] < nr and usable[nxt] and nxt not in parent:
                parent[nxt] = cur
                q.append(nxt)
    return None


def detect_semicircuit(grid: RenormGrid) -> ExtinctionCertificate | None:
    """First blocking semi-circuit of good boxes around the origin box, if any."""
    c0 = grid.origin
    if c0 == 0 or c0 == grid.columns.size - 1:
        raise ValueError("grid must contain columns on both sides of the origin")
    path = _barrier_path(grid.good, c0)
    if path is None:
        return None
    blocked = np.zeros_like(grid.good)
    for c, j in path:
        blocked[c, j] = True
    inside, escaped = _flood(blocked, (c0, 0))
    if escaped:
        raise RuntimeError("barrier path does not enclose the origin box")
    cols = grid.columns
    circuit = [(int(cols[c]), int(j)) for c, j in path]
    enclosed = {(int(cols[c]), int(j)) for c, j in zip(*np.nonzero(inside))}
    return ExtinctionCertificate(circuit, enclosed, grid.T, grid.rows)


def enclosure_exists_dual(good: np.ndarray, c0: int) -> bool:
    """Dual criterion: the origin's 8-connected cluster of non-good sites stays bounded."""
    blocked = good.copy()
    blocked[c0, 0] = False
    _, escaped = _flood(blocked, (c0, 0))
    return not escaped


def enclosure_exists_exhaustive(good: np.ndarray, c0: int) -> bool:
    """Enumerate every simple 4-path of good sites from the left floor (small grids only)."""
    nc, nr = good.shape
    usable = good.copy()
    usable[c0, 0] = False

    def dfs(cell, seen):
        if cell[1] == 0 and cell[0] > c0:
            return True
        c, j = cell
        for dc, dj in _FOUR:
            nxt = (c + dc, j + dj)
            if 0 <= nxt[0] < nc and 0 <= nxt[1] < nr and usable[nxt] and nxt not in seen:
                seen.add(nxt)
                if dfs(nxt, seen):
                    return True
                seen.discard(nxt)
        return False

    return any(usable[c, 0] and dfs((c, 0), {(c, 0)}) for c in range(c0))


def verify_confinement(rep: GraphicalRep, dec: Decomposition, cert: ExtinctionCertificate, origin: int = 0, strict: bool = False) -> bool:
    """Run the infection from {origin} and check it stays behind the barrier.

    The spatial span is the range of columns covered by the enclosed region
    together with the circuit; the infection must never reach a vertex outside
    it and must die before the end of the highest row of that set. With
    ``strict`` every infected stretch must also stay inside those very boxes.
    """
    allowed = cert.enclosed | set(cert.circuit)
    top = max(j for _, j in allowed)
    k_lo = min(k for k, _ in allowed)
    k_hi = max(k for k, _ in allowed)
    trace = run_contact(rep, [origin])
    cert.verified = False
    if trace.survived or trace.extinction_time >= (top + 1) * cert.T:
        return False
    episodes = trace.episodes()
    cols = dec.column_of([v for v, _, _ in episodes]) if episodes else []
    for (v, t0, t1), k in zip(episodes, cols):
        if k == NO_FAMILY or not k_lo <= k <= k_hi:
            return False
        if strict:
            j0 = int(math.floor(t0 / cert.T))
            j1 = int(math.floor(np.nextafter(t1, -np.inf) / cert.T)) if t1 > t0 else j0
            if any((int(k), j) not in allowed for j in range(j0, j1 + 1)):
                return False
    cert.verified = True
    return True
