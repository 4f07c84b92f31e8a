"""Harris graphical representation and the contact process built on it.

Recovery marks are rate-1 Poisson processes on vertices, transmission marks
rate-lambda Poisson processes on edges. A transmission mark is undirected: it
infects whichever endpoint is healthy if exactly one endpoint is infected.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.stats import poisson

from .seeding import stream

INFECTED = "infected"
RECOVERED = "recovered"


def _csr_marks(n_carriers: int, rate: float, horizon: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Independent Poisson(rate) marks on [0, horizon) per carrier, sorted within carriers."""
    if rate == 0 or n_carriers == 0:
        return np.zeros(n_carriers + 1, dtype=np.int64), np.empty(0)
    counts = rng.poisson(rate * horizon, size=n_carriers)
    ptr = np.zeros(n_carriers + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    times = rng.uniform(0.0, horizon, size=int(ptr[-1]))
    owner = np.repeat(np.arange(n_carriers), counts)
    order = np.lexsort((times, owner))
    return ptr, times[order]


def _csr_from_lists(lists: list) -> tuple[np.ndarray, np.ndarray]:
    ptr = np.zeros(len(lists) + 1, dtype=np.int64)
    np.cumsum([len(x) for x in lists], out=ptr[1:])
    times = np.array([t for x in lists for t in sorted(x)], dtype=float)
    return ptr, times


@dataclass(frozen=True, eq=False)
class GraphicalRep:
    """Marks on a finite graph over [0, horizon).

    ``vertices`` are sorted integer labels, ``edges`` pairs of labels. Marks are
    stored compressed: the recovery times of vertex index v are
    ``rec_times[rec_ptr[v]:rec_ptr[v + 1]]``, likewise for edges.
    """

    vertices: np.ndarray
    edges: np.ndarray
    lam: float
    horizon: float
    rec_ptr: np.ndarray = field(repr=False)
    rec_times: np.ndarray = field(repr=False)
    tr_ptr: np.ndarray = field(repr=False)
    tr_times: np.ndarray = field(repr=False)
    seed: int | None = None
    window_fingerprint: tuple | None = None

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.size)

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    def index_of(self, labels) -> np.ndarray:
        labels = np.asarray(labels, dtype=np.int64)
        idx = np.searchsorted(self.vertices, labels)
        ok = (idx < self.vertices.size) & (self.vertices[np.minimum(idx, self.vertices.size - 1)] == labels)
        if not np.all(ok):
            raise ValueError("vertex label outside the representation")
        return idx

    @cached_property
    def edge_index(self) -> np.ndarray:
        """Edges as (E, 2) vertex indices."""
        return self.index_of(self.edges.ravel()).reshape(-1, 2) if self.n_edges else np.empty((0, 2), dtype=np.int64)

    @cached_property
    def incidence(self) -> list[list[int]]:
        inc = [[] for _ in range(self.n_vertices)]
        for e, (a, b) in enumerate(self.edge_index.tolist()):
            inc[a].append(e)
            inc[b].append(e)
        return inc

    def recoveries(self, v: int) -> np.ndarray:
        return self.rec_times[self.rec_ptr[v]: self.rec_ptr[v + 1]]

    def transmissions(self, e: int) -> np.ndarray:
        return self.tr_times[self.tr_ptr[e]: self.tr_ptr[e + 1]]

    @property
    def n_marks(self) -> int:
        return int(self.rec_times.size + self.tr_times.size)

    def to_json(self) -> str:
        rec_owner = np.repeat(self.vertices, np.diff(self.rec_ptr))
        tr_owner = np.repeat(np.arange(self.n_edges), np.diff(self.tr_ptr))
        return json.dumps(
            {
                "lambda": self.lam,
                "horizon": self.horizon,
                "seed": self.seed,
                "vertices": self.vertices.tolist(),
                "edges": self.edges.tolist(),
                "recoveries": [[int(v), float(t)] for v, t in zip(rec_owner, self.rec_times)],
                "transmissions": [[int(e), float(t)] for e, t in zip(tr_owner, self.tr_times)],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "GraphicalRep":
        obj = json.loads(text)
        vertices = np.asarray(obj["vertices"], dtype=np.int64)
        edges = np.asarray(obj["edges"], dtype=np.int64).reshape(-1, 2)
        rec = [[] for _ in vertices]
        pos = {int(v): i for i, v in enumerate(vertices)}
        for v, t in obj["recoveries"]:
            rec[pos[v]].append(t)
        tr = [[] for _ in range(edges.shape[0])]
        for e, t in obj["transmissions"]:
            tr[e].append(t)
        return rep_from_marks(vertices, edges, rec, tr, obj["lambda"], obj["horizon"], seed=obj["seed"])


def rep_from_marks(vertices, edges, recoveries, transmissions, lam: float, horizon: float, seed=None, fingerprint=None) -> GraphicalRep:
    """Representation with explicitly given mark times (lists per carrier)."""
    vertices = np.asarray(vertices, dtype=np.int64)
    if np.any(np.diff(vertices) <= 0):
        raise ValueError("vertex labels must be strictly increasing")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    rec_ptr, rec_times = _csr_from_lists(list(recoveries))
    tr_ptr, tr_times = _csr_from_lists(list(transmissions))
    for arr in (rec_times, tr_times):
        if arr.size and (arr.min() < 0 or arr.max() >= horizon):
            raise ValueError("mark times must lie in [0, horizon)")
    return GraphicalRep(vertices, edges, float(lam), float(horizon), rec_ptr, rec_times, tr_ptr, tr_times, seed, fingerprint)


def sample_graph_rep(vertices, edges, lam: float, horizon: float, seed: int, fingerprint=None) -> GraphicalRep:
    """Poisson marks on an arbitrary finite graph."""
    if lam < 0:
        raise ValueError("infection rate must be nonnegative")
    if not (horizon > 0 and math.isfinite(horizon)):
        raise ValueError("horizon must be positive and finite")
    vertices = np.asarray(vertices, dtype=np.int64)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    rec_ptr, rec_times = _csr_marks(vertices.size, 1.0, horizon, stream(seed, 0, "recovery"))
    tr_ptr, tr_times = _csr_marks(edges.shape[0], lam, horizon, stream(seed, 0, "transmission"))
    return GraphicalRep(vertices, edges, float(lam), float(horizon), rec_ptr, rec_times, tr_ptr, tr_times, seed, fingerprint)


def sample_rep(window, lam: float, horizon: float, seed: int) -> GraphicalRep:
    """Marks for every vertex and edge of a sampled window."""
    vertices = np.arange(window.lo, window.hi + 1, dtype=np.int64)
    return sample_graph_rep(vertices, window.all_edges, lam, horizon, seed, window.fingerprint)


def _with_transmissions(rep: GraphicalRep, keep: np.ndarray, lam: float) -> GraphicalRep:
    owner = np.repeat(np.arange(rep.n_edges), np.diff(rep.tr_ptr))
    counts = np.bincount(owner[keep], minlength=rep.n_edges)
    ptr = np.zeros(rep.n_edges + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return GraphicalRep(
        rep.vertices, rep.edges, float(lam), rep.horizon, rep.rec_ptr, rep.rec_times, ptr, rep.tr_times[keep],
        rep.seed, rep.window_fingerprint,
    )


def coupled_thinning(rep: GraphicalRep, lam_prime: float, seed: int) -> GraphicalRep:
    """Keep each transmission mark independently with probability lam_prime / lam."""
    if lam_prime < 0 or lam_prime > rep.lam:
        raise ValueError("thinning needs 0 <= lam_prime <= lam")
    if lam_prime == rep.lam:
        return rep
    u = stream(seed, 0, "thinning").random(rep.tr_times.size)
    return _with_transmissions(rep, u < lam_prime / rep.lam, lam_prime)


def thinning_ladder(rep: GraphicalRep, lambdas, seed: int) -> list[GraphicalRep]:
    """Nested thinnings: one uniform per mark, kept at rate lam' iff u < lam'/lam."""
    u = stream(seed, 0, "thinning").random(rep.tr_times.size)
    out = []
    for lp in lambdas:
        if lp < 0 or lp > rep.lam:
            raise ValueError("ladder rates must lie in [0, lam]")
        if rep.lam == 0:
            out.append(rep)
            continue
        out.append(_with_transmissions(rep, u < lp / rep.lam, lp))
    return out


@dataclass(frozen=True)
class InfectionTrace:
    initial: frozenset
    events: list  # (time, vertex label, INFECTED | RECOVERED), time-ordered
    extinction_time: float | None  # None means the infection survived to the horizon
    t_start: float
    horizon: float

    @property
    def survived(self) -> bool:
        return self.extinction_time is None

    def infected_at(self, t: float) -> frozenset:
        cur = set()
        for time, v, kind in self.events:
            if time > t:
                break
            if kind == INFECTED:
                cur.add(v)
            else:
                cur.discard(v)
        return frozenset(cur)

    def ever_infected(self) -> frozenset:
        return frozenset(v for _, v, kind in self.events if kind == INFECTED)

    def episodes(self) -> list[tuple[int, float, float]]:
        """(vertex, infection time, recovery time or horizon) for every infected stretch."""
        start = {}
        out = []
        for time, v, kind in self.events:
            if kind == INFECTED:
                start[v] = time
            else:
                out.append((v, start.pop(v), time))
        end = self.horizon
        out.extend((v, t0, end) for v, t0 in start.items())
        return out

    def to_csv(self) -> str:
        lines = ["time,vertex,event"]
        lines += [f"{t!r},{v},{k}" for t, v, k in self.events]
        return "\n".join(lines) + "\n"


def run_contact(rep: GraphicalRep, initial, t_start: float = 0.0) -> InfectionTrace:
    """Evolve the infection from ``initial`` at ``t_start`` through the marks.

    Marks are visited lazily: a carrier is put on the heap only while it
    touches an infected vertex, with at most one pending entry per carrier.
    Heap keys are (time, carrier id), vertices before edges, which fixes the
    order of coincident marks.
    """
    initial = frozenset(int(v) for v in initial)
    nv = rep.n_vertices
    labels = rep.vertices
    idx0 = rep.index_of(sorted(initial)) if initial else np.empty(0, dtype=np.int64)
    inc = rep.incidence
    ends = rep.edge_index
    rec_ptr, rec_times = rep.rec_ptr, rep.rec_times
    tr_ptr, tr_times = rep.tr_ptr, rep.tr_times

    infected = np.zeros(nv, dtype=bool)
    pending = np.zeros(rep.n_edges, dtype=bool)
    heap: list = []
    events: list = []
    count = 0

    def next_mark(ptr, times, c, t):
        a, b = ptr[c], ptr[c + 1]
        if a == b:
            return None
        k = a + int(np.searchsorted(times[a:b], t, side="right"))
        return float(times[k]) if k < b else None

    def infect(v: int, t: float):
        nonlocal count
        infected[v] = True
        count += 1
        events.append((t, int(labels[v]), INFECTED))
        r = next_mark(rec_ptr, rec_times, v, t)
        if r is not None:
            heapq.heappush(heap, (r, v))
        for e in inc[v]:
            if not pending[e]:
                m = next_mark(tr_ptr, tr_times, e, t)
                if m is not None:
                    pending[e] = True
                    heapq.heappush(heap, (m, nv + e))

    for v in idx0.tolist():
        infect(v, t_start)
    if count == 0:
        return InfectionTrace(initial, events, t_start, t_start, rep.horizon)

    while heap:
        t, c = heapq.heappop(heap)
        if c < nv:
            infected[c] = False
            count -= 1
            events.append((t, int(labels[c]), RECOVERED))
            if count == 0:
                return InfectionTrace(initial, events, t, t_start, rep.horizon)
            continue
        e = c - nv
        pending[e] = False
        a, b = ends[e]
        ia, ib = infected[a], infected[b]
        if ia != ib:
            infect(b if ia else a, t)
        elif not ia:
            continue  # both healthy: stop watching this edge
        if not pending[e]:
            m = next_mark(tr_ptr, tr_times, e, t)
            if m is not None:
                pending[e] = True
                heapq.heappush(heap, (m, c))
    return InfectionTrace(initial, events, None, t_start, rep.horizon)


def path_search_oracle(rep: GraphicalRep, initial, query_times, t_start: float = 0.0) -> list[frozenset]:
    """Infected sets at ``query_times`` by searching infection paths in the mark diagram.

    Each vertex's time line is cut at its recovery marks into segments. A path
    enters a segment either from the initial set or along a transmission arrow
    whose time falls inside an active segment of the other endpoint; we relax
    earliest entry times until nothing changes. Shares no code with
    ``run_contact``.
    """
    nv = rep.n_vertices
    pos = {int(v): i for i, v in enumerate(rep.vertices.tolist())}
    cuts = []
    for v in range(nv):
        r = [x for x in rep.recoveries(v).tolist() if x > t_start]
        cuts.append([t_start] + r + [math.inf])
    # entry[v][i]: earliest time a path is alive on segment i of v (None = never)
    entry = [[None] * (len(c) - 1) for c in cuts]
    for a in initial:
        entry[pos[int(a)]][0] = t_start

    def segment(v, t):
        c = cuts[v]
        lo, hi = 0, len(c) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if c[mid] <= t:
                lo = mid
            else:
                hi = mid
        return lo

    arrows = []
    for e, (a, b) in enumerate(rep.edges.tolist()):
        for t in rep.transmissions(e).tolist():
            if t > t_start:
                arrows.append((pos[a], pos[b], t))
    changed = True
    while changed:
        changed = False
        for a, b, t in arrows:
            for src, dst in ((a, b), (b, a)):
                e0 = entry[src][segment(src, t)]
                if e0 is None or e0 > t:
                    continue
                j = segment(dst, t)
                cur = entry[dst][j]
                if cur is None or t < cur:
                    entry[dst][j] = t
                    changed = True
    out = []
    for q in query_times:
        s = set()
        for v in range(nv):
            e0 = entry[v][segment(v, q)]
            if e0 is not None and e0 <= q:
                s.add(int(rep.vertices[v]))
        out.append(frozenset(s))
    return out


# states of the two-vertex chain: index = a + 2 b with a, b the infection indicators
TWO_VERTEX_STATES = ((0, 0), (1, 0), (0, 1), (1, 1))


def two_vertex_generator(lam: float) -> np.ndarray:
    q = np.zeros((4, 4))
    q[1, 0] = q[2, 0] = 1.0  # single infected vertex recovers
    q[1, 3] = q[2, 3] = lam  # transmission across the edge
    q[3, 2] = 1.0  # vertex 0 recovers
    q[3, 1] = 1.0  # vertex 1 recovers
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


def two_vertex_oracle(lam: float, t: float, start=(1, 0), tol: float = 1e-15) -> np.ndarray:
    """Distribution at time t of the contact process on one edge, by uniformization.

    exp(Qt) = sum_k Pois(k; Ut) P^k with P = I + Q/U; the series is cut where
    the Poisson tail drops below ``tol``, which bounds the total error.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    q = two_vertex_generator(lam)
    x = np.zeros(4)
    x[start[0] + 2 * start[1]] = 1.0
    if t == 0:
        return x
    u = max(-q.diagonal().min(), 1e-300)
    p = np.eye(4) + q / u
    mu = u * t
    kmax = int(poisson.isf(tol, mu)) + 1
    weights = poisson.pmf(np.arange(kmax + 1), mu)
    out = np.zeros(4)
    v = x.copy()
    for k in range(kmax + 1):
        out += weights[k] * v
        v = v @ p
    return out
