"""Long-range percolation on a finite window of the integers.

The edge {i, j} is open with probability |i - j|^(-s); nearest-neighbour edges
are always open. A window stores the long edges (length >= 2) explicitly and
leaves the length-one edges implicit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import zeta as hurwitz_zeta

from .seeding import stream

# Hard caps on what a single window may allocate.
MAX_VERTICES = 200_000_000
MAX_EXPECTED_EDGES = 50_000_000

# Relative slack applied to closed-form bounds to absorb floating-point rounding.
_ROUNDING_SLACK = 1e-10


class WindowTooLarge(MemoryError):
    """Raised when a requested window would exceed the memory budget."""


@dataclass(frozen=True)
class GraphParams:
    s: float
    half_width: int
    buffer: int = 0
    seed: int = 0

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"tail exponent must be positive, got {self.s}")
        if self.half_width < 1:
            raise ValueError("half_width must be at least 1")
        if self.buffer < 0 or self.buffer >= self.half_width:
            raise ValueError("buffer must satisfy 0 <= buffer < half_width")

    @property
    def inner_lo(self) -> int:
        return -self.half_width + self.buffer

    @property
    def inner_hi(self) -> int:
        return self.half_width - self.buffer

    @property
    def n_vertices(self) -> int:
        return 2 * self.half_width + 1


def edge_open_probability(distance: int, s: float) -> float:
    """Probability that an edge of the given length is open."""
    if distance < 1:
        raise ValueError("distance must be >= 1 (self-loops are not edges)")
    return float(distance) ** (-s)


def one_sided_exterior_sum(d, s: float):
    """sum_{l >= d+2} (l - d - 1) l^(-s).

    Union bound for edges that jump from the left of a site to beyond a
    boundary lying ``d`` steps to its right. Vectorised over ``d``.
    """
    d = np.asarray(d, dtype=float)
    if s <= 2:
        return np.full(d.shape, np.inf)
    q = d + 2.0
    val = hurwitz_zeta(s - 1.0, q) - (d + 1.0) * hurwitz_zeta(s, q)
    return np.maximum(val, 0.0) * (1.0 + _ROUNDING_SLACK)


def over_origin_sum(s: float) -> float:
    """sum_{i < 0 < j} (j - i)^(-s) = sum_{n >= 2} (n - 1) n^(-s)."""
    if s <= 2:
        raise ValueError("the over-origin sum diverges for s <= 2")
    return float(hurwitz_zeta(s - 1.0, 2.0) - hurwitz_zeta(s, 2.0))


def exterior_crossing_bound(position, params: GraphParams):
    """Upper bound on P(some edge not visible in the window straddles ``position``)."""
    a = np.asarray(position)
    if np.any(np.abs(a) > params.half_width - params.buffer):
        raise ValueError("position must lie in the inner window")
    if params.s <= 2:
        return np.ones(a.shape) if a.ndim else 1.0
    n = params.half_width
    b = one_sided_exterior_sum(n - a, params.s) + one_sided_exterior_sum(n + a, params.s)
    b = np.minimum(b, 1.0)
    return b if a.ndim else float(b)


def buffer_for_error(s: float, target: float, inner_half_width: int) -> int:
    """Smallest buffer B such that every site of the inner window
    [-inner, inner] of a window with half-width inner + B has exterior
    error at most ``target``."""
    if s <= 2:
        raise ValueError("no finite buffer certifies a window when s <= 2")
    if not 0 < target < 1:
        raise ValueError("target must lie in (0, 1)")

    def worst(b: int) -> float:
        return float(one_sided_exterior_sum(b, s) + one_sided_exterior_sum(2 * inner_half_width + b, s))

    if worst(0) <= target:
        return 0
    hi = 1
    while worst(hi) > target:
        hi *= 2
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if worst(mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def certified_params(s: float, inner_half_width: int, target: float, seed: int = 0) -> GraphParams:
    """Window parameters whose inner window is [-inner, inner] with exterior error <= target."""
    b = buffer_for_error(s, target, inner_half_width)
    return GraphParams(s=s, half_width=inner_half_width + b, buffer=b, seed=seed)


def _expected_long_edges(n_vertices: int, s: float) -> float:
    lengths = np.arange(2, n_vertices, dtype=float)
    if lengths.size == 0:
        return 0.0
    return float(np.sum((n_vertices - lengths) * lengths ** (-s)))


@dataclass(frozen=True, eq=False)
class GraphWindow:
    """A sampled window [-N, N].

    ``left``/``right`` hold the long edges (length >= 2) sorted
    lexicographically; ``uniforms`` holds the uniform each edge was accepted
    with, which must be below ``length^(-s)``.
    """

    params: GraphParams
    left: np.ndarray
    right: np.ndarray
    uniforms: np.ndarray = field(repr=False)

    @property
    def s(self) -> float:
        return self.params.s

    @property
    def lo(self) -> int:
        return -self.params.half_width

    @property
    def hi(self) -> int:
        return self.params.half_width

    @property
    def n_long_edges(self) -> int:
        return int(self.left.size)

    @property
    def n_edges(self) -> int:
        return self.n_long_edges + 2 * self.params.half_width

    @cached_property
    def fingerprint(self) -> tuple:
        """Identifies the window; used to reject mixing objects from different windows."""
        return (self.params, self.n_long_edges, hash(self.left.tobytes()), hash(self.right.tobytes()))

    @cached_property
    def all_edges(self) -> np.ndarray:
        """Every window edge, length-one included, as an (E, 2) array sorted lexicographically."""
        unit_left = np.arange(self.lo, self.hi, dtype=np.int64)
        lefts = np.concatenate([unit_left, self.left])
        rights = np.concatenate([unit_left + 1, self.right])
        order = np.lexsort((rights, lefts))
        out = np.empty((lefts.size, 2), dtype=np.int64)
        out[:, 0] = lefts[order]
        out[:, 1] = rights[order]
        out.setflags(write=False)
        return out

    def exterior_error_at(self, position):
        return exterior_crossing_bound(position, self.params)

    @cached_property
    def exterior_error(self) -> np.ndarray:
        """Exterior error for every inner-window position, indexed from inner_lo."""
        pos = np.arange(self.params.inner_lo, self.params.inner_hi + 1)
        return exterior_crossing_bound(pos, self.params)

    def at_exponent(self, s_new: float) -> "GraphWindow":
        """The window at a larger exponent, coupled through the stored uniforms."""
        if s_new < self.s:
            raise ValueError("coupling only thins: s_new must be >= s")
        if np.any(np.isnan(self.uniforms)):
            raise ValueError("window has no stored uniforms (loaded from JSON)")
        lengths = (self.right - self.left).astype(float)
        keep = self.uniforms < lengths ** (-s_new)
        params = GraphParams(s_new, self.params.half_width, self.params.buffer, self.params.seed)
        return GraphWindow(params, self.left[keep], self.right[keep], self.uniforms[keep])

    def to_json(self) -> str:
        edges = self.all_edges.tolist()
        return json.dumps(
            {
                "s": self.s,
                "halfWidth": self.params.half_width,
                "buffer": self.params.buffer,
                "seed": self.params.seed,
                "edges": edges,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "GraphWindow":
        obj = json.loads(text)
        params = GraphParams(obj["s"], obj["halfWidth"], obj["buffer"], obj["seed"])
        e = np.asarray(obj["edges"], dtype=np.int64).reshape(-1, 2)
        long_ = e[:, 1] - e[:, 0] >= 2
        return from_edges(params, e[long_])

    def edges_by_length(self, length: int) -> np.ndarray:
        if length == 1:
            return np.arange(self.lo, self.hi, dtype=np.int64)
        mask = (self.right - self.left) == length
        return self.left[mask]


def from_edges(params: GraphParams, edges) -> GraphWindow:
    """Build a window from an explicit list of long edges (no stored uniforms)."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size:
        lo = np.minimum(e[:, 0], e[:, 1])
        hi = np.maximum(e[:, 0], e[:, 1])
        if np.any(hi - lo < 1) or lo.min() < -params.half_width or hi.max() > params.half_width:
            raise ValueError("edges must join distinct vertices inside the window")
        keep = hi - lo >= 2
        lo, hi = lo[keep], hi[keep]
        pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
        lo, hi = pairs[:, 0], pairs[:, 1]
    else:
        lo = hi = np.empty(0, dtype=np.int64)
    return GraphWindow(params, lo, hi, np.full(lo.size, np.nan))


def sample_window(params: GraphParams) -> GraphWindow:
    """Sample every pair of the window independently with probability length^(-s).

    For each length the number of open pairs is drawn as a binomial and their
    left endpoints are chosen uniformly without replacement; each accepted pair
    also gets its conditional uniform, so thinning to a larger exponent is the
    same as comparing one shared uniform per pair against both thresholds.
    """
    n = params.n_vertices
    if n > MAX_VERTICES:
        raise WindowTooLarge(f"{n} vertices exceeds budget {MAX_VERTICES}")
    expected = _expected_long_edges(n, params.s)
    if expected > MAX_EXPECTED_EDGES:
        raise WindowTooLarge(f"about {expected:.3g} long edges expected, budget {MAX_EXPECTED_EDGES}")

    rng = stream(params.seed, 0, "graph")
    lengths = np.arange(2, n, dtype=np.int64)
    if lengths.size == 0:
        empty = np.empty(0, dtype=np.int64)
        return GraphWindow(params, empty, empty, np.empty(0))
    q = lengths.astype(float) ** (-params.s)
    counts = rng.binomial(n - lengths, q)

    lefts, rights, us = [], [], []
    for idx in np.flatnonzero(counts):
        ell = int(lengths[idx])
        c = int(counts[idx])
        slots = n - ell
        if c == slots:
            start = np.arange(slots, dtype=np.int64)
        else:
            start = rng.choice(slots, size=c, replace=False).astype(np.int64)
        start -= params.half_width
        lefts.append(start)
        rights.append(start + ell)
        us.append(q[idx] * rng.random(c))
    if lefts:
        left = np.concatenate(lefts)
        right = np.concatenate(rights)
        u = np.concatenate(us)
        order = np.lexsort((right, left))
        left, right, u = left[order], right[order], u[order]
    else:
        left = right = np.empty(0, dtype=np.int64)
        u = np.empty(0)
    return GraphWindow(params, left, right, u)
