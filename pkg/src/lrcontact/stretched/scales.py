"""Length and height scales, and the good/bad interval recursion.

L_k = L_{k-1} * floor(L_{k-1}^(gamma-1)) and H_k = 2 ceil(exp(L_k^mu)) H_{k-1}.
At scale 0 an interval [j L_0, (j+1) L_0) is bad when it holds no renewal
point; at scale k it is bad when two of its scale-(k-1) children that are not
neighbours are bad.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import mpmath as mp
import numpy as np

from ..seeding import stream
from .renewal import no_point_probability, stationary_delay_pmf, validate_pmf

MAX_EXPONENT = 1e6  # refuse to form exp(L^mu) beyond this exponent


def paper_exponents(epsilon: float) -> tuple[float, float, float]:
    """(gamma, mu, beta) as functions of epsilon."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    gamma = 1 + epsilon / (2 * (epsilon + 4))
    mu = 0.5 * (1 + 1 / gamma)
    beta = 1 - epsilon / (8 * (epsilon + 4))
    return gamma, mu, beta


def _floor_power(L: int, e: float) -> int:
    with mp.workdps(60):
        return int(mp.floor(mp.power(L, mp.mpf(e))))


def _height_factor(L: int, mu: float) -> int:
    """2 ceil(exp(L^mu)) as an exact integer."""
    with mp.workdps(30):
        x = mp.power(L, mp.mpf(mu))
    if x > MAX_EXPONENT:
        raise OverflowError(f"exp({float(x):.3g}) is beyond the supported height budget")
    with mp.workdps(int(x / 2.3) + 40):
        return 2 * int(mp.ceil(mp.exp(mp.power(L, mp.mpf(mu)))))


@dataclass(frozen=True)
class ScaleHierarchy:
    L: tuple[int, ...]
    H: tuple[int, ...]
    gamma: float
    mu: float
    epsilon: float | None
    beta: float | None
    mode: str

    @property
    def k_max(self) -> int:
        return len(self.L) - 1

    def children(self, k: int) -> int:
        """Number of scale-(k-1) intervals inside one scale-k interval."""
        return self.L[k] // self.L[k - 1]

    def recompute(self) -> "ScaleHierarchy":
        return build_scales(
            self.L[0], self.H[0], self.epsilon, self.k_max, self.mode,
            gamma=None if self.mode == "paper" else self.gamma,
            mu=None if self.mode == "paper" else self.mu,
            beta=None if self.mode == "paper" else self.beta,
            height=len(self.H) == len(self.L),
        )

    def p_bound(self, k: int) -> float:
        """L_k^(-epsilon/2)."""
        return float(self.L[k]) ** (-self.epsilon / 2)


def build_scales(
    L0: int, H0: int, epsilon: float | None, k_max: int, mode: str = "paper",
    gamma: float | None = None, mu: float | None = None, beta: float | None = None,
    height: bool = True,
) -> ScaleHierarchy:
    """Scales up to ``k_max``.

    ``mode="paper"`` derives gamma, mu, beta from epsilon; ``mode="desk"``
    takes gamma (and mu, when heights are wanted) from the caller. Heights grow
    like a tower of exponentials; pass ``height=False`` to skip them.
    """
    if L0 < 2 or H0 < 2:
        raise ValueError("need L0 > 1 and H0 > 1")
    if mode == "paper":
        if gamma is not None or mu is not None:
            raise ValueError("paper mode derives gamma and mu from epsilon")
        gamma, mu, beta = paper_exponents(epsilon)
    elif mode == "desk":
        if gamma is None:
            raise ValueError("desk mode needs gamma")
        if mu is None and epsilon is not None:
            mu = paper_exponents(epsilon)[1]
        if beta is None and epsilon is not None:
            beta = paper_exponents(epsilon)[2]
    else:
        raise ValueError("mode must be 'paper' or 'desk'")
    if not gamma > 1:
        raise ValueError("gamma must exceed 1")
    L = [int(L0)]
    H = [int(H0)]
    for k in range(1, k_max + 1):
        factor = _floor_power(L[-1], gamma - 1)
        if factor < 2:
            warnings.warn(f"floor(L_{k-1}^(gamma-1)) = {factor}: scales are degenerate at this L0", stacklevel=2)
        L.append(L[-1] * factor)
        if height:
            if mu is None:
                raise ValueError("heights need mu")
            H.append(_height_factor(L[-1], mu) * H[-1])
    return ScaleHierarchy(tuple(L), tuple(H), float(gamma), None if mu is None else float(mu), epsilon, beta, mode)


def bad_from_children(child_bad: np.ndarray, n_children: int) -> np.ndarray:
    """Parent status from a (..., n_parents * n_children) array of child statuses."""
    shape = child_bad.shape[:-1] + (child_bad.shape[-1] // n_children, n_children)
    c = child_bad[..., : shape[-2] * n_children].reshape(shape)
    idx = np.arange(n_children)
    first = np.where(c, idx, n_children).min(axis=-1)
    last = np.where(c, idx, -1).max(axis=-1)
    return last - first >= 2


def classify_intervals(points, scales: ScaleHierarchy, k_max: int | None = None, n_top: int = 1, origin: int = 0) -> list[np.ndarray]:
    """Bad flags for I_j^k, j = 0..(n_top*L_kmax/L_k - 1), relative to ``origin``.

    The first ``n_top`` intervals of the top scale are classified together with
    every interval they contain.
    """
    if k_max is None:
        k_max = scales.k_max
    width = n_top * scales.L[k_max]
    pts = np.asarray(points, dtype=np.int64) - origin
    pts = pts[(pts >= 0) & (pts < width)]
    n0 = width // scales.L[0]
    occupied = np.bincount(pts // scales.L[0], minlength=n0)[:n0] > 0
    out = [~occupied]
    for k in range(1, k_max + 1):
        out.append(bad_from_children(out[-1], scales.children(k)))
    return out


def classify_intervals_reference(points, scales: ScaleHierarchy, k: int, j: int, origin: int = 0) -> bool:
    """Literal recursion: is I_j^k bad?"""
    if k == 0:
        lo = origin + j * scales.L[0]
        return not any(lo <= x < lo + scales.L[0] for x in points)
    n = scales.children(k)
    bad = [i for i in range(j * n, (j + 1) * n) if classify_intervals_reference(points, scales, k - 1, i, origin)]
    return any(b - a >= 2 for a in bad for b in bad)


@dataclass(frozen=True)
class Estimate:
    k: int
    estimate: float
    stderr: float
    replicas: int
    bound: float
    exact: float | None = None

    @property
    def passed(self) -> bool:
        return self.estimate <= self.bound + 3 * self.stderr

    def csv_row(self) -> str:
        return f"{self.k},{self.estimate!r},{self.stderr!r},{self.bound!r},{self.replicas},{int(self.passed)}"


def _stationary_bottom_batch(pmf, L0: int, n0: int, batch: int, rng) -> np.ndarray:
    """(batch, n0) bottom-scale bad flags for independent stationary environments."""
    p = np.asarray(pmf, dtype=float)
    cdf = np.cumsum(p / p.sum())
    cdf[-1] = 1.0
    dcdf = np.cumsum(stationary_delay_pmf(p))
    dcdf[-1] = 1.0
    width = n0 * L0
    mean = float((np.arange(p.size) * p).sum())
    m = int(width / mean * 1.2) + 64
    start = np.searchsorted(dcdf, rng.random(batch), side="right")
    gaps = np.searchsorted(cdf, rng.random((batch, m)), side="right")
    pos = start[:, None] + np.concatenate([np.zeros((batch, 1), np.int64), np.cumsum(gaps, axis=1)], axis=1)
    short = pos[:, -1] < width
    while short.any():  # rare: top up rows whose walk stopped early
        extra = np.searchsorted(cdf, rng.random((batch, m)), side="right")
        more = pos[:, -1:] + np.cumsum(extra, axis=1)
        pos = np.concatenate([pos, more], axis=1)
        short = pos[:, -1] < width
    occupied = np.zeros((batch, n0), dtype=bool)
    rows, cols = np.nonzero(pos < width)
    occupied[rows, pos[rows, cols] // L0] = True
    return ~occupied


def p_k_estimate(pmf, scales: ScaleHierarchy, k: int, replicas: int, seed: int, batch: int | None = None) -> Estimate:
    """Monte Carlo frequency of "I_0^k is bad" under the stationary one-sided law."""
    validate_pmf(pmf)
    n0 = scales.L[k] // scales.L[0]
    if batch is None:  # keep the (batch, points) position matrix near 4e6 entries
        mean = float(sum(i * float(x) for i, x in enumerate(pmf)))
        batch = max(1, min(replicas, int(4e6 // (scales.L[k] / mean * 1.2 + 64))))
    rng = stream(seed, k, "p_k")
    bad_total = 0
    done = 0
    while done < replicas:
        b = min(batch, replicas - done)
        flags = _stationary_bottom_batch(pmf, scales.L[0], n0, b, rng)
        for kk in range(1, k + 1):
            flags = bad_from_children(flags, scales.children(kk))
        bad_total += int(flags[:, 0].sum())
        done += b
    est = bad_total / replicas
    se = math.sqrt(est * (1 - est) / replicas)
    exact = float(no_point_probability(np.asarray(pmf, dtype=float), 0, scales.L[0])) if k == 0 else None
    bound = scales.p_bound(k) if scales.epsilon is not None else math.nan
    return Estimate(k, est, se, replicas, bound, exact)


def largest_reachable_k(scales: ScaleHierarchy, max_length: int) -> int:
    return max(k for k in range(scales.k_max + 1) if scales.L[k] <= max_length)
