"""Renewal environments on the integers.

An interarrival law is an array ``pmf`` with ``pmf[k] = P(xi = k)``; entry 0
must be zero. Arrays may hold floats or ``Fraction`` objects; the exact
routines keep whatever number type they are given.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce

import numpy as np

from ..seeding import stream

MODES = ("origin-started", "stationary-delay", "modified-origin")


def geometric_interarrival(success: float = 0.5, tail: float = 1e-17) -> np.ndarray:
    """P(xi = k) = (1 - a)^(k-1) a for k >= 1, truncated once the tail drops below ``tail``."""
    if not 0 < success <= 1:
        raise ValueError("success probability must lie in (0, 1]")
    if success == 1:
        return np.array([0.0, 1.0])
    k_max = max(1, math.ceil(math.log(tail) / math.log1p(-success)))
    k = np.arange(1, k_max + 1)
    pmf = np.concatenate([[0.0], success * (1 - success) ** (k - 1)])
    pmf[-1] += max(0.0, 1.0 - pmf.sum())
    return pmf


def validate_pmf(pmf, require_aperiodic: bool = False, atol: float = 1e-12):
    """Check support in the positive integers and total mass one."""
    if len(pmf) < 2 or pmf[0] != 0:
        raise ValueError("interarrival law must put no mass on 0")
    if any(x < 0 for x in pmf):
        raise ValueError("negative probability")
    total = sum(pmf)
    if abs(total - 1) > atol:
        raise ValueError(f"pmf sums to {float(total)}, not 1 (heavy or truncated tail?)")
    if require_aperiodic:
        support = [k for k, x in enumerate(pmf) if x > 0]
        if reduce(math.gcd, support) != 1:
            raise ValueError("interarrival law is periodic")


def pmf_mean(pmf):
    return sum(k * x for k, x in enumerate(pmf))


def survival(pmf):
    """``S[n] = P(xi >= n)`` for n = 0..len(pmf), the last entry being 0."""
    out = [0] * (len(pmf) + 1)
    acc = 0
    for n in range(len(pmf) - 1, -1, -1):
        acc = acc + pmf[n]
        out[n] = acc
    return out


def stationary_delay_pmf(pmf):
    """P(rho = k) = P(xi > k) / E[xi] for k >= 0."""
    validate_pmf(pmf)
    mean = pmf_mean(pmf)
    if not mean < math.inf:
        raise ValueError("stationary delay needs a finite mean")
    tail = survival(pmf)
    out = [tail[k + 1] / mean for k in range(len(pmf) - 1)]
    if isinstance(pmf, np.ndarray):
        return np.array(out, dtype=float)
    return out


def point_probabilities(pmf, n_max: int):
    """u[n] = P(n is a renewal point) for the stationary one-sided process, n < n_max."""
    delay = stationary_delay_pmf(pmf)
    u = []
    for n in range(n_max):
        val = delay[n] if n < len(delay) else 0 * delay[0]
        for m in range(max(0, n - len(pmf) + 1), n):
            val = val + u[m] * pmf[n - m]
        u.append(val)
    return u


def no_point_probability(pmf, a: int, b: int):
    """P(no renewal point in [a, b)) for the stationary one-sided process, exactly.

    Either the delay already overshoots b, or some point n < a is followed by a
    gap reaching b.
    """
    if not 0 <= a < b:
        raise ValueError("need 0 <= a < b")
    delay = stationary_delay_pmf(pmf)
    tail = survival(pmf)
    first_late = sum(delay[b:]) if b < len(delay) else 0 * delay[0]
    u = point_probabilities(pmf, a)
    return first_late + sum(u[n] * (tail[b - n] if b - n < len(tail) else 0) for n in range(a))


def pattern_probability(pmf, points, width: int):
    """Exact probability that the stationary one-sided process meets [0, width) in ``points``."""
    delay = stationary_delay_pmf(pmf)
    tail = survival(pmf)

    def at(seq, i):
        return seq[i] if 0 <= i < len(seq) else 0 * seq[0]

    pts = sorted(points)
    if not pts:
        return sum(delay[width:]) if width < len(delay) else 0 * delay[0]
    prob = at(delay, pts[0])
    for x, y in zip(pts, pts[1:]):
        prob = prob * at(pmf, y - x)
    return prob * at(tail, width - pts[-1])


@dataclass(frozen=True, eq=False)
class RenewalEnv:
    pmf: np.ndarray = field(repr=False)
    points: np.ndarray
    mode: str
    window: tuple[int, int]
    seed: int | None = None
    origin_pmf: np.ndarray | None = field(default=None, repr=False)

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.points)

    def to_json(self) -> str:
        obj = {
            "mode": self.mode,
            "window": list(self.window),
            "seed": self.seed,
            "pmf": [float(x) for x in self.pmf],
            "points": self.points.tolist(),
        }
        if self.origin_pmf is not None:
            obj["originPmf"] = [float(x) for x in self.origin_pmf]
        return json.dumps(obj)


def _gap_sampler(pmf, rng):
    p = np.asarray(pmf, dtype=float)
    p = p / p.sum()
    cdf = np.cumsum(p)
    cdf[-1] = 1.0

    def draw(n):
        return np.searchsorted(cdf, rng.random(n), side="right").astype(np.int64)

    return draw


def _walk(start: int, draw, direction: int, limit: int) -> list:
    """Points start, start +- gaps ... until crossing ``limit`` (exclusive)."""
    out = [np.array([start], dtype=np.int64)]
    pos = start
    while (limit - pos) * direction > 0:
        need = max(16, int(abs(limit - pos)))
        steps = pos + direction * np.cumsum(draw(need))
        out.append(steps)
        pos = int(steps[-1])
    return out


def sample_renewal(pmf, mode: str, window: tuple[int, int], seed: int, origin_pmf=None) -> RenewalEnv:
    """Renewal points inside ``window = [lo, hi)``.

    ``origin-started``: x_0 = 0 with iid gaps in both directions.
    ``stationary-delay``: one-sided, x_0 = rho drawn from the stationary delay; points >= 0.
    ``modified-origin``: as origin-started but the gap x_0 - x_{-1} follows ``origin_pmf``.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    validate_pmf(pmf)
    lo, hi = int(window[0]), int(window[1])
    if lo >= hi:
        raise ValueError("empty window")
    rng = stream(seed, 0, "renewal")
    draw = _gap_sampler(pmf, rng)
    if mode == "stationary-delay":
        if lo < 0:
            raise ValueError("the stationary process lives on the nonnegative integers")
        rho = int(_gap_sampler(stationary_delay_pmf(np.asarray(pmf, dtype=float)), rng)(1)[0])
        pts = np.concatenate(_walk(rho, draw, 1, hi))
    else:
        right = np.concatenate(_walk(0, draw, 1, hi))
        if mode == "modified-origin":
            if origin_pmf is None:
                raise ValueError("modified-origin mode needs origin_pmf")
            validate_pmf(origin_pmf)
            first = -int(_gap_sampler(origin_pmf, rng)(1)[0])
            left = np.concatenate(_walk(first, draw, -1, lo - 1))
        else:
            left = np.concatenate(_walk(0, draw, -1, lo - 1))[1:]
        pts = np.concatenate([left[::-1], right])
    pts = pts[(pts >= lo) & (pts < hi)]
    return RenewalEnv(np.asarray(pmf), np.sort(pts), mode, (lo, hi), seed, None if origin_pmf is None else np.asarray(origin_pmf))


def gap_chi_square(gaps, pmf, min_expected: float = 5.0) -> tuple[float, int, float]:
    """Pearson statistic of a gap histogram against the pmf, pooling sparse cells.

    Returns (statistic, degrees of freedom, p-value).
    """
    from scipy.stats import chi2

    gaps = np.asarray(gaps)
    n = gaps.size
    p = np.asarray(pmf, dtype=float)
    counts = np.bincount(gaps, minlength=p.size)[: p.size]
    exp_all = n * p
    obs, exp = [], []
    o_acc = e_acc = 0.0
    for k in range(1, p.size):
        o_acc += counts[k]
        e_acc += exp_all[k]
        if e_acc >= min_expected:
            obs.append(o_acc)
            exp.append(e_acc)
            o_acc = e_acc = 0.0
    if obs:
        obs[-1] += o_acc + (n - counts.sum())
        exp[-1] += e_acc
    obs, exp = np.array(obs), np.array(exp)
    stat = float(((obs - exp) ** 2 / exp).sum())
    dof = max(1, obs.size - 1)
    return stat, dof, float(chi2.sf(stat, dof))


def as_fractions(pmf_dict: dict) -> list:
    """Exact pmf list from ``{value: probability}``."""
    top = max(pmf_dict)
    out = [Fraction(0)] * (top + 1)
    for k, v in pmf_dict.items():
        out[k] = Fraction(v)
    return out
