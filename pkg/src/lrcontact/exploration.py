"""Exact law of the backward exploration step and its convolutions.

The exploration step Y^L looks left from the origin for the first vertex -n
that has an open edge of length > L reaching past the origin. Its law is

    P(Y^L = -n) = A(n - 1) - A(n),   A(n) = exp(-sum_{k=1}^n g(max(k, L))),

where g(m) = -sum_{l > m} log(1 - l^(-s)) = sum_{r >= 1} zeta(r s, m + 1) / r,
and P(Y^L = -inf) = A(inf) = a(L). All arithmetic is carried out in mpmath
with working precision well beyond the reported 1e-12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath as mp
import numpy as np

WORK_DPS = 50
_SERIES_EPS = mp.mpf(10) ** (-(WORK_DPS - 5))


def _log_series(term, first_ratio):
    """Sum term(r) for r = 1, 2, ... until terms fall below the working epsilon.

    ``first_ratio`` bounds the ratio of consecutive terms, so the remainder is
    at most last_term * ratio / (1 - ratio).
    """
    total = mp.mpf(0)
    r = 1
    while True:
        t = term(r)
        total += t
        if t < _SERIES_EPS * (1 - first_ratio):
            return total
        r += 1


def tail_log_mass(s, m: int):
    """g(m) = -sum_{l > m} log(1 - l^(-s))."""
    s = mp.mpf(s)
    ratio = mp.mpf(m + 1) ** (-s)
    return _log_series(lambda r: mp.zeta(r * s, m + 1) / r, ratio)


def cumulative_tail_log_mass(s, k: int):
    """sum_{m > k} g(m) = sum_{l >= k+2} (l - k - 1) (-log(1 - l^(-s)))."""
    s = mp.mpf(s)
    ratio = mp.mpf(k + 2) ** (-s)
    q = k + 2
    return _log_series(lambda r: (mp.zeta(r * s - 1, q) - (k + 1) * mp.zeta(r * s, q)) / r, ratio)


@dataclass(frozen=True)
class ExplorationLaw:
    s: float
    L: int
    n_max: int
    pmf: tuple = field(repr=False)  # pmf[n - 1] = P(Y = -n) as mpf
    at_infinity: object = None  # a(L)
    tail_mass: object = None  # P(n_max < |Y| < inf) = A(n_max) - a(L)

    def prob(self, n: int):
        if n < 1:
            raise ValueError("n must be >= 1")
        if n > self.n_max:
            raise ValueError(f"n = {n} beyond the computed support n_max = {self.n_max}")
        return self.pmf[n - 1]

    def floats(self) -> list[float]:
        return [float(x) for x in self.pmf]

    def survival(self, n: int):
        """A(n) = P(|Y| > n), including the mass at infinity."""
        return self.at_infinity + self.tail_mass + sum(self.pmf[n:], mp.mpf(0))

    def normalization_error(self):
        return abs(1 - (self.at_infinity + self.tail_mass + mp.fsum(self.pmf)))


def exploration_pmf(s: float, L: int, n_max: int) -> ExplorationLaw:
    """Exact law of the exploration step for lengths > L, tabulated up to n_max."""
    if s <= 2:
        raise ValueError("the exploration law is defective for s <= 2 (a(L) = 0)")
    if L < 1 or n_max < 1:
        raise ValueError("L and n_max must be >= 1")
    return _exploration_cached(float(s), int(L), int(n_max))


@lru_cache(maxsize=32)
def _exploration_cached(s: float, L: int, n_max: int) -> ExplorationLaw:
    with mp.workdps(WORK_DPS):
        g_L = tail_log_mass(s, L)
        log_a = L * g_L + cumulative_tail_log_mass(s, L)
        a = mp.exp(-log_a)
        pmf = []
        acc = mp.mpf(0)
        prev = mp.mpf(1)
        for n in range(1, n_max + 1):
            acc += g_L if n <= L else tail_log_mass(s, n)
            cur = mp.exp(-acc)
            pmf.append(prev - cur)
            prev = cur
        return ExplorationLaw(s, L, n_max, tuple(pmf), a, prev - a)


def truncated_first_step(s: float, depth: int) -> float:
    """1 - prod_{l=2}^{depth} (1 - l^(-s)): P(Y = -1) at L = 1 by direct truncated product."""
    lengths = np.arange(2, depth + 1, dtype=float)
    return float(-np.expm1(math.fsum(np.log1p(-(lengths ** (-s))))))


@lru_cache(maxsize=64)
def _convolution_table(law: ExplorationLaw, m: int) -> tuple:
    """P(|Y_1| + ... + |Y_m| = n, all finite) for n = 0..n_max."""
    with mp.workdps(WORK_DPS):
        base = [mp.mpf(0)] + list(law.pmf)
        if m == 1:
            return tuple(base)
        prev = _convolution_table(law, m - 1)
        out = [mp.mpf(0)] * (law.n_max + 1)
        for n in range(m, law.n_max + 1):
            out[n] = mp.fsum(prev[n - j] * base[j] for j in range(1, n - m + 2))
        return tuple(out)


def convolution_tail(law: ExplorationLaw, m: int, n: int):
    """P(Y_1 + ... + Y_m = -n) for i.i.d. exploration steps (exact, mpf)."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    if n > law.n_max:
        raise ValueError(f"n = {n} exceeds the tabulated support n_max = {law.n_max}")
    return _convolution_table(law, m)[n]


@dataclass(frozen=True)
class ConvolutionBoundReport:
    s: float
    L: int
    m_max: int
    n_max: int
    c_fit: float  # sup_n n^(s-1) P(Y = -n)
    safety: float  # factor applied on top of c_fit
    constant: float  # C = c_fit * safety
    worst_ratio: float  # max over (m, n) of P_m(n) n^(s-1) / C^m
    violations: tuple

    @property
    def passed(self) -> bool:
        return not self.violations


def convolution_bound_check(law: ExplorationLaw, m_max: int = 4, n_max: int | None = None) -> ConvolutionBoundReport:
    """Check P(sum_{k<=m} Y_k = -n) <= C^m n^(1-s) for all m <= m_max, n <= n_max.

    C is the one-step constant c = sup_n n^(s-1) P(Y = -n) times the two-step
    composition factor max(1, sup_n n^(s-1) P_2(n) / c^2). With C fixed from
    m <= 2, the cases m >= 3 are genuine checks; the comparisons are done in
    mpmath at working precision, with no tolerance.
    """
    n_max = law.n_max if n_max is None else n_max
    with mp.workdps(WORK_DPS):
        e = mp.mpf(law.s) - 1

        def scaled(m):
            t = _convolution_table(law, m)
            return [t[n] * mp.mpf(n) ** e for n in range(1, n_max + 1)]

        c1 = max(scaled(1))
        r2 = max(scaled(2)) if m_max >= 2 else c1**2
        safety = max(mp.mpf(1), r2 / c1**2)
        C = c1 * safety
        worst = mp.mpf(0)
        viol = []
        for m in range(1, m_max + 1):
            cm = C**m
            for n, v in enumerate(scaled(m), start=1):
                ratio = v / cm
                worst = max(worst, ratio)
                if v > cm:
                    viol.append((m, n, float(ratio)))
        return ConvolutionBoundReport(
            law.s, law.L, m_max, n_max, float(c1), float(safety), float(C), float(worst), tuple(viol)
        )
