"""Site percolation with column-dependent densities against bond percolation on a stretched lattice.

Sites in column i of Z x Z_+ are open with probability p^phi_i. The comparison
bond model lives on the odd site columns 2a+1..2b+1: bond column m stands for
site column 2(a+m)+1, vertical bonds are open at rho and the horizontal bond
from bond column m to m+1 at rho^(phi_{2(a+m)+2} + 1), where
(1 - rho)^4 = 1 - p. Both crossing probabilities are computed by exhaustive
enumeration; site probabilities are exact rationals and bond probabilities
are rigorous intervals.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import mpmath as mp
import numpy as np

from ..seeding import stream

MAX_ENUMERATED = 18  # at most 2^18 configurations per shape


def site_bond_rho(p: float) -> float:
    """bondRho with (1 - rho)^4 = 1 - p."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    return 1 - (1 - p) ** 0.25


def _spanning(open_: np.ndarray, orientation: str) -> np.ndarray:
    """Crossing indicator for a stack of site grids of shape (n, width, height).

    Nearest-neighbour paths of open sites: ``"h"`` from column 0 to the last
    column, ``"v"`` from row 0 to the last row.
    """
    reach = np.zeros_like(open_)
    if orientation == "h":
        reach[:, 0, :] = open_[:, 0, :]
    else:
        reach[:, :, 0] = open_[:, :, 0]
    while True:
        grow = reach.copy()
        grow[:, 1:, :] |= reach[:, :-1, :]
        grow[:, :-1, :] |= reach[:, 1:, :]
        grow[:, :, 1:] |= reach[:, :, :-1]
        grow[:, :, :-1] |= reach[:, :, 1:]
        grow &= open_
        if np.array_equal(grow, reach):
            break
        reach = grow
    return reach[:, -1, :].any(axis=1) if orientation == "h" else reach[:, :, -1].any(axis=1)


def _all_configs(n_bits: int) -> np.ndarray:
    if n_bits > MAX_ENUMERATED:
        raise ValueError(f"{n_bits} variables exceed the enumeration budget of {MAX_ENUMERATED}")
    codes = np.arange(1 << n_bits, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n_bits)) & 1).astype(bool)


@lru_cache(maxsize=None)
def site_crossing_classes(width: int, height: int, orientation: str) -> dict:
    """{per-column open counts: number of crossing configurations}."""
    bits = _all_configs(width * height)
    grids = bits.reshape(-1, width, height)
    crossed = _spanning(grids, orientation)
    counts = grids.sum(axis=2)[crossed]
    keys, mult = np.unique(counts, axis=0, return_counts=True)
    return {tuple(int(x) for x in k): int(m) for k, m in zip(keys, mult)}


def _bond_grids(vert: np.ndarray, hor: np.ndarray, width: int, height: int) -> np.ndarray:
    """Expand bond states into the (2w-1, 2h-1) grid of vertices and bond midpoints.

    Vertices sit at even coordinates and are always present; a bond midpoint
    is present when the bond is open. Bond connectivity is then site connectivity.
    """
    n = vert.shape[0]
    g = np.zeros((n, 2 * width - 1, 2 * height - 1), dtype=bool)
    g[:, ::2, ::2] = True
    if height > 1:
        g[:, ::2, 1::2] = vert.reshape(n, width, height - 1)
    if width > 1:
        g[:, 1::2, ::2] = hor.reshape(n, width - 1, height)
    return g


@lru_cache(maxsize=None)
def bond_crossing_classes(width: int, height: int, orientation: str) -> dict:
    """{(open horizontal counts per bond column gap..., open vertical count): crossing configurations}."""
    nv, nh = width * (height - 1), (width - 1) * height
    bits = _all_configs(nv + nh)
    vert, hor = bits[:, :nv], bits[:, nv:]
    crossed = _spanning(_bond_grids(vert, hor, width, height), orientation)
    hor_counts = hor.reshape(-1, width - 1, height).sum(axis=2) if width > 1 else np.zeros((bits.shape[0], 0), int)
    keys = np.concatenate([hor_counts, vert.sum(axis=1, keepdims=True)], axis=1)[crossed]
    uk, mult = np.unique(keys, axis=0, return_counts=True)
    return {tuple(int(x) for x in k): int(m) for k, m in zip(uk, mult)}


def site_crossing_probability(phi, p: Fraction, height: int, orientation: str) -> Fraction:
    """Exact P(crossing) for sites open with probability p^phi[c] in column c."""
    width = len(phi)
    q = [Fraction(p) ** int(f) for f in phi]
    total = Fraction(0)
    for counts, mult in site_crossing_classes(width, height, orientation).items():
        term = Fraction(mult)
        for qc, n in zip(q, counts):
            term *= qc**n * (1 - qc) ** (height - n)
        total += term
    return total


def bond_crossing_probability(xi, rho, height: int, orientation: str):
    """P(crossing) with vertical bonds at rho and horizontal gap m at rho^xi[m]; interval arithmetic."""
    width = len(xi) + 1
    ph = [rho ** int(x) for x in xi]
    n_vert = width * (height - 1)
    total = mp.iv.mpf(0)
    for key, mult in bond_crossing_classes(width, height, orientation).items():
        *hc, vc = key
        term = mp.iv.mpf(mult) * rho**vc * (1 - rho) ** (n_vert - vc)
        for q, n in zip(ph, hc):
            term *= q**n * (1 - q) ** (height - n)
        total += term
    return total


@contextmanager
def _interval_dps(dps: int):
    old = mp.iv.dps
    mp.iv.dps = dps
    try:
        yield
    finally:
        mp.iv.dps = old


def _to_interval(x: Fraction):
    return mp.iv.mpf(x.numerator) / mp.iv.mpf(x.denominator)


@dataclass(frozen=True)
class CouplingCase:
    width: int  # bond columns a..b
    height: int
    orientation: str
    p: Fraction
    phi: tuple  # site exponents for columns 2a+1..2b+1
    site: Fraction
    bond_lo: float
    bond_hi: float
    holds: bool  # decided on interval endpoints, not on the rounded floats

    @property
    def margin(self) -> float:
        return float(self.site) - self.bond_hi


@dataclass
class CouplingReport:
    cases: list = field(default_factory=list)

    @property
    def violations(self) -> list:
        return [c for c in self.cases if not c.holds]

    @property
    def passed(self) -> bool:
        return bool(self.cases) and not self.violations

    def csv(self) -> str:
        lines = ["width,height,orientation,p,phi,site,bond_hi,holds"]
        for c in self.cases:
            lines.append(f"{c.width},{c.height},{c.orientation},{c.p},{'-'.join(map(str, c.phi))},{float(c.site)!r},{c.bond_hi!r},{int(c.holds)}")
        return "\n".join(lines) + "\n"


def compare_crossings(phi, p, height: int, orientation: str, dps: int = 60) -> CouplingCase:
    """Site crossing of the dilated rectangle against bond crossing of [a, b] x [c, d].

    ``phi`` lists the exponents of site columns 2a+1, 2a+2, ..., 2b+1.
    """
    if len(phi) % 2 == 0:
        raise ValueError("the site rectangle spans an odd number of columns")
    p = Fraction(p)
    site = site_crossing_probability(phi, p, height, orientation)
    xi = [int(phi[2 * m + 1]) + 1 for m in range(len(phi) // 2)]
    with _interval_dps(dps):
        rho = 1 - mp.iv.sqrt(mp.iv.sqrt(1 - _to_interval(p)))
        bond = bond_crossing_probability(xi, rho, height, orientation)
        site_lo = _to_interval(site).a
        holds = bool(site_lo >= bond.b)
        lo, hi = float(bond.a), float(bond.b)
    return CouplingCase(len(phi) // 2 + 1, height, orientation, p, tuple(int(f) for f in phi), site, lo, hi, holds)


def coupling_inequality_check(
    ps=(Fraction(1, 2), Fraction(4, 5), Fraction(19, 20)),
    max_width: int = 3, max_height: int = 3, even_phi=(1, 2), odd_phi=(1,),
) -> CouplingReport:
    """Every rectangle up to ``max_width`` bond columns by ``max_height`` rows, both
    orientations, every assignment of exponents, every p.

    Rectangles whose crossing direction has length zero (one bond column for
    horizontal, one row for vertical) are skipped: the bond event is then
    certain while the site event still needs an open site.
    """
    report = CouplingReport()
    for width in range(1, max_width + 1):
        for height in range(1, max_height + 1):
            for orientation in ("h", "v"):
                if (orientation == "h" and width == 1) or (orientation == "v" and height == 1):
                    continue
                n_site = 2 * width - 1
                choices = [odd_phi if c % 2 == 0 else even_phi for c in range(n_site)]
                for phi in itertools.product(*choices):
                    for p in ps:
                        report.cases.append(compare_crossings(phi, p, height, orientation))
    return report


def site_field_sample(phi, p: float, height: int, seed: int, uniforms: np.ndarray | None = None) -> np.ndarray:
    """(len(phi), height) site states, column c open with probability p^phi[c].

    Supplying ``uniforms`` reuses the same thresholds, which couples fields
    monotonically in p.
    """
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 0):
        raise ValueError("exponents must be positive")
    if uniforms is None:
        uniforms = stream(seed, 0, "sites").random((phi.size, height))
    return uniforms < (p**phi)[:, None]
