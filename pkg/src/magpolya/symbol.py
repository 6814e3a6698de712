"""Closed-form semiclassical symbols and sharp constants.

All lengths are dimensionless and the field strength ``B`` has units of
inverse area.  Functions here are pure; none of them touch a discretized
operator.
"""
from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import DataError, DomainError

__all__ = [
    "SymbolValue",
    "SupRatio",
    "LegendreValue",
    "lcl_constant",
    "magnetic_symbol_2d",
    "magnetic_symbol_3d",
    "landau_sum",
    "excess_factor",
    "goingdown_constant",
    "sup_ratio",
    "sup_ratio_closed_form",
    "rho_constant",
    "lift_moment",
    "legendre_transform",
]

# a Landau level closer than this (relative to lambda) counts as "at" lambda
TIE_RTOL = 1e-14


class SymbolValue(float):
    """A non-negative float that remembers whether a level sat exactly at lambda.

    ``left_limit_convention`` is True when ``gamma == 0`` and a Landau level
    coincided with ``lambda`` (within ``TIE_RTOL``) and was therefore dropped.
    """

    left_limit_convention: bool

    def __new__(cls, value: float, left_limit_convention: bool = False):
        obj = super().__new__(cls, value)
        obj.left_limit_convention = bool(left_limit_convention)
        return obj

    def __repr__(self):
        return f"SymbolValue({float(self)!r}, left_limit_convention={self.left_limit_convention})"


class SupRatio(NamedTuple):
    sup: float
    argmax: float | str  # a lambda value, "limit B+" or "limit inf"


class LegendreValue(NamedTuple):
    value: float
    argmax: float
    at_boundary: bool


def _check_gamma(gamma):
    if not np.isfinite(gamma) or gamma < 0:
        raise DomainError(f"gamma must be finite and >= 0, got {gamma!r}")


def _check_B(B):
    if not np.isfinite(B) or B <= 0:
        raise DomainError(f"B must be finite and > 0, got {B!r}")


def lcl_constant(gamma: float, d: int = 2) -> float:
    """Classical phase-space constant ``L^cl_{gamma,d}``.

    ``Gamma(gamma+1) / (2^d pi^{d/2} Gamma(gamma + d/2 + 1))``; for ``d=2``
    this is ``1/(4 pi (gamma+1))``.
    """
    _check_gamma(gamma)
    if d not in (1, 2, 3):
        raise DomainError(f"unsupported dimension d={d!r}; expected 1, 2 or 3")
    if d == 2:
        return 1.0 / (4.0 * math.pi * (gamma + 1.0))
    return math.exp(
        math.lgamma(gamma + 1.0) - d * math.log(2.0) - 0.5 * d * math.log(math.pi)
        - math.lgamma(gamma + 0.5 * d + 1.0)
    )


def _level_gaps(B: float, lam: float) -> tuple[np.ndarray, bool]:
    """Positive gaps ``lam - B(2k+1)`` and whether a tie was discarded."""
    if not np.isfinite(lam):
        raise DomainError(f"lambda must be finite, got {lam!r}")
    nterms = max(0, math.ceil((lam / B - 1.0) / 2.0)) + 1
    gaps = lam - B * (2.0 * np.arange(nterms) + 1.0)
    tol = TIE_RTOL * abs(lam)
    tie = bool(np.any(np.abs(gaps) <= tol))
    return gaps[gaps > tol], tie


def landau_sum(B: float, lam, power: float) -> np.ndarray:
    """Vectorized ``sum_k (lam - B(2k+1))_+^power`` over an array of lambdas.

    ``power == 0`` uses the strict (left-continuous) convention.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    kmax = max(1, int(math.ceil((np.max(lam) / B - 1.0) / 2.0)) + 1)
    levels = B * (2.0 * np.arange(kmax) + 1.0)
    gaps = lam[:, None] - levels[None, :]
    mask = gaps > TIE_RTOL * np.abs(lam)[:, None]
    if power == 0:
        return mask.sum(axis=1).astype(float)
    return (np.where(mask, gaps, 0.0) ** power).sum(axis=1)


def magnetic_symbol_2d(B: float, lam: float, gamma: float) -> SymbolValue:
    """Landau-level symbol ``(2 pi)^{-1} B sum_k (lam - B(2k+1))_+^gamma``.

    The sum is finite.  For ``gamma == 0`` a level exactly at ``lam`` does not
    count (left continuity in ``lam``).
    """
    _check_B(B)
    _check_gamma(gamma)
    gaps, tie = _level_gaps(B, lam)
    total = float(np.sum(gaps**gamma)) if gaps.size else 0.0
    return SymbolValue(B / (2.0 * math.pi) * total, left_limit_convention=(tie and gamma == 0))


def magnetic_symbol_3d(B: float, lam: float, gamma: float) -> SymbolValue:
    """Three-dimensional magnetic symbol.

    ``Gamma(gamma+1)/Gamma(gamma+3/2) * B/(4 pi^{3/2}) * sum_k (lam - B(2k+1))_+^{gamma+1/2}``
    """
    _check_B(B)
    _check_gamma(gamma)
    gaps, _ = _level_gaps(B, lam)
    if not gaps.size:
        return SymbolValue(0.0)
    pref = math.exp(math.lgamma(gamma + 1.0) - math.lgamma(gamma + 1.5)) * B / (4.0 * math.pi**1.5)
    return SymbolValue(pref * float(np.sum(gaps ** (gamma + 0.5))))


def excess_factor(gamma: float) -> float:
    """Sharp excess factor ``R_gamma`` for ``0 <= gamma < 1``."""
    _check_gamma(gamma)
    if gamma >= 1:
        raise DomainError("excess factor is defined for 0 <= gamma < 1 (it equals 1 beyond)")
    if gamma == 0:
        return 2.0
    return 2.0 * (gamma / (gamma + 1.0)) ** gamma


def goingdown_constant(gamma: float, sigma: float) -> float:
    """Constant ``C(gamma, sigma)`` of the moment-lowering inequality.

    ``(E - lam)_-^gamma <= C (mu - lam)^{gamma - sigma} (E - mu)_-^sigma`` for
    ``mu > lam``.
    """
    _check_gamma(gamma)
    if not sigma > gamma:
        raise DomainError(f"need sigma > gamma, got sigma={sigma!r}, gamma={gamma!r}")
    if gamma == 0:
        return 1.0
    return sigma ** (-sigma) * gamma**gamma * (sigma - gamma) ** (sigma - gamma)


def rho_constant(gamma: float, d: int = 2) -> float:
    """Excess factor for arbitrary magnetic fields, valid for ``0 <= gamma < 3/2``."""
    _check_gamma(gamma)
    if gamma >= 1.5:
        raise DomainError("rho is defined for 0 <= gamma < 3/2")
    if int(d) != d or d < 2:
        raise DomainError(f"dimension must be an integer >= 2, got {d!r}")
    log_gamma_part = (
        math.lgamma(2.5) + math.lgamma(gamma + 0.5 * d + 1.0)
        - math.lgamma(0.5 * (5 + d)) - math.lgamma(gamma + 1.0)
    )
    power_part = (
        -1.5 * math.log(3.0) + 0.5 * (3 + d) * math.log(3 + d)
        + (gamma * math.log(2 * gamma) if gamma > 0 else 0.0)
        - (gamma + 0.5 * d) * math.log(2 * gamma + d)
    )
    return math.exp(log_gamma_part + power_part)


def sup_ratio_closed_form(gamma: float, B: float = 1.0) -> SupRatio:
    """Closed-form value of ``sup_lam B_gamma(B, lam) / (L^cl lam^{gamma+1})``."""
    _check_gamma(gamma)
    _check_B(B)
    if gamma == 0:
        return SupRatio(2.0, "limit B+")
    if gamma < 1:
        return SupRatio(excess_factor(gamma), B * (gamma + 1.0))
    if gamma == 1:
        # attained at every even multiple of B; report the first one
        return SupRatio(1.0, 2.0 * B)
    return SupRatio(1.0, "limit inf")


def _band_ratio(B, gamma, lcl):
    def ratio(lam):
        return float(landau_sum(B, lam, gamma)[0]) * B / (2.0 * math.pi) / (lcl * lam ** (gamma + 1.0))
    return ratio


def _band_max(ratio, lo, hi, xtol):
    # coarse scan seeds a bracket, bounded Brent/golden search refines it
    grid = np.linspace(lo, hi, 65)[1:-1]
    vals = np.array([ratio(x) for x in grid])
    i = int(np.argmax(vals))
    a = grid[i - 1] if i > 0 else lo
    b = grid[i + 1] if i < grid.size - 1 else hi
    res = optimize.minimize_scalar(lambda x: -ratio(x), bounds=(a, b), method="bounded",
                                   options={"xatol": xtol})
    if -res.fun >= vals[i]:
        return -res.fun, float(res.x)
    return float(vals[i]), float(grid[i])


def sup_ratio(gamma: float, B: float = 1.0, *, xtol: float = 1e-10) -> SupRatio:
    """Numerically locate the supremum of the magnetic-to-classical symbol ratio.

    The ratio is smooth on each Landau band ``(B(2k+1), B(2k+3)]``, so each
    band is maximized separately.  Bands are scanned until
    ``lam > B*max(10, 4(gamma+1))`` and the band maxima have started to
    decrease.  For ``gamma > 1`` the band maxima increase towards the
    ``lam -> inf`` limit, which is Richardson-extrapolated from widely spaced
    bands (the band maxima approach it like ``k^{-2}``).
    """
    _check_gamma(gamma)
    _check_B(B)
    lcl = lcl_constant(gamma, 2)
    ratio = _band_ratio(B, gamma, lcl)
    threshold = B * max(10.0, 4.0 * (gamma + 1.0))
    tol = xtol * B

    def band(k):
        lo, hi = B * (2 * k + 1), B * (2 * k + 3)
        return _band_max(ratio, lo + tol * 1e-3, hi, tol)

    best, arg, prev = -np.inf, None, -np.inf
    k = 0
    while True:
        val, x = band(k)
        if val > best:
            best, arg = val, x
        if B * (2 * k + 1) > threshold and val <= prev:
            break
        if k > 64:
            break
        prev = val
        k += 1

    if gamma > 1:
        ks = [256, 512, 1024]
        m = [band(kk)[0] for kk in ks]
        r1 = (4.0 * m[1] - m[0]) / 3.0
        r2 = (4.0 * m[2] - m[1]) / 3.0
        limit = (16.0 * r2 - r1) / 15.0
        if limit > best:
            return SupRatio(float(limit), "limit inf")
    if gamma == 0 and arg is not None and arg - B < 1e-6 * B:
        return SupRatio(float(best), "limit B+")
    return SupRatio(float(best), float(arg))


def lift_moment(B: float, lam: float, gamma: float) -> float:
    """Riesz mean of order ``gamma`` obtained by lifting the counting symbol.

    Evaluates ``gamma * int_0^inf B_0(B, lam - mu) mu^{gamma-1} dmu`` by
    adaptive quadrature, splitting the range at every Landau threshold so each
    piece has a constant count.  The piece touching ``mu = 0`` is integrated
    with an algebraic weight to absorb the ``mu^{gamma-1}`` singularity.
    """
    _check_B(B)
    _check_gamma(gamma)
    if gamma == 0:
        raise DomainError("lift_moment requires gamma > 0")
    top = lam - B
    if top <= 0:
        return 0.0
    breaks = [0.0]
    k = 0
    while lam - B * (2 * k + 1) > 0:
        k += 1
    # thresholds in increasing mu: lam - B(2k+1) for k = K-1, ..., 0
    cuts = sorted(lam - B * (2 * j + 1) for j in range(k))
    breaks.extend(c for c in cuts if c > 0)
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        count = float(magnetic_symbol_2d(B, lam - mid, 0.0))
        if a == 0.0:
            val, _ = integrate.quad(lambda mu: count, a, b, weight="alg", wvar=(gamma - 1.0, 0.0),
                                    epsabs=0.0, epsrel=1e-13)
        else:
            val, _ = integrate.quad(lambda mu: count * mu ** (gamma - 1.0), a, b,
                                    epsabs=0.0, epsrel=1e-13, limit=200)
        total += val
    return gamma * total


def legendre_transform(lams: Sequence[float], values: Sequence[float], p: float,
                       *, convexity_rtol: float = 1e-9) -> LegendreValue:
    """Legendre transform ``sup_lam (p lam - f(lam))`` of a tabulated convex function.

    The table is read as a piecewise-linear interpolant, whose conjugate is
    attained at a knot.  ``at_boundary`` is set when the maximizing knot is the
    last one (the supremum over all ``lam > 0`` may then be larger) or the
    first one.

    Raises
    ------
    DataError
        Empty table, unsorted grid, or second divided differences that certify
        non-convexity.
    """
    lam = np.asarray(lams, dtype=float)
    f = np.asarray(values, dtype=float)
    if lam.size == 0 or lam.shape != f.shape:
        raise DataError("legendre_transform needs a non-empty table of matching lengths")
    if p < 0:
        raise DomainError(f"p must be >= 0, got {p!r}")
    if lam.size > 1:
        if np.any(np.diff(lam) <= 0):
            raise DataError("lambda grid must be strictly increasing")
        slopes = np.diff(f) / np.diff(lam)
        scale = max(1.0, float(np.max(np.abs(slopes))))
        if np.any(np.diff(slopes) < -convexity_rtol * scale):
            bad = int(np.argmin(np.diff(slopes)))
            raise DataError(f"table is not convex near lambda={lam[bad + 1]!r}")
    obj = p * lam - f
    i = int(np.argmax(obj))
    return LegendreValue(float(obj[i]), float(lam[i]), i == lam.size - 1 or (i == 0 and lam.size > 1))
