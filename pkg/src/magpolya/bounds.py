"""Bound families, ratio reports and the sharpness search.

Every family is a right-hand side that a Riesz mean ``tr(H - lam)_-^gamma``
(or, for the eigenvalue-sum families, a partial sum of eigenvalues) is
compared against.  Each one carries its validity range so that callers get an
:class:`~magpolya.errors.ApplicabilityError` instead of an extrapolated value.

Ratios are oriented so that ``ratio <= 1`` means "the inequality holds":
moment families use ``lhs / rhs`` with ``lhs`` the Riesz mean, and the
eigenvalue-sum families use ``(2 pi N^2 / |Omega|) / sum_{j<=N} lambda_j``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import ApplicabilityError, ContractError, DomainError
from .lattice import BoundaryCondition, Square, assemble, flux_square, rasterize_domain
from .spectra import SpectrumSlice, count_below, eigs_below, riesz_mean
from .symbol import (
    excess_factor,
    lcl_constant,
    magnetic_symbol_2d,
    magnetic_symbol_3d,
    rho_constant,
)

__all__ = [
    "BoundFamily",
    "FamilyInfo",
    "FAMILY_INFO",
    "BoundReport",
    "CounterexampleResult",
    "Budget",
    "evaluate_rhs",
    "bound_report",
    "counterexample_at",
    "counterexample_search",
    "liyau_check",
    "product_3d_moment",
    "calibrate_disc_constant",
    "allowance",
    "VIOLATION_FACTOR",
]

VIOLATION_FACTOR = 3.0  # genuine violation: ratio > 1 + VIOLATION_FACTOR * alpha


class BoundFamily(str, Enum):
    POLYA = "polya"
    BEREZIN = "berezin"
    LIYAU = "liyau"
    MAIN1 = "main1"
    MAIN2 = "main2"
    MAIN1NUMBER0 = "main1number0"
    ELV = "elv"
    ELV2 = "elv2"
    ELVEVS = "elvevs"
    D3_MAGNETIC = "d3_magnetic"
    D3_SEMICLASSICAL = "d3_semiclassical"
    D3_EXCESS = "d3_excess"
    APPENDIXA = "appendixA"


@dataclass(frozen=True)
class FamilyInfo:
    """Validity range of a family.

    ``gamma_hi`` is exclusive unless ``hi_inclusive``.  ``field`` is one of
    ``"zero"`` (B = 0 statement), ``"positive"`` (B > 0) or ``"any"``;
    ``domains`` is ``"tiling"`` or ``"any"``.
    """

    gamma_lo: float
    gamma_hi: float
    hi_inclusive: bool
    field: str
    domains: str
    dim: int = 2
    eigensum: bool = False

    def admits_gamma(self, gamma: float) -> bool:
        if gamma < self.gamma_lo:
            return False
        return gamma <= self.gamma_hi if self.hi_inclusive else gamma < self.gamma_hi


_INF = math.inf
FAMILY_INFO: dict[BoundFamily, FamilyInfo] = {
    BoundFamily.POLYA: FamilyInfo(0.0, 0.0, True, "zero", "tiling"),
    BoundFamily.BEREZIN: FamilyInfo(1.0, _INF, False, "zero", "any"),
    BoundFamily.LIYAU: FamilyInfo(1.0, 1.0, True, "zero", "any", eigensum=True),
    BoundFamily.MAIN1: FamilyInfo(0.0, 1.0, False, "positive", "any"),
    # gamma >= 1 is the arbitrary-domain range of the same symbol bound
    BoundFamily.MAIN2: FamilyInfo(0.0, _INF, False, "positive", "tiling"),
    BoundFamily.MAIN1NUMBER0: FamilyInfo(0.0, 0.0, True, "positive", "tiling"),
    BoundFamily.ELV: FamilyInfo(1.0, _INF, False, "positive", "any"),
    BoundFamily.ELV2: FamilyInfo(1.0, _INF, False, "positive", "any"),
    BoundFamily.ELVEVS: FamilyInfo(1.0, 1.0, True, "positive", "any", eigensum=True),
    BoundFamily.D3_MAGNETIC: FamilyInfo(1.0, _INF, False, "positive", "any", dim=3),
    BoundFamily.D3_SEMICLASSICAL: FamilyInfo(0.5, _INF, False, "positive", "tiling", dim=3),
    BoundFamily.D3_EXCESS: FamilyInfo(0.0, 0.5, False, "positive", "tiling", dim=3),
    BoundFamily.APPENDIXA: FamilyInfo(0.0, 1.5, False, "any", "any", dim=0),
}


def _family(f) -> BoundFamily:
    try:
        return BoundFamily(f)
    except ValueError:
        raise ApplicabilityError(f"unknown bound family {f!r}") from None


def _check_applicable(fam: BoundFamily, gamma: float, B: float):
    info = FAMILY_INFO[fam]
    if not info.admits_gamma(gamma):
        hi = ("]" if info.hi_inclusive else ")")
        raise ApplicabilityError(
            f"{fam.value} holds for gamma in [{info.gamma_lo}, {info.gamma_hi}{hi}, got {gamma!r}")
    if info.field == "zero" and B != 0 and fam is not BoundFamily.POLYA:
        raise ApplicabilityError(f"{fam.value} is a B = 0 statement, got B={B!r}")
    if info.field == "positive" and not B > 0:
        raise ApplicabilityError(f"{fam.value} needs B > 0, got B={B!r}")


def evaluate_rhs(family, gamma: float, B: float, lam: float, area: float, d: int | None = None) -> float:
    """Right-hand side of ``family`` at ``(gamma, B, lam)`` for a domain of measure ``area``.

    For the eigenvalue-sum families (``liyau``, ``elvevs``) ``lam`` is the
    number of eigenvalues ``N`` and the value returned is ``2 pi N^2 / area``.
    ``polya`` is evaluated at any ``B >= 0`` because its magnetic failure is
    what the reports are meant to expose.  ``d`` is only read by
    ``appendixA`` (default 2).
    """
    fam = _family(family)
    if not area > 0:
        raise DomainError(f"area must be > 0, got {area!r}")
    if B < 0:
        raise DomainError(f"B must be >= 0, got {B!r}")
    _check_applicable(fam, gamma, B)
    if FAMILY_INFO[fam].eigensum:
        N = int(lam)
        if N != lam or N < 1:
            raise DomainError(f"eigenvalue-sum families take a positive integer N, got {lam!r}")
        return 2.0 * math.pi * N * N / area
    if lam <= 0:
        return 0.0
    if fam is BoundFamily.POLYA:
        return lam * area / (4.0 * math.pi)
    if fam in (BoundFamily.BEREZIN, BoundFamily.ELV):
        return lcl_constant(gamma) * lam ** (gamma + 1.0) * area
    if fam is BoundFamily.MAIN1:
        return excess_factor(gamma) * lcl_constant(gamma) * lam ** (gamma + 1.0) * area
    if fam in (BoundFamily.MAIN2, BoundFamily.ELV2):
        return float(magnetic_symbol_2d(B, lam, gamma)) * area
    if fam is BoundFamily.MAIN1NUMBER0:
        return (lam + B) * area / (4.0 * math.pi)
    if fam is BoundFamily.D3_MAGNETIC:
        return float(magnetic_symbol_3d(B, lam, gamma)) * area
    if fam is BoundFamily.D3_SEMICLASSICAL:
        return lcl_constant(gamma, 3) * lam ** (gamma + 1.5) * area
    if fam is BoundFamily.D3_EXCESS:
        return excess_factor(gamma + 0.5) * lcl_constant(gamma, 3) * lam ** (gamma + 1.5) * area
    if fam is BoundFamily.APPENDIXA:
        d = 2 if d is None else d
        return rho_constant(gamma, d) * lcl_constant(gamma, d) * lam ** (gamma + 0.5 * d) * area
    raise AssertionError(fam)  # pragma: no cover


# -- discretization allowance -------------------------------------------------

def calibrate_disc_constant(n: int = 64, L: float = 1.0) -> float:
    """Calibrate ``C_disc`` on the field-free Dirichlet square.

    The five-point eigenvalues of the square of side ``L`` with ``n`` cells per
    side are ``(4/h^2)(sin^2(k1 pi h/2L) + sin^2(k2 pi h/2L))`` against the
    continuum ``(pi/L)^2 (k1^2 + k2^2)``.  The constant is the largest relative
    deficit per unit ``h^2 mu`` over all modes of the grid.
    """
    h = L / n
    k = np.arange(1, n)
    x = k * math.pi * h / (2.0 * L)
    disc = 4.0 / h**2 * np.sin(x) ** 2
    cont = (k * math.pi / L) ** 2
    mu_d = disc[:, None] + disc[None, :]
    mu_c = cont[:, None] + cont[None, :]
    return float(np.max((1.0 - mu_d / mu_c) / (h**2 * mu_c)))


_C_DISC: float | None = None


def disc_constant() -> float:
    global _C_DISC
    if _C_DISC is None:
        _C_DISC = calibrate_disc_constant()
    return _C_DISC


def allowance(h: float, lam: float, c_disc: float | None = None) -> float:
    """``alpha(h, lam) = C_disc * h^2 * lam``."""
    c = disc_constant() if c_disc is None else c_disc
    return c * h * h * max(lam, 0.0)


# -- reports ------------------------------------------------------------------

@dataclass(frozen=True)
class BoundReport:
    family: BoundFamily
    gamma: float
    B: float
    lam: float
    lhs: float
    rhs: float
    ratio: float
    area: float
    h: float
    flag: str
    allowance: float = 0.0
    notes: str = ""

    def row(self) -> list:
        return [self.family.value, self.gamma, self.B, self.lam, self.lhs, self.rhs,
                self.ratio, self.area, self.h, self.flag]


REPORT_HEADER = ["family", "gamma", "B", "lambda", "lhs", "rhs", "ratio", "area", "h", "flag"]


def _flag(fam: BoundFamily, gamma: float, B: float, ratio: float, alpha: float, tiling: bool) -> str:
    info = FAMILY_INFO[fam]
    if fam is BoundFamily.POLYA and B > 0:
        return "intended-violation" if ratio > 1.0 else "ok"
    exploratory = info.domains == "tiling" and not tiling
    if fam is BoundFamily.MAIN2 and gamma >= 1:
        exploratory = False
    if exploratory:
        return "exploratory"
    if ratio <= 1.0:
        return "ok"
    return "within-allowance" if ratio <= 1.0 + VIOLATION_FACTOR * alpha else "violation"


def bound_report(slice_: SpectrumSlice, domain_area: float, B: float, families: Iterable,
                 gammas: Iterable[float], lambdas: Sequence[float], *, h: float = 0.0,
                 tiling: bool = True, notes: str = "", c_disc: float | None = None) -> list[BoundReport]:
    """One report per applicable ``(family, gamma, lambda)``.

    Combinations outside a family's validity range are skipped.  For the
    eigenvalue-sum families each ``lambda`` selects ``N = #{lambda_j < lambda}``
    and rows with ``N = 0`` are omitted.
    """
    if not slice_.complete:
        raise ContractError("bound_report needs a complete spectrum slice")
    lambdas = [float(x) for x in lambdas]
    if lambdas and max(lambdas) > slice_.cutoff:
        raise ContractError(f"lambda grid reaches {max(lambdas)!r} beyond the slice cutoff {slice_.cutoff!r}")
    fams = [_family(f) for f in families]
    gammas = sorted(set(float(g) for g in gammas))
    out = []
    for fam in fams:
        info = FAMILY_INFO[fam]
        if info.dim == 3:
            continue  # three-dimensional families go through product_3d_moment
        for g in gammas:
            try:
                _check_applicable(fam, g, B)
            except ApplicabilityError:
                continue
            for lam in lambdas:
                alpha = allowance(h, lam, c_disc)
                if info.eigensum:
                    N = int(np.sum(slice_.eigenvalues < lam))
                    if N == 0:
                        continue
                    lhs = evaluate_rhs(fam, g, B, N, domain_area)
                    rhs = float(np.sum(slice_.eigenvalues[:N]))
                else:
                    lhs = riesz_mean(slice_, lam, g)
                    rhs = evaluate_rhs(fam, g, B, lam, domain_area)
                if rhs > 0:
                    ratio = lhs / rhs
                else:
                    ratio = 0.0 if lhs == 0 else math.inf
                out.append(BoundReport(fam, g, B, lam, lhs, rhs, ratio, domain_area, h,
                                       _flag(fam, g, B, ratio, alpha, tiling), alpha, notes))
    return out


def liyau_check(slice_: SpectrumSlice, area: float) -> float:
    """``min_N (sum_{j<=N} lambda_j) * area / (2 pi N^2)`` over the slice."""
    if not slice_.complete:
        raise ContractError("liyau_check needs a complete spectrum slice")
    ev = np.sort(slice_.eigenvalues)
    if ev.size == 0:
        raise ContractError("liyau_check needs at least one eigenvalue")
    N = np.arange(1, ev.size + 1)
    return float(np.min(np.cumsum(ev) * area / (2.0 * math.pi * N**2)))


def product_3d_moment(slice2d: SpectrumSlice, interval_length: float, lam: float, gamma: float) -> float:
    """Riesz mean of the product ``omega x I`` by separation of variables.

    ``sum_n sum_j (lam - lambda_j - (pi n/|I|)^2)_+^gamma`` with Dirichlet modes
    on the interval; needs the 2D slice to reach ``lam - (pi/|I|)^2``.
    """
    if gamma < 0.5:
        raise DomainError(f"product bound needs gamma >= 1/2, got {gamma!r}")
    if not interval_length > 0:
        raise DomainError("interval_length must be > 0")
    if not slice2d.complete:
        raise ContractError("product_3d_moment needs a complete 2D slice")
    w1 = (math.pi / interval_length) ** 2
    if lam - w1 > slice2d.cutoff:
        raise ContractError(f"2D slice cutoff {slice2d.cutoff!r} below lam - (pi/|I|)^2 = {lam - w1!r}")
    total = 0.0
    n = 1
    while True:
        shift = lam - w1 * n * n
        ev = slice2d.eigenvalues[slice2d.eigenvalues < shift]
        if ev.size == 0:
            break
        total += float(np.sum((shift - ev) ** gamma))
        n += 1
    return total


# -- sharpness search ---------------------------------------------------------

@dataclass(frozen=True)
class Budget:
    max_flux: int = 128
    max_seconds: float = math.inf
    max_unknowns: int = 60_000


@dataclass
class CounterexampleResult:
    gamma: float
    B: float
    epsilon: float
    L: float
    lam: float
    achieved_ratio: float
    target: float
    grid_h: float
    certified: bool
    flux: int = 0
    monotone: bool = True
    history: list = field(default_factory=list)
    spectrum: SpectrumSlice | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {"gamma": self.gamma, "B": self.B, "epsilon": self.epsilon, "L": self.L,
                "lambda": self.lam, "achieved_ratio": self.achieved_ratio, "target": self.target,
                "grid_h": self.grid_h, "certified": self.certified, "flux": self.flux,
                "monotone": self.monotone, "history": self.history}


def counterexample_at(gamma: float, B: float, lam: float, flux: int, flux_res: float = 0.02,
                      seed: int = 0, with_slice: bool = True) -> tuple[float, float, float, SpectrumSlice | None]:
    """Ratio ``tr(H - lam)_-^gamma / (L^cl L^2 lam^{gamma+1})`` on a Dirichlet square.

    The side is flux-quantized, ``L = sqrt(2 pi flux / B)``, and the grid
    satisfies ``B h^2 <= flux_res``.  Returns ``(ratio, L, h, slice)``.  With
    ``gamma == 0`` and ``with_slice=False`` the count comes from an inertia
    certificate alone and no slice is returned.
    """
    L, _, h = flux_square(B, flux, flux_res)
    op = assemble(rasterize_domain(Square(L), h), B, BoundaryCondition.DIRICHLET)
    scale = lcl_constant(gamma) * L * L * lam ** (gamma + 1.0)
    if gamma == 0 and not with_slice:
        return count_below(op, lam).count / scale, L, h, None
    sl = eigs_below(op, lam, seed=seed)
    if not sl.complete:
        return math.nan, L, h, sl
    return riesz_mean(sl, lam, gamma) / scale, L, h, sl


def counterexample_search(gamma: float, B: float, epsilon: float, budget: Budget | None = None, *,
                          flux_start: int = 16, flux_res: float = 0.02,
                          deltas: Sequence[float] = (0.2, 0.1, 0.05), seed: int = 0,
                          keep_slice: bool = False) -> CounterexampleResult:
    """Grow a flux-quantized square until the Riesz mean beats ``(1 - eps) R_gamma``.

    ``lam = B(gamma + 1)`` for ``gamma > 0``; for ``gamma = 0`` every rung tries
    ``lam = B(1 + delta)`` over the shrinking ``deltas`` and keeps the best.
    The flux doubles from ``flux_start`` until certification or until the
    budget runs out; the best ratio is returned either way.  Counts for
    ``gamma = 0`` are inertia-certified; ``keep_slice`` additionally computes
    the spectrum of the winning square so it can be exported.
    """
    if not 0 <= gamma < 1:
        raise DomainError(f"counterexample search needs 0 <= gamma < 1, got {gamma!r}")
    if not 0 < epsilon < 1:
        raise DomainError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    if not B > 0:
        raise DomainError("B must be > 0")
    budget = budget or Budget()
    target = (1.0 - epsilon) * excess_factor(gamma)
    lams = [B * (gamma + 1.0)] if gamma > 0 else [B * (1.0 + d) for d in deltas]
    t0 = time.monotonic()
    best = None
    history = []
    flux = flux_start
    while flux <= budget.max_flux and time.monotonic() - t0 <= budget.max_seconds:
        _, n, _ = flux_square(B, flux, flux_res)
        if (n - 1) ** 2 > budget.max_unknowns:
            break
        rung_best = None
        for lam in lams:
            ratio, L, h, sl = counterexample_at(gamma, B, lam, flux, flux_res, seed, with_slice=gamma > 0)
            complete = sl is None or sl.complete
            history.append({"flux": flux, "lambda": lam, "ratio": ratio, "complete": complete})
            if complete and (rung_best is None or ratio > rung_best[0]):
                rung_best = (ratio, L, h, lam, sl)
        if rung_best is not None and (best is None or rung_best[0] >= best[0][0]):
            best = (rung_best, flux)
        elif rung_best is not None:
            history[-1]["nonmonotone"] = True
        if best is not None and best[0][0] >= target:
            break
        flux *= 2
    monotone = not any(r.get("nonmonotone") for r in history)
    if best is None:
        return CounterexampleResult(gamma, B, epsilon, math.nan, lams[0], math.nan, target, math.nan,
                                    False, 0, monotone, history)
    (ratio, L, h, lam, sl), fl = best
    if sl is None and keep_slice:
        _, _, _, sl = counterexample_at(gamma, B, lam, fl, flux_res, seed)
    return CounterexampleResult(gamma, B, epsilon, L, lam, ratio, target, h, bool(ratio >= target),
                                fl, monotone, history, sl)
