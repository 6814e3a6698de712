"""End-to-end acceptance checks; a summary line per criterion is printed after the run."""
import math
import time

import mpmath as mp
import numpy as np
import pytest

from magpolya import bounds as bd
from magpolya import experiments as ex
from magpolya.lattice import (
    BoundaryCondition,
    Disk,
    Square,
    assemble,
    flux_square,
    gauge_shift,
    l_shape,
    rasterize_domain,
)
from magpolya.spectra import count_below, eigs_below
from magpolya.symbol import (
    excess_factor,
    lcl_constant,
    legendre_transform,
    lift_moment,
    magnetic_symbol_2d,
    magnetic_symbol_3d,
    rho_constant,
    sup_ratio,
    sup_ratio_closed_form,
)

RESULTS: dict[int, tuple[bool, str]] = {}


class Criterion:
    def __init__(self, number, budget_s):
        self.number, self.budget = number, budget_s
        self.details = []

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def note(self, msg):
        self.details.append(msg)

    def __exit__(self, kind, exc, tb):
        dt = time.perf_counter() - self.t0
        ok = kind is None and dt < self.budget
        self.details.append(f"{dt:.1f}s of {self.budget:g}s")
        if kind is not None:
            self.details.insert(0, f"{kind.__name__}: {exc}".splitlines()[0][:160])
        RESULTS[self.number] = (ok, "; ".join(self.details))
        if kind is None and not ok:
            raise AssertionError(f"criterion {self.number} took {dt:.1f}s, budget {self.budget}s")
        return False


def test_1_constants():
    with Criterion(1, 1.0) as c:
        assert excess_factor(0) == 2.0
        mp.mp.dps = 40
        worst = 0.0
        for g in [k / 10 for k in range(1, 10)]:
            ref = 2 * (mp.mpf(g) / (mp.mpf(g) + 1)) ** mp.mpf(g)
            worst = max(worst, abs(excess_factor(g) / float(ref) - 1))
        assert worst <= 1e-12
        q = rho_constant(0, 2) / excess_factor(0)
        assert f"{q:.5g}" == "1.0758"
        c.note(f"max rel err {worst:.1e}, rho/R = {q:.6f}")


def test_2_symbol_identities():
    with Criterion(2, 10.0) as c:
        worst = 0.0
        for g in (0.5, 1.0, 1.5):
            for lam in ex.lambda_grid(1.0, ex.default_lambda_units(8.0, 0.25)):
                ref = float(magnetic_symbol_2d(1.0, lam, g))
                got = lift_moment(1.0, lam, g)
                worst = max(worst, abs(got - ref) / ref if ref else abs(got))
        assert worst <= 1e-10
        worst3 = 0.0
        for g in (0.0, 0.5, 1.0, 2.0):
            for lam in np.linspace(0.25, 8, 32):
                a = float(magnetic_symbol_3d(1.0, lam, g))
                b = lcl_constant(g, 1) * float(magnetic_symbol_2d(1.0, lam, g + 0.5))
                worst3 = max(worst3, abs(a - b) / b if b else abs(a))
        assert worst3 <= 1e-10
        worst_sup = 0.0
        for g in (0, 0.25, 0.5, 1, 1.5, 2):
            num, ref = sup_ratio(g, 1.0).sup, sup_ratio_closed_form(g, 1.0).sup
            worst_sup = max(worst_sup, abs(num - ref) / ref)
        assert worst_sup <= 1e-6
        c.note(f"lift {worst:.1e}, 3d {worst3:.1e}, sup {worst_sup:.1e}")


def test_3_torus_landau_levels():
    with Criterion(3, 120.0) as c:
        r = ex.torus_verify(1.0, 8, 0.02)
        assert r.B * r.h**2 <= 0.02
        counts = [cl[2] for cl in r.clusters[:3]]
        assert counts == [8, 8, 8]
        for k, cl in enumerate(r.clusters[:3]):
            assert abs(cl[0] - (2 * k + 1)) <= 0.05 * (2 * k + 1)
        c.note("centers " + ", ".join(f"{cl[0]:.4f}" for cl in r.clusters[:3]))


def test_4_density_of_states():
    with Criterion(4, 600.0) as c:
        r = ex.dos_scan(1.0, 3.5, (16, 32, 64), 0.02)
        ratios = [row[7] for row in r.rows]
        assert all(b > a for a, b in zip(ratios, ratios[1:]))
        assert ratios[-1] >= 0.85
        assert all(row[3] <= row[4] for row in r.rows)
        c.note("ratios " + ", ".join(f"{x:.4f}" for x in ratios))


def test_5_polya_violation():
    with Criterion(5, 900.0) as c:
        ratio, L, h, _ = bd.counterexample_at(0.0, 1.0, 1.05, 64, 0.02, with_slice=False)
        assert ratio >= 1.2
        half = bd.counterexample_search(0.5, 1.0, 0.5, bd.Budget(max_flux=128))
        assert half.certified and half.lam == pytest.approx(1.5)
        c.note(f"gamma 0: {ratio:.4f}; gamma 1/2: {half.achieved_ratio:.4f} >= {half.target:.4f}"
               f" at flux {half.flux}")


@pytest.mark.slow
def test_6_bound_validity_sweep():
    with Criterion(6, 1800.0) as c:
        r = ex.bounds_matrix()
        assert r.assertions["all_spectra_complete"]
        flags = {}
        worst = 0.0
        for x in r.reports:
            flags[x.flag] = flags.get(x.flag, 0) + 1
            if x.flag in ("ok", "within-allowance", "violation"):
                worst = max(worst, (x.ratio - 1) / max(x.allowance, 1e-300) if x.ratio > 1 else 0.0)
        assert flags.get("violation", 0) == 0
        assert all(x.family is bd.BoundFamily.POLYA and x.B > 0 and x.gamma < 1
                   for x in r.reports if x.flag == "intended-violation")
        assert r.assertions["eigenvalue_sums_above_bound"]
        c.note(f"flags {dict(sorted(flags.items()))}; worst excess {worst:.2f} alpha")


def small_operators():
    for B in (0.5, 1.0, 2.0):
        for flux in (1, 2, 4):
            L, n, h = flux_square(B, flux, 0.08)
            dom = rasterize_domain(Square(L), h)
            for bc in BoundaryCondition:
                yield assemble(dom, B, bc)
    for B in (0.0, 1.0, 2.0):
        for shape, h in ((Disk(1.0), 0.1), (l_shape(1.0), 0.1), (Square(2.0), 0.1)):
            dom = rasterize_domain(shape, h)
            for bc in (BoundaryCondition.DIRICHLET, BoundaryCondition.NEUMANN):
                yield assemble(dom, B, bc)


def test_7_oracle_equivalence():
    with Criterion(7, 120.0) as c:
        ops = [op for op in small_operators() if op.n <= 400]
        worst_eig = worst_gauge = 0.0
        rng = np.random.default_rng(1)
        for op in ops:
            w = np.linalg.eigvalsh(op.toarray())
            for lam in np.linspace(w[0] - 0.5, w[-1] + 0.5, 23):
                cert = count_below(op, lam)
                assert cert.count == int(np.sum(w < cert.lam))
            # one cut inside a spectral gap, one at the middle of the spectrum
            # (for B = 0 the latter sits on the degenerate eigenvalue 4/h^2)
            lo, hi = op.n // 3, 2 * op.n // 3
            j = lo + int(np.argmax(np.diff(w[lo:hi])))
            for cut in (0.5 * (w[j] + w[j + 1]), 0.5 * (w[op.n // 2] + w[op.n // 2 + 1])):
                sl = eigs_below(op, cut, dense_threshold=0, seed=2)
                ref = w[w < sl.cutoff]
                assert sl.complete and len(sl) == ref.size
                scale = np.maximum(np.abs(ref), 1e-3 * abs(w[-1]))
                worst_eig = max(worst_eig, float(np.max(np.abs(sl.eigenvalues - ref) / scale)))
            if not op.periodic and op.B > 0:
                g = gauge_shift(op, rng.uniform(-math.pi, math.pi, op.n))
                w2 = np.linalg.eigvalsh(g.toarray())
                worst_gauge = max(worst_gauge, float(np.max(np.abs(w2 - w) / np.abs(w))))
        assert worst_eig <= 1e-9
        assert worst_gauge <= 1e-10
        c.note(f"{len(ops)} operators; eig {worst_eig:.1e}; gauge {worst_gauge:.1e}")


def test_8_legendre_duality():
    with Criterion(8, 1.0) as c:
        worst = 0.0
        for area in (1.0, math.pi, 3.7):
            knots = 4 * math.pi * np.arange(0, 121) / area
            f = lcl_constant(1, 2) * area * knots**2
            for N in range(1, 51):
                v = legendre_transform(knots, f, N).value
                worst = max(worst, abs(v / (2 * math.pi * N * N / area) - 1))
        assert worst <= 1e-9
        c.note(f"max rel err {worst:.1e}")
