import math

import numpy as np
import pytest

from magpolya.errors import ContractError
from magpolya.lattice import Disk, Square, assemble, flux_square, l_shape, rasterize_domain
from magpolya.spectra import (
    SpectrumSlice,
    count_below,
    eigen_sum,
    eigs_below,
    read_spectrum,
    riesz_mean,
    write_spectrum,
)


def toy_slice(vals, cutoff=10.0):
    v = np.asarray(vals, dtype=float)
    return SpectrumSlice(cutoff, v, np.zeros_like(v), True, v.size)


def small_ops():
    L, n, h = flux_square(1.0, 2, 0.08)
    torus = rasterize_domain(Square(L), h)
    yield assemble(torus, 1.0, "periodic")
    yield assemble(torus, 1.0, "dirichlet")
    yield assemble(torus, 1.0, "neumann")
    yield assemble(rasterize_domain(Disk(1.0), 0.12), 2.0, "dirichlet")
    yield assemble(rasterize_domain(l_shape(1.0), 0.15), 0.0, "dirichlet")
    yield assemble(rasterize_domain(l_shape(1.0), 0.15), 0.7, "neumann")


@pytest.mark.parametrize("op", list(small_ops()), ids=lambda o: f"{o.bc.value}-{o.n}")
def test_inertia_matches_dense(op):
    w = np.linalg.eigvalsh(op.toarray())
    grid = np.linspace(w[0] - 1, w[min(60, w.size - 1)] + 1, 37)
    for lam in grid:
        assert count_below(op, lam).count == int(np.sum(w < lam))
    assert count_below(op, grid[5], method="dense").count == int(np.sum(w < grid[5]))


def test_count_monotone():
    op = assemble(rasterize_domain(Disk(1.0), 0.1), 1.0)
    counts = [count_below(op, lam).count for lam in np.linspace(0, 60, 25)]
    assert counts == sorted(counts)


def test_count_at_exact_eigenvalue_shifts():
    # B = 0 unit square, h = 1/4: eigenvalue 32 sin^2(pi/8) * 2 is exact and simple
    op = assemble(rasterize_domain(Square(1.0), 0.25), 0.0)
    w = np.linalg.eigvalsh(op.toarray())
    cert = count_below(op, float(w[0]))
    assert cert.count in (0, 1)
    assert cert.retries > 0 and cert.lam > w[0]


def test_eigs_below_dense_and_lanczos_agree():
    L, n, h = flux_square(1.0, 4, 0.1)
    op = assemble(rasterize_domain(Square(L), h), 1.0, "periodic")
    assert op.n <= 1500
    ref = np.linalg.eigvalsh(op.toarray())
    ref = ref[ref < 5.5]
    dense = eigs_below(op, 5.5)
    lanc = eigs_below(op, 5.5, dense_threshold=0, window=6, seed=3)
    assert dense.complete and lanc.complete
    assert dense.method == "dense" and lanc.method == "lanczos"
    assert np.allclose(dense.eigenvalues, ref, rtol=1e-12)
    assert np.max(np.abs(lanc.eigenvalues - ref) / ref) < 1e-9
    assert sum(w["count"] for w in lanc.notes["windows"]) == ref.size


def test_eigs_below_seed_deterministic():
    op = assemble(rasterize_domain(Disk(1.0), 0.1), 1.0)
    a = eigs_below(op, 30.0, dense_threshold=0, seed=5)
    b = eigs_below(op, 30.0, dense_threshold=0, seed=5)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)


def test_eigs_below_b0_degeneracies():
    op = assemble(rasterize_domain(Square(3.0), 0.1), 0.0)
    sl = eigs_below(op, 40.0, dense_threshold=0, window=12)
    ref = np.linalg.eigvalsh(op.toarray())
    ref = ref[ref < 40.0]
    assert sl.complete and len(sl) == ref.size
    assert np.allclose(sl.eigenvalues, ref, rtol=1e-9)


def test_empty_slice():
    op = assemble(rasterize_domain(Square(1.0), 0.1), 1.0)
    sl = eigs_below(op, 1.0, dense_threshold=0)
    assert sl.complete and len(sl) == 0


def test_riesz_examples():
    s = toy_slice([1.0, 3.0])
    assert riesz_mean(s, 2.0, 1) == 1.0
    assert riesz_mean(s, 4.0, 0) == 2.0
    assert riesz_mean(s, 3.0, 0) == 1.0  # strict inequality
    assert eigen_sum(s, 2) == 4.0
    with pytest.raises(ContractError):
        eigen_sum(s, 3)
    with pytest.raises(ContractError):
        riesz_mean(s, 11.0, 1)
    incomplete = SpectrumSlice(10.0, np.array([1.0]), np.zeros(1), False)
    with pytest.raises(ContractError):
        riesz_mean(incomplete, 2.0, 0)


def test_riesz_consistent_with_count():
    op = assemble(rasterize_domain(Disk(1.0), 0.1), 2.0)
    sl = eigs_below(op, 40.0)
    for lam in np.linspace(1, 40, 14):
        assert riesz_mean(sl, lam, 0) == count_below(op, lam).count


def test_torus_flux4_riesz_matches_symbol():
    # lowest cluster: multiplicity = flux, each eigenvalue close to B
    L, n, h = flux_square(1.0, 4)
    op = assemble(rasterize_domain(Square(L), h), 1.0, "periodic")
    sl = eigs_below(op, 1.5)
    assert len(sl) == 4
    from magpolya.symbol import magnetic_symbol_2d

    pred = L * L * float(magnetic_symbol_2d(1.0, 1.5, 1.0))
    assert riesz_mean(sl, 1.5, 1.0) == pytest.approx(pred, rel=0.02)


def test_spectrum_roundtrip(tmp_path):
    op = assemble(rasterize_domain(Disk(1.0), 0.1), 1.0)
    sl = eigs_below(op, 25.0, seed=11)
    side = write_spectrum(sl, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "index,eigenvalue,residual"
    back = read_spectrum(tmp_path / "s.csv")
    assert np.array_equal(back.eigenvalues, sl.eigenvalues)
    assert back.complete and back.count == sl.count and back.seed == 11
    assert side.endswith("s.json")


def test_count_rejects_nonfinite():
    op = assemble(rasterize_domain(Square(1.0), 0.25), 0.0)
    with pytest.raises(ValueError):
        count_below(op, math.inf)
