"""Certified eigenvalue counts, low-lying spectra and Riesz means.

Counts come from Sylvester's law of inertia applied to a block
``L D L^H`` factorization of ``H - lambda I``.  The block structure is the
grid-row partition of :class:`~magpolya.lattice.MagneticOperator` (block
tridiagonal, plus a corner block for periodic operators); each dense diagonal
block is factored with LAPACK's Bunch-Kaufman ``?hetrf``.

Eigenvalues come from a dense Hermitian solver up to ``DENSE_THRESHOLD``
unknowns and from shift-invert Lanczos (ARPACK) in spectral windows above
that.  Every window is certified by an inertia count, so a slice reports
``complete=True`` only if it holds exactly as many eigenvalues as the matrix
has below the cutoff.
"""
from __future__ import annotations

import json
import logging
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

from .errors import ContractError, NumericalError
from .lattice import MagneticOperator

log = logging.getLogger(__name__)

__all__ = [
    "CountCertificate",
    "SpectrumSlice",
    "count_below",
    "eigs_below",
    "riesz_mean",
    "eigen_sum",
    "write_spectrum",
    "read_spectrum",
    "DENSE_THRESHOLD",
]

DENSE_THRESHOLD = 1500
PIVOT_RTOL = 1e-10  # tau_pivot = PIVOT_RTOL * max|diag|, i.e. 1e-10 * 4/h^2
SHIFT_FACTOR = 10.0  # delta_shift = SHIFT_FACTOR * tau_pivot
MAX_GROWTH = 1e8
RESIDUAL_RTOL = 1e-8
ARPACK_TOL = 1e-10
ARPACK_MAXITER = 400
LOBPCG_TOL = 1e-9
LOBPCG_MAXITER = 60


@dataclass(frozen=True)
class CountCertificate:
    lam: float
    count: int
    method: str  # "inertia" or "dense"
    pivot_margin: float
    requested_lam: float | None = None
    retries: int = 0

    def __int__(self):
        return self.count


@dataclass(frozen=True, eq=False)
class SpectrumSlice:
    cutoff: float
    eigenvalues: np.ndarray
    residual_norms: np.ndarray
    complete: bool
    count: int = -1
    seed: int = 0
    pivot_margin: float = float("nan")
    method: str = "dense"
    notes: dict = field(default_factory=dict)

    def __len__(self):
        return self.eigenvalues.size


def _as_matrix(op):
    if isinstance(op, MagneticOperator):
        return op.matrix, op.blocks, op.periodic
    if sp.issparse(op):
        m = sp.csr_matrix(op)
    else:
        m = sp.csr_matrix(np.asarray(op))
    return m, [(0, m.shape[0])], False


def _pivots(ldu, ipiv, lower=True):
    """Diagonal (1x1) and 2x2 pivot eigenvalues from a ``?hetrf`` result."""
    n = ldu.shape[0]
    out = []
    k = 0
    while k < n:
        if ipiv[k] > 0:
            out.append(ldu[k, k].real)
            k += 1
        else:
            a, c = ldu[k, k].real, ldu[k + 1, k + 1].real
            b = ldu[k + 1, k] if lower else ldu[k, k + 1]
            out.extend(np.linalg.eigvalsh(np.array([[a, np.conj(b)], [b, c]])))
            k += 2
    return np.asarray(out)


def _factor(S):
    if np.iscomplexobj(S):
        trf, trs = lapack.zhetrf, lapack.zhetrs
    else:
        trf, trs = lapack.dsytrf, lapack.dsytrs
    ldu, ipiv, info = trf(S, lower=1)
    if info < 0:
        raise NumericalError(f"?hetrf argument error {info}")
    piv = _pivots(ldu, ipiv)
    if info > 0:
        return piv, None
    inv, info = trs(ldu, ipiv, np.eye(S.shape[0], dtype=S.dtype), lower=1)
    if info != 0:
        return piv, None
    return piv, 0.5 * (inv + inv.conj().T)


def _block_inertia(A: sp.csr_matrix, blocks, periodic, shift):
    """Negative count, pivot margin and growth of ``A - shift I`` by block elimination."""
    m = len(blocks)

    def dense(a, b):
        (r0, r1), (c0, c1) = blocks[a], blocks[b]
        return A[r0:r1, c0:c1].toarray()

    def sparse(a, b):
        (r0, r1), (c0, c1) = blocks[a], blocks[b]
        return A[r0:r1, c0:c1]

    def diag(a):
        D = dense(a, a)
        D[np.diag_indices_from(D)] -= shift
        return D

    scale = max(1.0, float(np.max(np.abs(A.diagonal() - shift))))
    neg, margin, growth = 0, np.inf, 1.0
    corner = periodic and m >= 3
    S = diag(0)
    W = sparse(0, m - 1).toarray() if corner else None
    T = diag(m - 1) if m > 1 else None
    for k in range(m - 1):
        piv, inv = _factor(S)
        neg += int(np.sum(piv < 0))
        margin = min(margin, float(np.min(np.abs(piv))))
        if inv is None:
            return neg, 0.0, np.inf
        C = sparse(k, k + 1)
        if k < m - 2:
            X = (C.T @ inv.T).T  # inv @ C
            S = diag(k + 1) - (C.conj().T @ X)
            if corner:
                XW = inv @ W
                T = T - W.conj().T @ XW
                W = -(C.conj().T @ XW)
        else:
            G = C.toarray() + (W if corner else 0.0)
            S = T - G.conj().T @ (inv @ G)
        S = 0.5 * (S + S.conj().T)
        growth = max(growth, float(np.max(np.abs(S))) / scale)
    piv, _ = _factor(S)
    neg += int(np.sum(piv < 0))
    margin = min(margin, float(np.min(np.abs(piv))))
    return neg, margin, growth


def count_below(op, lam: float, *, method: str = "inertia", max_retries: int = 6) -> CountCertificate:
    """Number of eigenvalues strictly below ``lam``.

    Parameters
    ----------
    op : MagneticOperator, sparse matrix or ndarray
        Hermitian operator.  Plain matrices are factored as a single block.
    lam : float
        Spectral threshold.
    method : {"inertia", "dense"}
        ``"dense"`` diagonalizes the full matrix; it is the independent oracle.

    Notes
    -----
    When the smallest pivot is below ``tau = 1e-10 * max|diag|`` (or the
    Schur complements grow by more than ``1e8``) the count is recomputed at
    ``lam + 10 tau 4^k`` for ``k = 0, 1, ...``; the certificate then reports
    the shifted ``lam``.
    """
    if not np.isfinite(lam):
        raise ValueError(f"lambda must be finite, got {lam!r}")
    A, blocks, periodic = _as_matrix(op)
    if method == "dense":
        w = np.linalg.eigvalsh(A.toarray())
        gap = float(np.min(np.abs(w - lam))) if w.size else np.inf
        return CountCertificate(float(lam), int(np.sum(w < lam)), "dense", gap)
    if method != "inertia":
        raise ValueError(f"unknown method {method!r}")
    tau = PIVOT_RTOL * max(1.0, float(np.max(np.abs(A.diagonal()))))
    shifted = float(lam)
    diagnostics = []
    for attempt in range(max_retries + 1):
        neg, margin, growth = _block_inertia(A, blocks, periodic, shifted)
        if margin >= tau and growth <= MAX_GROWTH:
            return CountCertificate(shifted, neg, "inertia", margin,
                                    requested_lam=float(lam) if attempt else None, retries=attempt)
        diagnostics.append({"lam": shifted, "pivot_margin": margin, "growth": growth})
        shifted = float(lam) + SHIFT_FACTOR * tau * 4.0**attempt
    raise NumericalError(f"inertia count at lambda={lam!r} failed after {max_retries} shifts",
                         {"attempts": diagnostics, "tau_pivot": tau})


def _residuals(A, vals, vecs):
    R = A @ vecs - vecs * vals[None, :]
    return np.linalg.norm(R, axis=0) / np.maximum(np.linalg.norm(vecs, axis=0), 1e-300)


def _norm1(A):
    return float(abs(A).sum(axis=0).max())


def _deflated_block(lu, Q, k, rng, n, dtype):
    """Leading eigenvectors of ``(A - a)^{-1}`` orthogonal to ``span(Q)``.

    Positive eigenvalues ``theta`` correspond to eigenvalues ``a + 1/theta``
    of ``A`` just above the shift.  The first call uses shift-invert Lanczos;
    later calls use LOBPCG with ``Q`` as a hard constraint, since a block
    method resolves the tight clusters that a single Krylov sequence misses.
    Small problems stay with Lanczos on the projected operator.
    """
    v0 = rng.standard_normal((n, k))
    if dtype is complex:
        v0 = v0 + 1j * rng.standard_normal((n, k))
    k = max(1, min(k, n - Q.shape[1] - 2))

    def proj(x):
        return x - Q @ (Q.conj().T @ x) if Q.shape[1] else x

    if Q.shape[1] == 0 or n - Q.shape[1] < 5 * k:
        # small problems: LOBPCG would switch to a dense solver without constraints
        opinv = spla.LinearOperator(
            (n, n), matvec=lambda x: proj(lu.solve(proj(np.asarray(x, dtype=dtype).ravel()))), dtype=dtype)
        ncv = min(n - 1, max(2 * k + 1, k + 40))
        try:
            theta, X = spla.eigsh(opinv, k=k, which="LA", v0=proj(v0[:, 0].astype(dtype)), tol=ARPACK_TOL,
                                  ncv=ncv, maxiter=ARPACK_MAXITER)
        except spla.ArpackNoConvergence as exc:
            theta, X = exc.eigenvalues, exc.eigenvectors
    else:
        opinv = spla.LinearOperator((n, n), matvec=lambda x: lu.solve(np.asarray(x, dtype=dtype).ravel()),
                                    matmat=lambda X: lu.solve(np.asarray(X, dtype=dtype)), dtype=dtype)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            theta, X = spla.lobpcg(opinv, v0[:, :k].astype(dtype), Y=Q, largest=True, tol=LOBPCG_TOL,
                                   maxiter=LOBPCG_MAXITER)
    theta = np.real(theta)
    return X[:, theta > 0]


def _rayleigh_ritz(A, Q):
    H = Q.conj().T @ (A @ Q)
    w, Y = np.linalg.eigh(0.5 * (H + H.conj().T))
    return w, Q @ Y


def _refine(A, vals, V, lo, hi, tol, ident, steps=3):
    """Block inverse iteration shifted to the worst Ritz value, then Rayleigh-Ritz.

    Ritz vectors that a far-away shift left poorly converged (typically a tight
    cluster at the top of a window) converge in a step or two from a shift
    placed right at them.  The Ritz values must stay inside ``(lo, hi)``.
    """
    for _ in range(steps):
        res = _residuals(A, vals, V)
        if np.all(res <= tol):
            break
        mu = float(vals[int(np.argmax(res))])
        mu -= 1e-7 * max(1.0, abs(mu))  # keep the factorization nonsingular
        W = spla.splu((A - mu * ident).tocsc()).solve(V)
        w, U = _rayleigh_ritz(A, sla.orth(np.hstack([V, W])))
        keep = (w > lo) & (w < hi)
        if keep.sum() != vals.size:
            break
        vals, V = w[keep], U[:, keep]
    return vals, V


def _window_cut(vals, remaining, cutoff):
    """Number of Ritz values to accept and the count point that certifies them."""
    if vals.size == 0:
        return None
    below = int(np.sum(vals < cutoff))
    if below < vals.size or below == remaining:
        return below, float(cutoff)
    half = max(1, vals.size // 2)
    gaps = np.diff(vals[half - 1:])
    if gaps.size == 0:
        return None
    g = int(np.argmax(gaps)) + half - 1
    return g + 1, 0.5 * (vals[g] + vals[g + 1])


def eigs_below(op, cutoff: float, *, seed: int = 0, dense_threshold: int = DENSE_THRESHOLD,
               window: int = 64, max_attempts: int = 8) -> SpectrumSlice:
    """All eigenvalues below ``cutoff``, certified against the inertia count.

    Small problems are diagonalized densely.  Larger ones are swept upward in
    windows.  In each window ``A - a I`` is factored once and shift-invert
    Lanczos (ARPACK) returns the eigenvalues just above ``a``; the window is
    closed at the midpoint of the widest gap in its upper half and the running
    total is checked against ``count_below`` there.  Copies of degenerate
    eigenvalues that a single Krylov sequence misses show up as a count
    deficit, and are recovered by repeating the solve with the current Ritz
    vectors projected out, followed by a Rayleigh-Ritz step on the union.

    When ``cutoff`` coincides with an eigenvalue the count is certified at a
    slightly larger value (see :func:`count_below`), and the returned slice
    uses that value as its cutoff.
    """
    A, _, _ = _as_matrix(op)
    n = A.shape[0]
    cert = count_below(op, cutoff)
    K = cert.count
    # a cutoff on top of an eigenvalue is certified slightly above it; slice there
    cutoff = cert.lam
    scale = _norm1(A)
    if n <= dense_threshold:
        w, V = np.linalg.eigh(A.toarray())
        keep = w < cutoff
        vals, res = w[keep], _residuals(A, w[keep], V[:, keep])
        ok = vals.size == K and bool(np.all(res <= RESIDUAL_RTOL * scale))
        return SpectrumSlice(float(cutoff), vals, res, ok, K, seed, cert.pivot_margin, "dense")
    if K == 0:
        return SpectrumSlice(float(cutoff), np.empty(0), np.empty(0), True, 0, seed, cert.pivot_margin,
                             "lanczos")
    if K > n - 2:
        raise ContractError(f"{K} eigenvalues requested from a matrix of size {n}")

    dtype = complex if np.iscomplexobj(A.data) else float
    rng = np.random.default_rng(seed)
    ident = sp.identity(n, dtype=dtype, format="csc")
    found_vals, found_res = [], []
    a = min(0.0, float(A.diagonal().real.min())) - 1e-3 * scale  # forms are non-negative
    notes = {"windows": []}
    complete = True
    while len(found_vals) < K:
        remaining = K - len(found_vals)
        k = min(remaining + 8, window, n - 2)
        lu = spla.splu((A - a * ident).tocsc())
        Q = np.zeros((n, 0), dtype=dtype)
        accepted = None
        rounds = 0
        for rounds in range(1, max_attempts + 1):
            X = _deflated_block(lu, Q, k, rng, n, dtype)
            if X.shape[1]:
                Q = sla.orth(np.hstack([Q, X]))
            vals, vecs = _rayleigh_ritz(A, Q)
            above = vals > a
            vals, vecs = vals[above], vecs[:, above]
            Q = vecs
            cut = _window_cut(vals, remaining, cutoff)
            if cut is None:
                k = min(2 * k, n - 2)
                continue
            take, c = cut
            total = K if c == cutoff else count_below(op, c).count
            missing = total - len(found_vals) - take
            log.debug("window a=%.6g round %d: k=%d ritz=%d take=%d cut=%.6g missing=%d",
                      a, rounds, k, vals.size, take, c, missing)
            if missing == 0:
                accepted = (vals[:take], vecs[:, :take], c)
                break
            if missing < 0:  # spurious Ritz values: start the window afresh
                Q = np.zeros((n, 0), dtype=dtype)
                k = min(2 * k, n - 2)
            else:
                k = min(missing + 8, window, n - 2)
        if accepted is None:
            complete = False
            break
        v, V, c = accepted
        v, V = _refine(A, v, V, a, c, RESIDUAL_RTOL * scale, ident)
        found_vals.extend(v.tolist())
        found_res.extend(_residuals(A, v, V).tolist())
        notes["windows"].append({"sigma": float(a), "upper": float(c), "count": int(v.size), "rounds": rounds})
        a = c
        if c >= cutoff:
            break
    vals = np.asarray(found_vals)
    res = np.asarray(found_res)
    order = np.argsort(vals)
    vals, res = vals[order], res[order]
    ok = complete and vals.size == K and bool(np.all(res <= RESIDUAL_RTOL * scale))
    return SpectrumSlice(float(cutoff), vals, res, ok, K, seed, cert.pivot_margin, "lanczos", notes)


def riesz_mean(slice_: SpectrumSlice, lam: float, gamma: float) -> float:
    """``sum_{lambda_j < lam} (lam - lambda_j)^gamma``; the count for ``gamma == 0``."""
    if not slice_.complete:
        raise ContractError("riesz_mean needs a complete spectrum slice")
    if lam > slice_.cutoff:
        raise ContractError(f"lambda={lam!r} exceeds the slice cutoff {slice_.cutoff!r}")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    ev = slice_.eigenvalues[slice_.eigenvalues < lam]
    if gamma == 0:
        return float(ev.size)
    return float(np.sum((lam - ev) ** gamma))


def eigen_sum(slice_: SpectrumSlice, N: int) -> float:
    if not slice_.complete:
        raise ContractError("eigen_sum needs a complete spectrum slice")
    if not 1 <= N <= len(slice_):
        raise ContractError(f"N={N!r} outside 1..{len(slice_)}")
    return float(np.sum(slice_.eigenvalues[:N]))


def write_spectrum(slice_: SpectrumSlice, csv_path: str | os.PathLike) -> str:
    """Write ``index,eigenvalue,residual`` CSV plus a JSON sidecar; returns the sidecar path."""
    from .io import atomic_write_json, atomic_write_text

    lines = ["index,eigenvalue,residual"]
    lines += [f"{i},{v!r},{r!r}" for i, (v, r) in
              enumerate(zip(slice_.eigenvalues.tolist(), slice_.residual_norms.tolist()))]
    atomic_write_text(csv_path, "\n".join(lines) + "\n")
    side = os.fspath(csv_path)
    side = (side[:-4] if side.endswith(".csv") else side) + ".json"
    meta = {"cutoff": slice_.cutoff, "count": slice_.count, "complete": slice_.complete,
            "seed": slice_.seed, "pivot_margin": slice_.pivot_margin}
    atomic_write_json(side, meta)
    return side


def read_spectrum(csv_path: str | os.PathLike) -> SpectrumSlice:
    data = np.genfromtxt(csv_path, delimiter=",", names=True, ndmin=1)
    side = os.fspath(csv_path)
    side = (side[:-4] if side.endswith(".csv") else side) + ".json"
    with open(side, encoding="utf-8") as fh:
        meta = json.load(fh)
    vals = np.atleast_1d(data["eigenvalue"]) if data.size else np.empty(0)
    res = np.atleast_1d(data["residual"]) if data.size else np.empty(0)
    return SpectrumSlice(meta["cutoff"], vals.astype(float), res.astype(float), meta["complete"],
                         meta["count"], meta["seed"], float(meta["pivot_margin"]), "file")
