"""Rasterized planar domains and Peierls-phase discretizations of ``(D - BA)^2``.

Geometry convention
-------------------
A :class:`GridDomain` is a boolean mask of square cells of side ``h``; the
measure ``|Omega|`` is ``h**2`` times the number of cells.  Unknowns live on
cell *corners* (grid nodes):

* Dirichlet: nodes whose four surrounding cells all belong to the mask, so the
  zero boundary values sit on the boundary of the rasterized shape.
* Neumann: every node touching a mask cell, with an edge wherever a cell side
  of the mask lies.
* Magnetic-periodic: an ``n x n`` square of cells becomes an ``n x n`` torus of
  nodes; the node at ``x = +L/2`` is identified with ``x = -L/2`` through the
  magnetic translations.

The vector potential is always the symmetric gauge ``A(x) = (-x2, x1)/2``.
Hopping from node ``p`` to a neighbour ``q`` carries ``-h^-2 exp(i theta)``
with ``theta = -B * int_p^q A.dl`` (exact for a linear ``A``), so every
elementary plaquette carries the phase ``exp(-i B h^2)``.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, DegenerateDomainError

__all__ = [
    "BoundaryCondition",
    "Square",
    "Disk",
    "Polygon",
    "MaskFile",
    "l_shape",
    "parse_shape",
    "GridDomain",
    "MagneticOperator",
    "FluxReport",
    "rasterize_domain",
    "read_mask_file",
    "write_mask_file",
    "assemble",
    "flux_check",
    "flux_square",
    "gauge_shift",
    "plaquette_phases",
    "matched_square_operators",
    "export_coo",
]


class BoundaryCondition(str, Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    PERIODIC = "periodic"  # magnetic-periodic on a flux-quantized square


@dataclass(frozen=True)
class Square:
    L: float
    center: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class Disk:
    r: float
    center: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class Polygon:
    vertices: tuple[tuple[float, float], ...]
    tiling: bool = False


@dataclass(frozen=True)
class MaskFile:
    path: str


Shape = Union[Square, Disk, Polygon, MaskFile]


def l_shape(a: float) -> Polygon:
    """L-shaped hexagon made of three ``a x a`` squares, centred at the origin."""
    v = [(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)]
    return Polygon(tuple(((x - 1) * a, (y - 1) * a) for x, y in v))


def parse_shape(text: str) -> Shape:
    """Parse ``square:L``, ``disk:r``, ``lshape:a``, ``polygon:x,y;x,y;...`` or ``mask:PATH``."""
    kind, _, arg = text.strip().partition(":")
    kind = kind.lower()
    try:
        if kind == "square":
            return Square(float(arg))
        if kind == "disk":
            return Disk(float(arg))
        if kind == "lshape":
            return l_shape(float(arg))
        if kind == "polygon":
            pts = tuple(tuple(float(c) for c in pair.split(",")) for pair in arg.split(";"))
            return Polygon(pts)
        if kind == "mask":
            return MaskFile(arg)
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse shape {text!r}: {exc}") from None
    raise ConfigurationError(f"unknown shape kind {kind!r} in {text!r}")


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Cell mask on a uniform grid.

    ``mask[i, j]`` refers to the cell ``[x0 + i h, x0 + (i+1) h] x [y0 + j h, y0 + (j+1) h]``.
    """

    origin: tuple[float, float]
    h: float
    mask: np.ndarray
    tiling: bool = False
    label: str = ""

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise ConfigurationError("mask must be two-dimensional")
        if not self.h > 0:
            raise ConfigurationError(f"grid spacing must be positive, got {self.h!r}")
        if not mask.any():
            raise DegenerateDomainError("domain mask has no interior cells")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def nx(self) -> int:
        return self.mask.shape[0]

    @property
    def ny(self) -> int:
        return self.mask.shape[1]

    @property
    def area(self) -> float:
        return self.h**2 * int(self.mask.sum())

    @property
    def is_full_square(self) -> bool:
        return self.nx == self.ny and bool(self.mask.all())

    def cell_centers(self):
        x = self.origin[0] + (np.arange(self.nx) + 0.5) * self.h
        y = self.origin[1] + (np.arange(self.ny) + 0.5) * self.h
        return np.meshgrid(x, y, indexing="ij")

    def node_coordinates(self, i, j):
        return self.origin[0] + np.asarray(i) * self.h, self.origin[1] + np.asarray(j) * self.h


def rasterize_domain(shape: Shape | str, h: float) -> GridDomain:
    """Rasterize a shape: a cell is interior iff its centre lies in the open shape."""
    if isinstance(shape, str):
        shape = parse_shape(shape)
    if not h > 0:
        raise ConfigurationError(f"grid spacing must be positive, got {h!r}")
    if isinstance(shape, MaskFile):
        return read_mask_file(shape.path)

    if isinstance(shape, Square):
        if not shape.L > 0:
            raise DegenerateDomainError("square side must be positive")
        n = max(1, int(round(shape.L / h)))
        cx, cy = shape.center
        origin = (cx - 0.5 * n * h, cy - 0.5 * n * h)
        dom = GridDomain(origin, h, np.ones((n, n), dtype=bool), tiling=True, label=f"square:{shape.L!r}")
        X, Y = dom.cell_centers()
        mask = (np.abs(X - cx) < 0.5 * shape.L) & (np.abs(Y - cy) < 0.5 * shape.L)
        return GridDomain(origin, h, mask, tiling=True, label=dom.label)

    if isinstance(shape, Disk):
        if not shape.r > 0:
            raise DegenerateDomainError("disk radius must be positive")
        n = max(1, int(math.ceil(2 * shape.r / h)))
        cx, cy = shape.center
        origin = (cx - 0.5 * n * h, cy - 0.5 * n * h)
        x = origin[0] + (np.arange(n) + 0.5) * h
        y = origin[1] + (np.arange(n) + 0.5) * h
        X, Y = np.meshgrid(x, y, indexing="ij")
        mask = (X - cx) ** 2 + (Y - cy) ** 2 < shape.r**2
        return GridDomain(origin, h, mask, tiling=False, label=f"disk:{shape.r!r}")

    if isinstance(shape, Polygon):
        from matplotlib.path import Path

        verts = np.asarray(shape.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[0] < 3 or verts.shape[1] != 2:
            raise DegenerateDomainError("polygon needs at least three 2D vertices")
        lo, hi = verts.min(axis=0), verts.max(axis=0)
        nx = max(1, int(math.ceil((hi[0] - lo[0]) / h - 1e-9)))
        ny = max(1, int(math.ceil((hi[1] - lo[1]) / h - 1e-9)))
        origin = (0.5 * (lo[0] + hi[0]) - 0.5 * nx * h, 0.5 * (lo[1] + hi[1]) - 0.5 * ny * h)
        x = origin[0] + (np.arange(nx) + 0.5) * h
        y = origin[1] + (np.arange(ny) + 0.5) * h
        X, Y = np.meshgrid(x, y, indexing="ij")
        inside = Path(verts).contains_points(np.column_stack([X.ravel(), Y.ravel()]))
        return GridDomain(origin, h, inside.reshape(nx, ny), tiling=shape.tiling, label="polygon")

    raise ConfigurationError(f"unsupported shape {shape!r}")


def read_mask_file(path: str | os.PathLike) -> GridDomain:
    """Read the ASCII mask format.

    Line 1 is ``nx ny h x0 y0``; then ``ny`` lines of ``nx`` characters,
    ``#`` interior and ``.`` exterior.  The first of these lines is the top
    row (largest ``y``), as the file would be drawn.
    """
    try:
        with open(path, encoding="ascii") as fh:
            lines = [ln.rstrip("\r\n") for ln in fh]
    except (OSError, UnicodeDecodeError) as exc:
        raise OSError(f"cannot read mask file {path!s}: {exc}") from exc
    try:
        head = lines[0].split()
        nx, ny = int(head[0]), int(head[1])
        h, x0, y0 = float(head[2]), float(head[3]), float(head[4])
    except (IndexError, ValueError) as exc:
        raise OSError(f"malformed mask header in {path!s}") from exc
    rows = lines[1:1 + ny]
    if len(rows) != ny or any(len(r) != nx or set(r) - {"#", "."} for r in rows):
        raise OSError(f"mask body of {path!s} does not match {nx}x{ny} of '#'/'.'")
    mask = np.array([[c == "#" for c in r] for r in reversed(rows)], dtype=bool).T
    return GridDomain((x0, y0), h, mask, tiling=False, label=f"mask:{os.fspath(path)}")


def write_mask_file(domain: GridDomain, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{domain.nx} {domain.ny} {float(domain.h)!r} {float(domain.origin[0])!r} {float(domain.origin[1])!r}\n")
        for j in reversed(range(domain.ny)):
            fh.write("".join("#" if domain.mask[i, j] else "." for i in range(domain.nx)) + "\n")


class FluxReport(NamedTuple):
    continuum_flux: float
    admissible: bool
    nearest_admissible_B: float


def flux_check(L: float, B: float, h: float) -> FluxReport:
    """Check the torus flux quantization ``L^2 B / (2 pi) in N``."""
    if not (L > 0 and h > 0):
        raise ConfigurationError("L and h must be positive")
    ratio = L / h
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
        raise ConfigurationError(f"L/h = {ratio!r} is not an integer")
    flux = L * L * B / (2.0 * math.pi)
    nearest = round(flux)
    return FluxReport(flux, abs(flux - nearest) <= 1e-9, 2.0 * math.pi * nearest / (L * L))


def flux_square(B: float, flux: int, flux_res: float = 0.02) -> tuple[float, int, float]:
    """Side ``L``, cells per side ``n`` and spacing ``h = L/n`` with ``B h^2 <= flux_res``."""
    if flux <= 0 or B <= 0:
        raise ConfigurationError("flux and B must be positive")
    L = math.sqrt(2.0 * math.pi * flux / B)
    n = int(math.ceil(L / math.sqrt(flux_res / B) - 1e-12))
    return L, n, L / n


@dataclass(frozen=True, eq=False)
class MagneticOperator:
    """Sparse Hermitian matrix of ``(D - BA)^2`` on the sites of a grid domain.

    Sites are ordered row-major in the node index ``(i, j)`` (``i`` fastest),
    so the matrix is block tridiagonal over grid rows, plus a corner block
    for the periodic wrap in ``y``.
    """

    matrix: sp.csr_matrix
    B: float
    bc: BoundaryCondition
    domain: GridDomain
    site_i: np.ndarray
    site_j: np.ndarray
    row_starts: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def h(self) -> float:
        return self.domain.h

    @property
    def periodic(self) -> bool:
        return self.bc is BoundaryCondition.PERIODIC

    @property
    def x(self) -> np.ndarray:
        return self.domain.origin[0] + self.site_i * self.domain.h

    @property
    def y(self) -> np.ndarray:
        return self.domain.origin[1] + self.site_j * self.domain.h

    @property
    def blocks(self) -> list[tuple[int, int]]:
        """Index ranges of grid rows, the block structure used for inertia counts."""
        s = self.row_starts
        return [(int(a), int(b)) for a, b in zip(s[:-1], s[1:])]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def with_matrix(self, matrix) -> "MagneticOperator":
        return MagneticOperator(sp.csr_matrix(matrix), self.B, self.bc, self.domain,
                                self.site_i, self.site_j, self.row_starts)


def _node_sets(domain: GridDomain, bc: BoundaryCondition):
    P = np.pad(domain.mask, 1)
    # corner cells of node (i, j): P[i, j], P[i+1, j], P[i, j+1], P[i+1, j+1]
    c00, c10, c01, c11 = P[:-1, :-1], P[1:, :-1], P[:-1, 1:], P[1:, 1:]
    if bc is BoundaryCondition.DIRICHLET:
        nodes = c00 & c10 & c01 & c11
        hor = nodes[:-1, :] & nodes[1:, :]
        ver = nodes[:, :-1] & nodes[:, 1:]
    else:
        nodes = c00 | c10 | c01 | c11
        # horizontal edge (i,j)-(i+1,j) bounds cells (i,j) and (i,j-1)
        hor = P[1:-1, 1:] | P[1:-1, :-1]
        # vertical edge (i,j)-(i,j+1) bounds cells (i,j) and (i-1,j)
        ver = P[1:, 1:-1] | P[:-1, 1:-1]
    return nodes, hor, ver


def _index_map(nodes):
    jj, ii = np.nonzero(nodes.T)
    index = -np.ones(nodes.shape, dtype=np.int64)
    index[ii, jj] = np.arange(ii.size)
    return ii, jj, index


def _row_starts(site_j):
    if site_j.size == 0:
        return np.array([0])
    change = np.nonzero(np.diff(site_j))[0] + 1
    return np.concatenate([[0], change, [site_j.size]])


def assemble(domain: GridDomain, B: float, bc: BoundaryCondition | str = BoundaryCondition.DIRICHLET
             ) -> MagneticOperator:
    """Five-point Peierls discretization of ``(D - BA)^2`` on ``domain``.

    Parameters
    ----------
    domain : GridDomain
        Rasterized domain; must be a full ``n x n`` square for periodic BC.
    B : float
        Field strength (``B = 0`` gives the real five-point Laplacian).
    bc : BoundaryCondition or str
        ``"dirichlet"``, ``"neumann"`` or ``"periodic"``.

    Raises
    ------
    ConfigurationError
        Periodic BC on a non-square domain, or violating flux quantization.
    DegenerateDomainError
        No sites for the requested boundary condition.
    """
    bc = BoundaryCondition(bc)
    h = domain.h
    x0, y0 = domain.origin
    if B < 0 or not np.isfinite(B):
        raise ConfigurationError(f"B must be finite and >= 0, got {B!r}")

    if bc is BoundaryCondition.PERIODIC:
        if not domain.is_full_square:
            raise ConfigurationError("magnetic-periodic BC needs a full square domain")
        n = domain.nx
        if n < 3:
            raise ConfigurationError("magnetic-periodic BC needs at least 3 cells per side")
        L = n * h
        rep = flux_check(L, B, h)
        if not rep.admissible:
            raise ConfigurationError(
                f"flux L^2 B/2pi = {rep.continuum_flux!r} is not an integer; "
                f"nearest admissible B = {rep.nearest_admissible_B!r}")
        if abs(x0 + 0.5 * L) > 1e-12 * L or abs(y0 + 0.5 * L) > 1e-12 * L:
            raise ConfigurationError("magnetic translations assume the square (-L/2, L/2)^2")
        nodes = np.ones((n, n), dtype=bool)
        ii, jj, index = _index_map(nodes)
        xs, ys = x0 + ii * h, y0 + jj * h
        p = np.arange(ii.size)
        qx = index[(ii + 1) % n, jj]
        qy = index[ii, (jj + 1) % n]
        thx = B * ys * h / 2.0 + np.where(ii == n - 1, B * L * ys / 2.0, 0.0)
        thy = -B * xs * h / 2.0 + np.where(jj == n - 1, -B * L * xs / 2.0, 0.0)
        src = np.concatenate([p, p])
        dst = np.concatenate([qx, qy])
        theta = np.concatenate([thx, thy])
        diag = np.full(ii.size, 4.0 / h**2)
    else:
        nodes, hor, ver = _node_sets(domain, bc)
        ii, jj, index = _index_map(nodes)
        if ii.size == 0:
            raise DegenerateDomainError(f"domain has no {bc.value} sites")
        hi, hj = np.nonzero(hor)
        vi, vj = np.nonzero(ver)
        src = np.concatenate([index[hi, hj], index[vi, vj]])
        dst = np.concatenate([index[hi + 1, hj], index[vi, vj + 1]])
        theta = np.concatenate([B * (y0 + hj * h) * h / 2.0, -B * (x0 + vi * h) * h / 2.0])
        if bc is BoundaryCondition.DIRICHLET:
            diag = np.full(ii.size, 4.0 / h**2)
        else:
            degree = np.bincount(np.concatenate([src, dst]), minlength=ii.size)
            diag = degree / h**2

    if B == 0:
        hop = np.full(src.size, -1.0 / h**2)
        dtype = float
    else:
        hop = -np.exp(1j * theta) / h**2
        dtype = complex
    nsite = ii.size
    rows = np.concatenate([np.arange(nsite), src, dst])
    cols = np.concatenate([np.arange(nsite), dst, src])
    vals = np.concatenate([diag.astype(dtype), hop, np.conj(hop)])
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(nsite, nsite), dtype=dtype)
    mat.sum_duplicates()
    mat.sort_indices()
    return MagneticOperator(mat, float(B), bc, domain, ii, jj, _row_starts(jj))


def gauge_shift(op: MagneticOperator, chi: np.ndarray | Callable) -> MagneticOperator:
    """Conjugate ``op`` by the diagonal unitary ``exp(i chi)``.

    ``chi`` is either an array with one value per site or a function of the
    site coordinates ``(x, y)``.  Periodic operators are refused because the
    magnetic translations fix the admissible gauge class.
    """
    if op.periodic:
        raise ConfigurationError("gauge_shift is unsupported for magnetic-periodic operators")
    chi = chi(op.x, op.y) if callable(chi) else np.asarray(chi, dtype=float)
    if chi.shape != (op.n,):
        raise ConfigurationError(f"chi must have one value per site ({op.n}), got shape {chi.shape}")
    m = op.matrix.tocoo()
    delta = chi[m.row] - chi[m.col]
    vals = m.data.astype(complex) * np.exp(1j * delta)
    new = sp.csr_matrix((vals, (m.row, m.col)), shape=m.shape)
    new.sort_indices()
    return op.with_matrix(new)


def plaquette_phases(op: MagneticOperator) -> np.ndarray:
    """Unit-modulus product of hopping amplitudes around each elementary plaquette.

    The loop runs counter-clockwise ``(i,j) -> (i+1,j) -> (i+1,j+1) -> (i,j+1)``.
    Only plaquettes whose four sides are all present are returned.
    """
    n_i, n_j = op.domain.nx + 1, op.domain.ny + 1
    index = -np.ones((n_i, n_j), dtype=np.int64)
    index[op.site_i, op.site_j] = np.arange(op.n)
    M = op.matrix.tocsr()
    if op.periodic:
        n = op.domain.nx
        i, j = op.site_i, op.site_j
        corners = [index[i, j], index[(i + 1) % n, j], index[(i + 1) % n, (j + 1) % n], index[i, (j + 1) % n]]
    else:
        i, j = op.site_i, op.site_j
        ok = (i + 1 < n_i) & (j + 1 < n_j)
        i, j = i[ok], j[ok]
        corners = [index[i, j], index[i + 1, j], index[i + 1, j + 1], index[i, j + 1]]
        keep = np.all(np.stack(corners) >= 0, axis=0)
        corners = [c[keep] for c in corners]
    prod = np.ones(corners[0].size, dtype=complex)
    present = np.ones(corners[0].size, dtype=bool)
    for a, b in zip(corners, corners[1:] + corners[:1]):
        v = np.asarray(M[a, b]).ravel()
        present &= v != 0
        prod *= v
    prod = prod[present]
    return prod / np.abs(prod)


def matched_square_operators(L: float, B: float, h: float) -> dict[str, MagneticOperator]:
    """Neumann, periodic and Dirichlet operators on one ``n x n`` torus grid.

    The Dirichlet operator is the principal submatrix of the periodic one on
    nodes off the seam ``x = -L/2`` / ``y = -L/2`` (identical to assembling
    ``Square(L)``), and the Neumann operator is the periodic one with all wrap
    edges removed.  Hence ``N <= P`` as forms and ``D`` is a compression of
    ``P``, giving ``N^D <= N^P <= N^N`` for every ``lambda``.
    """
    torus = rasterize_domain(Square(L), h)
    n = torus.nx
    neumann_dom = GridDomain(torus.origin, h, np.ones((n - 1, n - 1), dtype=bool), tiling=True,
                             label=f"square:{(n - 1) * h!r}")
    return {
        "neumann": assemble(neumann_dom, B, BoundaryCondition.NEUMANN),
        "periodic": assemble(torus, B, BoundaryCondition.PERIODIC),
        "dirichlet": assemble(torus, B, BoundaryCondition.DIRICHLET),
    }


def export_coo(op: MagneticOperator, path: str | os.PathLike) -> None:
    """Write ``row col re im`` lines (0-based, row-major sorted)."""
    m = op.matrix.tocsr()
    m.sort_indices()
    coo = m.tocoo()
    data = coo.data.astype(complex)
    with open(path, "w", encoding="ascii") as fh:
        for r, c, v in zip(coo.row, coo.col, data):
            fh.write(f"{r} {c} {float(v.real)!r} {float(v.imag)!r}\n")
