"""Shared numerical substrate: uniform quadrilateral grids, tensor Gauss
quadrature, triplet-assembled sparse systems and a projected conjugate
gradient solver.

Every other module sits on the bilinear (Q1) element tables defined here,
both for periodic cell problems and for Dirichlet problems on macroscopic
rectangles.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "CGResult",
    "QuadratureRule",
    "Rectangle",
    "SolverError",
    "SparseSystem",
    "UniformCellGrid",
    "cg_solve",
    "integrate_cell",
    "interpolate_nodal",
]


class SolverError(RuntimeError):
    """An iterative solve failed to reach the requested tolerance."""

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


@dataclasses.dataclass(frozen=True)
class Rectangle:
    """Axis-aligned rectangle (a1, b1) x (a2, b2)."""

    a1: float
    b1: float
    a2: float
    b2: float

    def __post_init__(self):
        if not (self.b1 > self.a1 and self.b2 > self.a2):
            raise ValueError("rectangle sides must have positive length")

    @property
    def width(self) -> float:
        return self.b1 - self.a1

    @property
    def height(self) -> float:
        return self.b2 - self.a2

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, x1: float, x2: float) -> bool:
        return self.a1 <= x1 <= self.b1 and self.a2 <= x2 <= self.b2


@dataclasses.dataclass(frozen=True)
class QuadratureRule:
    """Tensor-product rule on the reference square [0,1]^2.

    Attributes:
        points: (nq, 2) quadrature points.
        weights: (nq,) weights summing to 1, the reference measure.
        order: largest per-axis polynomial degree integrated exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    order: int

    @staticmethod
    def gauss(npts_per_axis: int = 2) -> "QuadratureRule":
        """Gauss-Legendre tensor rule, exact per axis up to degree 2*npts - 1."""
        if npts_per_axis < 1:
            raise ValueError("need at least one point per axis")
        t, w = np.polynomial.legendre.leggauss(npts_per_axis)
        t = 0.5 * (t + 1.0)  # map [-1,1] -> [0,1]
        w = 0.5 * w
        pts = np.array([(a, b) for b in t for a in t])
        wts = np.array([wa * wb for wb in w for wa in w])
        return QuadratureRule(points=pts, weights=wts, order=2 * npts_per_axis - 1)


DEFAULT_RULE = QuadratureRule.gauss(2)


class UniformCellGrid:
    """Uniform quadrilateral grid on an axis-aligned rectangle.

    The default configuration is the periodic unit cell: ``n_per_side``
    elements per direction on [0,1]^2 with wrap-around node identification,
    hence exactly n_per_side^2 distinct nodes and spacing 1/n_per_side.
    Passing ``periodic=False`` keeps all (nx+1)*(ny+1) nodes; combined with
    ``origin`` and ``lengths`` that covers Dirichlet meshes on macroscopic
    rectangles and the rescaled cell rectangles.
    """

    def __init__(
        self,
        n_per_side: int,
        periodic: bool = True,
        *,
        ny: int | None = None,
        lengths: tuple[float, float] = (1.0, 1.0),
        origin: tuple[float, float] = (0.0, 0.0),
    ):
        nx = int(n_per_side)
        ny = nx if ny is None else int(ny)
        if nx < 1 or ny < 1:
            raise ValueError("grid needs at least one element per direction")
        if lengths[0] <= 0 or lengths[1] <= 0:
            raise ValueError("grid side lengths must be positive")
        self.nx = nx
        self.ny = ny
        self.periodic = bool(periodic)
        self.lengths = (float(lengths[0]), float(lengths[1]))
        self.origin = (float(origin[0]), float(origin[1]))
        self.hx = self.lengths[0] / nx
        self.hy = self.lengths[1] / ny
        self._conn: np.ndarray | None = None

    @property
    def n_per_side(self) -> int:
        if self.nx != self.ny:
            raise ValueError("grid is not square")
        return self.nx

    @property
    def spacing(self) -> tuple[float, float]:
        return (self.hx, self.hy)

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def n_nodes(self) -> int:
        if self.periodic:
            return self.nx * self.ny
        return (self.nx + 1) * (self.ny + 1)

    @property
    def area(self) -> float:
        return self.lengths[0] * self.lengths[1]

    def node_index(self, i, j):
        """Global node index for integer grid coordinates (vectorized)."""
        if self.periodic:
            return (np.asarray(j) % self.ny) * self.nx + (np.asarray(i) % self.nx)
        return np.asarray(j) * (self.nx + 1) + np.asarray(i)

    def node_coords(self) -> np.ndarray:
        """(n_nodes, 2) coordinates, row-major in (j, i)."""
        mx = self.nx if self.periodic else self.nx + 1
        my = self.ny if self.periodic else self.ny + 1
        ii, jj = np.meshgrid(np.arange(mx), np.arange(my))
        x = self.origin[0] + ii.ravel() * self.hx
        y = self.origin[1] + jj.ravel() * self.hy
        return np.column_stack([x, y])

    def connectivity(self) -> np.ndarray:
        """(n_elements, 4) node indices per element.

        Local corner order: (i,j), (i+1,j), (i+1,j+1), (i,j+1), matching the
        reference-square shape function order.
        """
        if self._conn is None:
            ii, jj = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
            ii = ii.ravel()
            jj = jj.ravel()
            self._conn = np.column_stack([
                self.node_index(ii, jj),
                self.node_index(ii + 1, jj),
                self.node_index(ii + 1, jj + 1),
                self.node_index(ii, jj + 1),
            ]).astype(np.int64)
        return self._conn

    def element_origins(self) -> np.ndarray:
        ii, jj = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        x = self.origin[0] + ii.ravel() * self.hx
        y = self.origin[1] + jj.ravel() * self.hy
        return np.column_stack([x, y])

    def quad_points(self, rule: QuadratureRule = DEFAULT_RULE) -> np.ndarray:
        """(n_elements, nq, 2) physical quadrature point coordinates."""
        offs = rule.points * np.array([self.hx, self.hy])
        return self.element_origins()[:, None, :] + offs[None, :, :]

    def boundary_mask(self) -> np.ndarray:
        """Boolean mask of boundary nodes; all-False for periodic grids."""
        if self.periodic:
            return np.zeros(self.n_nodes, dtype=bool)
        mask = np.zeros((self.ny + 1, self.nx + 1), dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask.ravel()

    def same_layout(self, other: "UniformCellGrid") -> bool:
        return (
            self.nx == other.nx
            and self.ny == other.ny
            and self.periodic == other.periodic
            and self.lengths == other.lengths
            and self.origin == other.origin
        )


def q1_tables(rule: QuadratureRule) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear shape values and reference gradients at the rule's points.

    Returns (phi, dphi) with shapes (nq, 4) and (nq, 4, 2). Corner order
    matches UniformCellGrid.connectivity.
    """
    xi = rule.points[:, 0]
    eta = rule.points[:, 1]
    phi = np.column_stack([
        (1 - xi) * (1 - eta),
        xi * (1 - eta),
        xi * eta,
        (1 - xi) * eta,
    ])
    dphi = np.empty((len(xi), 4, 2))
    dphi[:, 0, 0] = -(1 - eta)
    dphi[:, 1, 0] = 1 - eta
    dphi[:, 2, 0] = eta
    dphi[:, 3, 0] = -eta
    dphi[:, 0, 1] = -(1 - xi)
    dphi[:, 1, 1] = -xi
    dphi[:, 2, 1] = xi
    dphi[:, 3, 1] = 1 - xi
    return phi, dphi


def physical_gradients(grid: UniformCellGrid, rule: QuadratureRule) -> np.ndarray:
    """(nq, 4, 2) shape gradients in physical coordinates (uniform grid)."""
    _, dphi = q1_tables(rule)
    return dphi / np.array([grid.hx, grid.hy])


class SparseSystem:
    """Triplet-assembled sparse linear system with attached right-hand sides.

    Entries accumulate as (row, col, value) triplets; finalization converts
    them to compressed sparse row form, summing duplicates, sorting indices
    and dropping explicit zeros. A system flagged ``singular`` has the
    constant vector in its kernel (periodic diffusion operators) and is
    solved on the zero-mean subspace.
    """

    def __init__(self, dimension: int, symmetric: bool = False, singular: bool = False):
        if dimension < 1:
            raise ValueError("system dimension must be positive")
        self.dimension = int(dimension)
        self.symmetric = bool(symmetric)
        self.singular = bool(singular)
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._matrix: sp.csr_matrix | None = None
        self.rhs: list[np.ndarray] = []

    @classmethod
    def from_matrix(cls, matrix, symmetric: bool = False, singular: bool = False) -> "SparseSystem":
        """Wrap an existing sparse matrix (already canonical) as a system."""
        m = sp.csr_matrix(matrix)
        if m.shape[0] != m.shape[1]:
            raise ValueError("system matrix must be square")
        system = cls(m.shape[0], symmetric=symmetric, singular=singular)
        m.sum_duplicates()
        m.sort_indices()
        m.eliminate_zeros()
        system._matrix = m
        return system

    def add_entries(self, rows, cols, values) -> None:
        if self._matrix is not None:
            raise ValueError("system already finalized")
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if not (rows.size == cols.size == values.size):
            raise ValueError("triplet arrays must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= self.dimension):
            raise ValueError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= self.dimension):
            raise ValueError("column index out of range")
        self._rows.append(rows)
        self._cols.append(cols)
        self._vals.append(values)

    def add_rhs(self, b) -> int:
        b = np.asarray(b, dtype=float).ravel()
        if b.size != self.dimension:
            raise ValueError("right-hand side length does not match system dimension")
        self.rhs.append(b)
        return len(self.rhs) - 1

    def finalize(self) -> None:
        if self._matrix is not None:
            return
        rows = np.concatenate(self._rows) if self._rows else np.empty(0, dtype=np.int64)
        cols = np.concatenate(self._cols) if self._cols else np.empty(0, dtype=np.int64)
        vals = np.concatenate(self._vals) if self._vals else np.empty(0)
        m = sp.coo_matrix((vals, (rows, cols)), shape=(self.dimension, self.dimension))
        m = m.tocsr()
        m.sum_duplicates()
        m.sort_indices()
        m.eliminate_zeros()
        self._matrix = m
        self._rows, self._cols, self._vals = [], [], []

    @property
    def matrix(self) -> sp.csr_matrix:
        self.finalize()
        return self._matrix

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.dimension:
            raise ValueError("vector length does not match system dimension")
        return self.matrix @ x

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()


@dataclasses.dataclass
class CGResult:
    """Conjugate gradient outcome: solution plus convergence diagnostics."""

    x: np.ndarray
    iterations: int
    residual: float
    residual_history: np.ndarray


def cg_solve(
    system: SparseSystem,
    rhs: np.ndarray,
    tol: float = 1e-10,
    max_iter: int | None = None,
    x0: np.ndarray | None = None,
) -> CGResult:
    """Jacobi-preconditioned conjugate gradients.

    Solves ``system`` for ``rhs`` down to a relative residual of ``tol``
    (measured in the Euclidean norm against the true residual). Systems
    flagged singular are solved on the zero-mean subspace: the right-hand
    side and every iterate have their mean subtracted, which selects the
    zero-mean representative of the solution family.

    Raises:
        SolverError: no convergence within ``max_iter`` iterations
            (default 10 * dimension); the exception carries the final
            relative residual.
        ValueError: dimension mismatch between system and vectors.
    """
    A = system.matrix
    n = system.dimension
    b = np.asarray(rhs, dtype=float).ravel().copy()
    if b.size != n:
        raise ValueError("right-hand side length does not match system dimension")
    if max_iter is None:
        max_iter = 10 * n

    if system.singular:
        b -= b.mean()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0, np.zeros(1))

    diag = A.diagonal()
    inv_diag = np.where(diag > 0.0, 1.0 / np.where(diag > 0.0, diag, 1.0), 1.0)

    if x0 is None:
        x = np.zeros(n)
        r = b.copy()
    else:
        x = np.asarray(x0, dtype=float).ravel().copy()
        if x.size != n:
            raise ValueError("initial guess length does not match system dimension")
        if system.singular:
            x -= x.mean()
        r = b - A @ x
    if system.singular:
        r -= r.mean()

    history = [float(np.linalg.norm(r))]
    if history[0] <= tol * bnorm:
        return CGResult(x, 0, history[0] / bnorm, np.array(history))

    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    iterations = 0

    while iterations < max_iter:
        iterations += 1
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise SolverError(
                "conjugate gradient breakdown: operator is not positive definite "
                "on the search space",
                iterations,
                history[-1] / bnorm,
            )
        alpha = rz / pAp
        x += alpha * p
        if system.singular:
            x -= x.mean()
        r -= alpha * Ap
        res = float(np.linalg.norm(r))
        history.append(res)
        if res <= tol * bnorm:
            # guard against recurrence drift before declaring victory
            r_true = b - A @ x
            if system.singular:
                r_true -= r_true.mean()
            res_true = float(np.linalg.norm(r_true))
            if res_true <= tol * bnorm:
                return CGResult(x, iterations, res_true / bnorm, np.array(history))
            r = r_true
            res = res_true
            history[-1] = res
        z = inv_diag * r
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p

    raise SolverError(
        f"conjugate gradient did not converge in {max_iter} iterations "
        f"(relative residual {history[-1] / bnorm:.3e})",
        iterations,
        history[-1] / bnorm,
    )


def _evaluate_field(field, points: np.ndarray) -> np.ndarray:
    """Evaluate a scalar field callable at (m, 2) points, tolerating
    non-vectorized callables."""
    try:
        vals = np.asarray(field(points), dtype=float)
        if vals.shape == (points.shape[0],):
            return vals
    except (TypeError, ValueError, IndexError):
        pass
    return np.array([float(field(p)) for p in points])


def integrate_cell(
    field,
    grid: UniformCellGrid,
    rule: QuadratureRule = DEFAULT_RULE,
) -> float:
    """Integrate a scalar field over the grid's rectangle.

    ``field`` is either a callable taking an (m, 2) array of points (a
    pointwise fallback is attempted for scalar-only callables) or an array
    of nodal values, in which case the bilinear interpolant is integrated.
    """
    if callable(field):
        pts = grid.quad_points(rule).reshape(-1, 2)
        vals = _evaluate_field(field, pts).reshape(grid.n_elements, -1)
    else:
        vals = np.asarray(field, dtype=float).ravel()
        if vals.size != grid.n_nodes:
            raise ValueError("nodal array length does not match grid")
        phi, _ = q1_tables(rule)
        conn = grid.connectivity()
        vals = np.einsum("qa,ea->eq", phi, vals[conn])
    cell_area = grid.hx * grid.hy
    return float(np.einsum("eq,q->", vals, rule.weights) * cell_area)


def interpolate_nodal(grid: UniformCellGrid, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate the bilinear interpolant of nodal ``values`` at ``points``.

    Periodic grids wrap around; otherwise points are clamped to the
    rectangle.
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size != grid.n_nodes:
        raise ValueError("nodal array length does not match grid")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    sx = (pts[:, 0] - grid.origin[0]) / grid.hx
    sy = (pts[:, 1] - grid.origin[1]) / grid.hy
    if grid.periodic:
        sx = np.mod(sx, grid.nx)
        sy = np.mod(sy, grid.ny)
    else:
        sx = np.clip(sx, 0.0, grid.nx)
        sy = np.clip(sy, 0.0, grid.ny)
    i0 = np.minimum(np.floor(sx).astype(np.int64), grid.nx - 1)
    j0 = np.minimum(np.floor(sy).astype(np.int64), grid.ny - 1)
    fx = sx - i0
    fy = sy - j0
    n00 = grid.node_index(i0, j0)
    n10 = grid.node_index(i0 + 1, j0)
    n11 = grid.node_index(i0 + 1, j0 + 1)
    n01 = grid.node_index(i0, j0 + 1)
    out = (
        values[n00] * (1 - fx) * (1 - fy)
        + values[n10] * fx * (1 - fy)
        + values[n11] * fx * fy
        + values[n01] * (1 - fx) * fy
    )
    return out if out.size > 1 else out.reshape(-1)


def assemble_diffusion(
    grid: UniformCellGrid,
    coeff_at_quad: np.ndarray,
    rule: QuadratureRule = DEFAULT_RULE,
    symmetric: bool = False,
    singular: bool = False,
) -> SparseSystem:
    """Assemble the stiffness matrix for -div(D grad u) with Q1 elements.

    Args:
        coeff_at_quad: (n_elements, nq, 2, 2) coefficient values at the
            grid's quadrature points; row index contracts with the test
            gradient, column index with the trial gradient.
    """
    n_el = grid.n_elements
    nq = len(rule.weights)
    D = np.asarray(coeff_at_quad, dtype=float)
    if D.shape != (n_el, nq, 2, 2):
        raise ValueError("coefficient array has wrong shape")
    if not np.all(np.isfinite(D)):
        raise ValueError("coefficient evaluated to a non-finite value")
    G = physical_gradients(grid, rule)
    scale = grid.hx * grid.hy
    Ke = np.einsum("qai,eqik,qbk,q->eab", G, D, G, rule.weights, optimize=True) * scale
    conn = grid.connectivity()
    rows = np.broadcast_to(conn[:, :, None], (n_el, 4, 4))
    cols = np.broadcast_to(conn[:, None, :], (n_el, 4, 4))
    system = SparseSystem(grid.n_nodes, symmetric=symmetric, singular=singular)
    system.add_entries(rows, cols, Ke)
    return system


def assemble_gradient_load(
    grid: UniformCellGrid,
    vec_at_quad: np.ndarray,
    rule: QuadratureRule = DEFAULT_RULE,
) -> np.ndarray:
    """Load vector f[a] = -int g . grad(phi_a) for a vector field g given
    at quadrature points, shape (n_elements, nq, 2)."""
    g = np.asarray(vec_at_quad, dtype=float)
    if g.shape != (grid.n_elements, len(rule.weights), 2):
        raise ValueError("vector field array has wrong shape")
    G = physical_gradients(grid, rule)
    scale = grid.hx * grid.hy
    fe = -np.einsum("eqi,qai,q->ea", g, G, rule.weights, optimize=True) * scale
    f = np.zeros(grid.n_nodes)
    np.add.at(f, grid.connectivity().ravel(), fe.ravel())
    return f


def assemble_source_load(
    grid: UniformCellGrid,
    src_at_quad: np.ndarray,
    rule: QuadratureRule = DEFAULT_RULE,
) -> np.ndarray:
    """Load vector f[a] = int s phi_a for a scalar source given at
    quadrature points, shape (n_elements, nq)."""
    s = np.asarray(src_at_quad, dtype=float)
    if s.shape != (grid.n_elements, len(rule.weights)):
        raise ValueError("source array has wrong shape")
    if not np.all(np.isfinite(s)):
        raise ValueError("source evaluated to a non-finite value")
    phi, _ = q1_tables(rule)
    scale = grid.hx * grid.hy
    fe = np.einsum("eq,qa,q->ea", s, phi, rule.weights, optimize=True) * scale
    f = np.zeros(grid.n_nodes)
    np.add.at(f, grid.connectivity().ravel(), fe.ravel())
    return f


def nodal_gradient_at_quad(
    grid: UniformCellGrid,
    values: np.ndarray,
    rule: QuadratureRule = DEFAULT_RULE,
) -> np.ndarray:
    """(n_elements, nq, 2) gradient of the bilinear interpolant of nodal
    values at the quadrature points."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size != grid.n_nodes:
        raise ValueError("nodal array length does not match grid")
    G = physical_gradients(grid, rule)
    return np.einsum("qad,ea->eqd", G, values[grid.connectivity()], optimize=True)
