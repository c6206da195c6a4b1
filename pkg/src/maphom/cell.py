"""Periodic corrector problems on the unit cell, scaled by a diagonal
field, and the equivalent classical problem on a rescaled rectangle.

The scaled corrector pair (z_1, z_2) solves, for j = 1, 2 and all periodic
zero-mean test functions v,

    int_Y sum_{i,k} zeta_i zeta_k a_ik dz_j/dy_k dv/dy_i dy
        = - int_Y sum_i zeta_i a_ij dv/dy_i dy,

with zeta a positive pair. zeta = (1, 1) recovers the classical cell
problem. The same solution can be obtained by solving the classical
problem for A(y1, zeta_2 y2) on the rectangle (0,1) x (0, 1/zeta_2) and
pulling back, which :func:`solve_rescaled_corrector` implements; the two
routes agree up to discretization error.
"""

from __future__ import annotations

import dataclasses
from typing import Sequence

import numpy as np

from .coefficients import PeriodicCoefficient
from .numerics import (
    DEFAULT_RULE,
    QuadratureRule,
    SparseSystem,
    UniformCellGrid,
    assemble_diffusion,
    assemble_gradient_load,
    cg_solve,
    interpolate_nodal,
)

__all__ = [
    "CorrectorField",
    "RescaledCell",
    "assemble_corrector_system",
    "solve_corrector",
    "solve_rescaled_corrector",
    "write_corrector_csv",
]


@dataclasses.dataclass
class CorrectorField:
    """Corrector pair on a periodic grid with solver diagnostics.

    ``z1`` and ``z2`` are nodal values of the two zero-mean periodic
    correctors; ``zeta`` is the diagonal scaling they were solved with
    (equivalently the macroscopic point, stored in ``x`` when known).
    """

    z1: np.ndarray
    z2: np.ndarray
    zeta: tuple[float, float]
    grid: UniformCellGrid
    iterations: tuple[int, int]
    residual: tuple[float, float]
    x: tuple[float, float] | None = None

    def component(self, j: int) -> np.ndarray:
        if j not in (1, 2):
            raise ValueError("component index must be 1 or 2")
        return self.z1 if j == 1 else self.z2

    def mean(self, j: int) -> float:
        # uniform periodic grids: the nodal mean is the cell integral
        return float(self.component(j).mean())

    def sup_norm(self) -> float:
        return float(max(np.abs(self.z1).max(), np.abs(self.z2).max()))


def _coefficient_at_quad(coefficient, grid: UniformCellGrid, rule: QuadratureRule) -> np.ndarray:
    pts = grid.quad_points(rule).reshape(-1, 2)
    A = coefficient.evaluate(pts) if hasattr(coefficient, "evaluate") else coefficient(pts)
    A = np.asarray(A, dtype=float).reshape(grid.n_elements, len(rule.weights), 2, 2)
    if not np.all(np.isfinite(A)):
        raise ValueError("coefficient evaluated to a non-finite value")
    return A


def assemble_corrector_system(
    coefficient: PeriodicCoefficient,
    zeta: tuple[float, float],
    grid: UniformCellGrid,
    rule: QuadratureRule = DEFAULT_RULE,
) -> SparseSystem:
    """Assemble the scaled cell problem: stiffness plus both loads.

    The returned system is flagged singular (constants span the kernel) and
    carries two right-hand sides, one per coordinate direction. The load
    for direction j is assembled as -int zeta_i a_ij dv/dy_i without
    differentiating the coefficient.
    """
    z1, z2 = float(zeta[0]), float(zeta[1])
    if not (z1 > 0 and z2 > 0):
        raise ValueError("scaling pair must be positive")
    if not grid.periodic:
        raise ValueError("corrector problems need a periodic grid")

    A = _coefficient_at_quad(coefficient, grid, rule)
    zvec = np.array([z1, z2])
    D = A * zvec[None, None, :, None] * zvec[None, None, None, :]
    symmetric = bool(getattr(coefficient, "symmetric", False))
    system = assemble_diffusion(grid, D, rule, symmetric=symmetric, singular=True)
    for j in range(2):
        g = zvec[None, None, :] * A[:, :, :, j]
        system.add_rhs(assemble_gradient_load(grid, g, rule))
    return system


def solve_corrector(
    coefficient: PeriodicCoefficient,
    zeta: tuple[float, float],
    grid: UniformCellGrid | int = 128,
    tol: float = 1e-10,
    rule: QuadratureRule = DEFAULT_RULE,
    x0_pair: Sequence[np.ndarray] | None = None,
    x: tuple[float, float] | None = None,
) -> CorrectorField:
    """Solve the scaled corrector pair on the periodic unit cell.

    Args:
        grid: a periodic grid or an element count per side.
        x0_pair: optional initial guesses (warm starts) for the two solves.
        x: macroscopic point to record on the field, if any.

    The solution components are zero-mean to solver accuracy; the exact
    nodal mean is subtracted once more before returning.
    """
    if isinstance(grid, int):
        grid = UniformCellGrid(grid, periodic=True)
    system = assemble_corrector_system(coefficient, zeta, grid, rule)
    sols = []
    iters = []
    resids = []
    for j in range(2):
        guess = None if x0_pair is None else x0_pair[j]
        res = cg_solve(system, system.rhs[j], tol=tol, x0=guess)
        z = res.x - res.x.mean()
        sols.append(z)
        iters.append(res.iterations)
        resids.append(res.residual)
    return CorrectorField(
        z1=sols[0], z2=sols[1], zeta=(float(zeta[0]), float(zeta[1])),
        grid=grid, iterations=(iters[0], iters[1]),
        residual=(resids[0], resids[1]), x=x,
    )


@dataclasses.dataclass
class RescaledCell:
    """Classical corrector data on the rectangle (0,1) x (0, 1/zeta_2).

    The coefficient seen by this problem is A(y1, zeta_2 y2); pulling the
    solution back through y2 -> y2 / zeta_2 reproduces the scaled corrector
    on the unit cell.
    """

    zeta2: float
    grid: UniformCellGrid
    z1: np.ndarray
    z2: np.ndarray
    coefficient_eval: object
    symmetric: bool
    iterations: tuple[int, int]
    residual: tuple[float, float]

    @property
    def lengths(self) -> tuple[float, float]:
        return self.grid.lengths

    def sample_on_unit_grid(self, unit_grid: UniformCellGrid) -> tuple[np.ndarray, np.ndarray]:
        """Pull both correctors back to nodal values on a unit-cell grid."""
        pts = unit_grid.node_coords().copy()
        pts[:, 1] /= self.zeta2
        return (
            interpolate_nodal(self.grid, self.z1, pts),
            interpolate_nodal(self.grid, self.z2, pts),
        )


def solve_rescaled_corrector(
    coefficient: PeriodicCoefficient,
    x: tuple[float, float],
    resolution: tuple[int, int] | None = None,
    tol: float = 1e-10,
    rule: QuadratureRule = DEFAULT_RULE,
) -> RescaledCell:
    """Solve the classical corrector problem on the rescaled rectangle.

    For a macroscopic point with x2 > 0 the rectangle is
    (0,1) x (0, 1/(2 x2)) and the coefficient is A(y1, 2 x2 y2), periodic
    across both pairs of edges. The default resolution keeps elements
    square: 128 columns and round(128 / (2 x2)) rows.
    """
    x = (float(x[0]), float(x[1]))
    if not x[1] > 0:
        raise ValueError("rescaled cell requires x2 > 0")
    zeta2 = 2.0 * x[1]
    length2 = 1.0 / zeta2
    if resolution is None:
        resolution = (128, max(4, round(128 * length2)))
    n1, n2 = int(resolution[0]), int(resolution[1])
    if n1 < 1 or n2 < 1:
        raise ValueError("resolution must be positive in both directions")
    aspect = (n2 / n1) / length2
    if not 0.25 <= aspect <= 4.0:
        raise ValueError(
            "resolution aspect ratio is far from the rectangle's; "
            f"got {n1}x{n2} for lengths (1, {length2:.4g})"
        )

    grid = UniformCellGrid(n1, periodic=True, ny=n2, lengths=(1.0, length2))

    def stretched(pts):
        q = np.array(pts, dtype=float, copy=True)
        q[:, 1] *= zeta2
        return coefficient.evaluate(q)

    system_coeff = PeriodicCoefficient(
        stretched,
        bound=coefficient.bound,
        coercivity=coefficient.coercivity,
        symmetric=coefficient.symmetric,
        description=f"{coefficient.description} on rescaled cell",
    )
    system = assemble_corrector_system(system_coeff, (1.0, 1.0), grid, rule)
    sols, iters, resids = [], [], []
    for j in range(2):
        res = cg_solve(system, system.rhs[j], tol=tol)
        sols.append(res.x - res.x.mean())
        iters.append(res.iterations)
        resids.append(res.residual)
    return RescaledCell(
        zeta2=zeta2, grid=grid, z1=sols[0], z2=sols[1],
        coefficient_eval=stretched, symmetric=coefficient.symmetric,
        iterations=(iters[0], iters[1]), residual=(resids[0], resids[1]),
    )


def write_corrector_csv(field: CorrectorField, stream) -> None:
    """Dump nodal corrector values as y1,y2,z1,z2 rows."""
    stream.write("y1,y2,z1,z2\n")
    coords = field.grid.node_coords()
    for (y1, y2), a, b in zip(coords, field.z1, field.z2):
        stream.write(f"{y1:.17g},{y2:.17g},{a:.17g},{b:.17g}\n")
