"""Dirichlet problems on a macroscopic rectangle: the oscillatory-
coefficient solve, the effective-tensor solve, error norms and the
h-sweep comparison table.

Solutions are continuous piecewise bilinear with homogeneous Dirichlet
values, stored on the full node set with exact zeros on the boundary.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Sequence

import numpy as np

from .homogenize import HomogenizedTensor
from .numerics import (
    DEFAULT_RULE,
    QuadratureRule,
    Rectangle,
    SparseSystem,
    UniformCellGrid,
    assemble_diffusion,
    assemble_source_load,
    cg_solve,
    interpolate_nodal,
    nodal_gradient_at_quad,
    q1_tables,
)

__all__ = [
    "ConvergenceRow",
    "DomainMesh",
    "SolutionField",
    "convergence_study",
    "flux_moment",
    "l2_error",
    "solve_homogenized",
    "solve_oscillatory",
    "write_convergence_csv",
]


@dataclasses.dataclass
class DomainMesh:
    """Uniform quadrilateral mesh of a first-quadrant rectangle."""

    omega: Rectangle
    n1: int
    n2: int

    def __post_init__(self):
        if not (self.omega.a1 > 0 and self.omega.a2 > 0):
            raise ValueError("domain must lie in the open first quadrant")
        if self.n1 < 2 or self.n2 < 2:
            raise ValueError("mesh needs at least two elements per direction")
        self._grid = UniformCellGrid(
            self.n1, periodic=False, ny=self.n2,
            lengths=(self.omega.width, self.omega.height),
            origin=(self.omega.a1, self.omega.a2),
        )
        self._interior = ~self._grid.boundary_mask()

    @property
    def grid(self) -> UniformCellGrid:
        return self._grid

    @property
    def interior_mask(self) -> np.ndarray:
        return self._interior

    @property
    def n_interior(self) -> int:
        return (self.n1 - 1) * (self.n2 - 1)

    def matches(self, other: "DomainMesh") -> bool:
        return self.omega == other.omega and self.n1 == other.n1 and self.n2 == other.n2


@dataclasses.dataclass
class SolutionField:
    """Nodal solution with provenance and solve diagnostics.

    ``values`` covers every node; boundary entries are exactly zero.
    ``energy`` is the quadratic form int D grad(u).grad(u) and
    ``source_work`` the load functional int f u; the two agree to solver
    accuracy by the Galerkin identity.
    """

    values: np.ndarray
    mesh: DomainMesh
    label: str
    warn_underresolved: bool
    iterations: int
    residual: float
    energy: float
    source_work: float

    def interior_values(self) -> np.ndarray:
        return self.values[self.mesh.interior_mask]


def _coefficient_at_quad(mesh: DomainMesh, coeff_eval, rule: QuadratureRule) -> np.ndarray:
    pts = mesh.grid.quad_points(rule).reshape(-1, 2)
    D = np.asarray(coeff_eval(pts), dtype=float)
    nq = len(rule.weights)
    return D.reshape(mesh.grid.n_elements, nq, 2, 2)


def _source_at_quad(mesh: DomainMesh, f, rule: QuadratureRule) -> np.ndarray:
    pts = mesh.grid.quad_points(rule).reshape(-1, 2)
    vals = np.asarray(f(pts), dtype=float)
    if vals.shape != (pts.shape[0],):
        raise ValueError("source must return one value per point")
    return vals.reshape(mesh.grid.n_elements, len(rule.weights))


def _solve_dirichlet_core(
    mesh: DomainMesh,
    coeff_eval,
    f,
    tol: float,
    rule: QuadratureRule,
    nested: bool,
) -> tuple[np.ndarray, int, float, float, float]:
    """Assemble and solve on interior nodes; returns full nodal values.

    ``nested`` builds the initial guess from a half-resolution solve
    (bilinear prolongation); the conjugate gradient iteration itself is
    unchanged and still converges against the true residual.
    """
    D = _coefficient_at_quad(mesh, coeff_eval, rule)
    system = assemble_diffusion(mesh.grid, D, rule, symmetric=True)
    load = assemble_source_load(mesh.grid, _source_at_quad(mesh, f, rule), rule)

    interior = np.flatnonzero(mesh.interior_mask)
    K = system.matrix[interior][:, interior].tocsr()
    b = load[interior]

    x0 = None
    if nested and min(mesh.n1, mesh.n2) >= 64 and mesh.n1 % 2 == 0 and mesh.n2 % 2 == 0:
        coarse = DomainMesh(mesh.omega, mesh.n1 // 2, mesh.n2 // 2)
        coarse_vals, *_ = _solve_dirichlet_core(
            coarse, coeff_eval, f, max(tol, 1e-6), rule, nested=True,
        )
        guess = interpolate_nodal(coarse.grid, coarse_vals, mesh.grid.node_coords())
        x0 = guess[interior]

    reduced = SparseSystem.from_matrix(K, symmetric=True)
    res = cg_solve(reduced, b, tol=tol, x0=x0)

    values = np.zeros(mesh.grid.n_nodes)
    values[interior] = res.x
    energy = float(res.x @ (K @ res.x))
    work = float(b @ res.x)
    return values, res.iterations, res.residual, energy, work


def solve_oscillatory(
    coefficient,
    scale_map,
    f,
    mesh: DomainMesh,
    tol: float = 1e-8,
    rule: QuadratureRule = DEFAULT_RULE,
    nested: bool = True,
) -> SolutionField:
    """Solve -div(A(alpha_h(x)) grad u) = f with zero Dirichlet data.

    The coefficient is evaluated at the mapped quadrature points. If the
    mesh supplies fewer than 8 elements per local oscillation period
    (checked against the map's requirement at the top edge) the solution is
    flagged under-resolved but still returned.
    """
    need1, need2 = scale_map.required_mesh_density(mesh.omega)
    have1 = mesh.n1 / mesh.omega.width
    have2 = mesh.n2 / mesh.omega.height
    warn = have1 < need1 or have2 < need2

    eval_fn = coefficient.evaluate if hasattr(coefficient, "evaluate") else coefficient

    def composed(pts):
        return eval_fn(scale_map(pts))

    values, iters, resid, energy, work = _solve_dirichlet_core(
        mesh, composed, f, tol, rule, nested)
    return SolutionField(values=values, mesh=mesh, label=f"oscillatory h={scale_map.h}",
                         warn_underresolved=warn, iterations=iters, residual=resid,
                         energy=energy, source_work=work)


def tensor_evaluator(field: HomogenizedTensor) -> Callable[[np.ndarray], np.ndarray]:
    """Pointwise effective coefficient from sampled curves.

    Entries are interpolated linearly in x2 (constant in x1) and clamped
    at the sampled range's ends.
    """
    order = np.argsort(field.x2, kind="stable")
    x2s = field.x2[order]
    mats = field.matrices[order]

    def evaluate(pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.empty((pts.shape[0], 2, 2))
        for i in range(2):
            for j in range(2):
                out[:, i, j] = np.interp(pts[:, 1], x2s, mats[:, i, j])
        return out

    return evaluate


def solve_homogenized(
    field: HomogenizedTensor,
    f,
    mesh: DomainMesh,
    tol: float = 1e-8,
    rule: QuadratureRule = DEFAULT_RULE,
    nested: bool = True,
) -> SolutionField:
    """Solve -div(B(x) grad u) = f for the sampled effective tensor."""
    values, iters, resid, energy, work = _solve_dirichlet_core(
        mesh, tensor_evaluator(field), f, tol, rule, nested)
    return SolutionField(values=values, mesh=mesh, label="homogenized",
                         warn_underresolved=False, iterations=iters, residual=resid,
                         energy=energy, source_work=work)


def l2_error(u: SolutionField, v: SolutionField, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """L2 norm of u - v over the domain; both fields must share the mesh.

    The difference is piecewise bilinear, so the default rule integrates
    its square exactly.
    """
    if not u.mesh.matches(v.mesh):
        raise ValueError("solution fields live on different meshes")
    grid = u.mesh.grid
    d = u.values - v.values
    phi, _ = q1_tables(rule)
    at_quad = np.einsum("qa,ea->eq", phi, d[grid.connectivity()])
    total = np.einsum("eq,q->", at_quad ** 2, rule.weights) * (grid.hx * grid.hy)
    return float(np.sqrt(total))


def flux_moment(
    coeff_eval,
    u: SolutionField,
    phi,
    rule: QuadratureRule = DEFAULT_RULE,
) -> float:
    """Weighted flux functional int (D grad u) . phi dx.

    ``phi`` is a smooth vector test field, callable on (m, 2) points with
    (m, 2) values.
    """
    grid = u.mesh.grid
    pts = grid.quad_points(rule).reshape(-1, 2)
    D = np.asarray(coeff_eval(pts), dtype=float).reshape(
        grid.n_elements, len(rule.weights), 2, 2)
    grad = nodal_gradient_at_quad(grid, u.values, rule)
    sigma = np.einsum("eqik,eqk->eqi", D, grad, optimize=True)
    test = np.asarray(phi(pts), dtype=float).reshape(
        grid.n_elements, len(rule.weights), 2)
    total = np.einsum("eqi,eqi,q->", sigma, test, rule.weights, optimize=True)
    return float(total * grid.hx * grid.hy)


@dataclasses.dataclass
class ConvergenceRow:
    h: int
    l2_error: float
    energy: float
    warn_underresolved: bool


def convergence_study(
    coefficient,
    map_family,
    f,
    mesh: DomainMesh,
    h_list: Sequence[int],
    tensor: HomogenizedTensor,
    tol: float = 1e-8,
    on_row=None,
) -> list[ConvergenceRow]:
    """Compare oscillatory solves against the effective-tensor solve.

    ``map_family`` is a callable h -> scale map. The homogenized reference
    is solved once; each h row records the L2 distance to it, the solve's
    energy and the resolution flag. ``on_row`` (if given) is called with
    each completed row, letting callers persist partial tables.
    """
    h_list = [int(h) for h in h_list]
    if any(b <= a for a, b in zip(h_list, h_list[1:])):
        raise ValueError("h_list must be strictly increasing")
    reference = solve_homogenized(tensor, f, mesh, tol=tol)
    rows = []
    for h in h_list:
        u_h = solve_oscillatory(coefficient, map_family(h), f, mesh, tol=tol)
        row = ConvergenceRow(
            h=h,
            l2_error=l2_error(u_h, reference),
            energy=u_h.energy,
            warn_underresolved=u_h.warn_underresolved,
        )
        rows.append(row)
        if on_row is not None:
            on_row(row)
    return rows


def write_convergence_csv(rows: Sequence[ConvergenceRow], stream) -> None:
    """Write one row per scale index: h,l2_error,energy,warn_underresolved."""
    stream.write("h,l2_error,energy,warn_underresolved\n")
    for row in rows:
        stream.write(
            f"{row.h},{row.l2_error:.17g},{row.energy:.17g},"
            f"{int(row.warn_underresolved)}\n"
        )
