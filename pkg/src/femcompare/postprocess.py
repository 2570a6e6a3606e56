"""Finite element functions, L2 errors, velocity recovery and comparisons."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .assembly import Field, evaluate_field
from .elements import H1, L2, RT, ElementError, FESpace
from .mesh import REFERENCE_VERTICES, Mesh, inside_reference, map_points
from .quadrature import required_order, rule_for_geometry


class GridFunction:
    """Coefficient vector bound to a space.

    Evaluation returns physical values: Piola-mapped vectors for RT, and
    stacked components for vector L2/H1 spaces.
    """

    def __init__(self, space: FESpace, coefficients=None):
        self.space = space
        if coefficients is None:
            coefficients = np.zeros(space.ndofs)
        self.coefficients = np.asarray(coefficients, dtype=float)
        if self.coefficients.shape != (space.ndofs,):
            raise ValueError(
                f"coefficient vector has length {self.coefficients.size}, space has {space.ndofs} DOFs"
            )

    def __repr__(self):
        return f"GridFunction({self.space!r})"

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    @property
    def is_vector(self) -> bool:
        return self.space.family == RT or self.space.vdim > 1

    def values(self, kind: str, points):
        """Values on all ``kind`` elements at reference points.

        Returns ``(tab, vals)`` where ``vals`` is ``(n, q)`` or ``(n, q, vdim)``.
        """
        space = self.space
        tab = space.tabulate(kind, points)
        c = self.coefficients
        if space.family == RT:
            vals = np.einsum("ni,nqia->nqa", c[tab.dofs], tab.values)
        elif space.vdim == 1:
            vals = np.einsum("ni,nqi->nq", c[tab.dofs], tab.values)
        else:
            vals = np.stack(
                [
                    np.einsum("ni,nqi->nq", c[space.component_dofs(tab.dofs, comp)], tab.values)
                    for comp in range(space.vdim)
                ],
                axis=-1,
            )
        return tab, vals

    def gradients(self, kind: str, points):
        """Physical gradients ``(n, q, 2)`` of a scalar H1/L2 function."""
        if self.is_vector:
            raise ElementError("gradients need a scalar function")
        tab = self.space.tabulate(kind, points)
        return tab, np.einsum("ni,nqia->nqa", self.coefficients[tab.dofs], tab.derivs)

    def component(self, comp: int) -> "GridFunction":
        """Component ``comp`` of a vector L2/H1 function as a scalar function."""
        space = self.space
        if space.vdim == 1:
            raise ElementError("component() needs a vdim > 1 space")
        scalar = FESpace(space.mesh, space.family, space.order)
        lo = comp * space.nscalar
        return GridFunction(scalar, self.coefficients[lo : lo + space.nscalar])


def eval_gridfunction(gf: GridFunction, elem: int, point):
    """Value of ``gf`` at reference ``point`` of element ``elem``."""
    mesh = gf.mesh
    if not 0 <= elem < mesh.num_elements:
        raise IndexError(f"element index {elem} out of range")
    kind = mesh.elements[elem].kind
    pts = np.atleast_2d(np.asarray(point, dtype=float))
    if not inside_reference(kind, pts):
        raise ElementError(f"point {point} lies outside the reference {kind}")
    row = int(np.searchsorted(mesh.groups[kind], elem))
    _, vals = gf.values(kind, pts)
    return vals[row, 0]


# -- norms and errors -----------------------------------------------------------


def field_l2_norm(mesh: Mesh, f: Field, quad_accuracy: int, vector: bool = False) -> float:
    """L2 norm of an analytic scalar or vector field over the mesh."""
    total = 0.0
    for kind in mesh.groups:
        rule = rule_for_geometry(kind, quad_accuracy)
        x, _, det = map_points(kind, mesh.vertices[mesh.connectivity(kind)], rule.points)
        v = evaluate_field(f, x, vector)
        sq = np.sum(v**2, axis=-1) if vector else v**2
        total += float(np.sum(rule.weights * det * sq))
    return math.sqrt(total)


def compute_l2_error(gf: GridFunction, exact: Field, quad_accuracy: int) -> float:
    """``||gf - exact||_L2`` by elementwise quadrature; ``exact = 0`` gives ``||gf||``."""
    total = 0.0
    for kind in gf.mesh.groups:
        rule = rule_for_geometry(kind, quad_accuracy)
        tab, vals = gf.values(kind, rule.points)
        diff = vals - evaluate_field(exact, tab.x, gf.is_vector)
        sq = np.sum(diff**2, axis=-1) if gf.is_vector else diff**2
        total += float(np.sum(rule.weights * tab.detJ * sq))
    return math.sqrt(total)


def combine_velocity_error(err_x: float, err_y: float, normalize_by: float | None = None) -> float:
    """``sqrt(err_x^2 + err_y^2)``, optionally divided by a reference norm."""
    if err_x < 0 or err_y < 0:
        raise ValueError("component errors must be nonnegative")
    e = math.hypot(err_x, err_y)
    if normalize_by is None:
        return e
    if normalize_by == 0:
        raise ZeroDivisionError("cannot normalize by a zero reference norm")
    return e / normalize_by


# -- projections ------------------------------------------------------------------


def l2_project(l2_space: FESpace, values_on: Callable, quad_accuracy: int | None = None) -> GridFunction:
    """Elementwise L2 projection onto a scalar discontinuous space.

    ``values_on(kind, points, tab)`` must return the target values ``(n, q)``
    on the elements of ``kind``; ``tab`` is the L2 space tabulation at the
    same points.
    """
    if l2_space.family != L2 or l2_space.vdim != 1:
        raise ElementError("projection target must be a scalar L2 space")
    acc = required_order(l2_space.degree + 1) if quad_accuracy is None else quad_accuracy
    coeffs = np.zeros(l2_space.ndofs)
    for kind in l2_space.mesh.groups:
        rule = rule_for_geometry(kind, acc)
        tab = l2_space.tabulate(kind, rule.points)
        w = rule.weights * tab.detJ
        mass = np.einsum("nq,nqi,nqj->nij", w, tab.values, tab.values)
        rhs = np.einsum("nq,nq,nqi->ni", w, values_on(kind, rule.points, tab), tab.values)
        coeffs[tab.dofs] = np.linalg.solve(mass, rhs[..., None])[..., 0]
    return GridFunction(l2_space, coeffs)


def _same_mesh(a: FESpace, b: FESpace):
    if a.mesh is not b.mesh:
        raise ElementError("functions live on different meshes")


def recover_gradient(p_gf: GridFunction, l2_space: FESpace):
    """Velocity ``u = -grad p`` of an H1 pressure, projected componentwise onto ``l2_space``."""
    if p_gf.space.family != H1 or p_gf.is_vector:
        raise ElementError("gradient recovery needs a scalar H1 function")
    _same_mesh(p_gf.space, l2_space)
    if l2_space.order != p_gf.space.order - 1:
        raise ElementError("L2 order must be one less than the H1 order")
    acc = required_order(p_gf.space.degree)

    def comp(c):
        return lambda kind, pts, tab: -p_gf.gradients(kind, pts)[1][..., c]

    return l2_project(l2_space, comp(0), acc), l2_project(l2_space, comp(1), acc)


def project_rt_components(u_gf: GridFunction, l2_space: FESpace):
    """Cartesian components of a Piola-mapped RT field, L2-projected onto ``l2_space``."""
    if u_gf.space.family != RT:
        raise ElementError("component projection needs an RT function")
    _same_mesh(u_gf.space, l2_space)
    acc = required_order(u_gf.space.degree)

    def comp(c):
        return lambda kind, pts, tab: u_gf.values(kind, pts)[1][..., c]

    return l2_project(l2_space, comp(0), acc), l2_project(l2_space, comp(1), acc)


Comparable = Union[GridFunction, Sequence[GridFunction]]


def comparison_error(gf_a: Comparable, gf_b: Comparable) -> float:
    """L2 distance between two discrete functions on the same mesh.

    Pairs ``(ux, uy)`` of scalar functions are compared componentwise and
    combined with :func:`combine_velocity_error`.
    """
    if isinstance(gf_a, GridFunction) != isinstance(gf_b, GridFunction):
        raise ValueError("cannot compare a function with a component pair")
    if not isinstance(gf_a, GridFunction):
        if len(gf_a) != len(gf_b):
            raise ValueError("component counts differ")
        errs = [comparison_error(a, b) for a, b in zip(gf_a, gf_b)]
        return combine_velocity_error(*errs) if len(errs) == 2 else math.sqrt(sum(e * e for e in errs))
    _same_mesh(gf_a.space, gf_b.space)
    if gf_a.is_vector != gf_b.is_vector:
        raise ValueError("cannot compare scalar and vector functions")
    acc = max(required_order(gf_a.space.degree), required_order(gf_b.space.degree))
    total = 0.0
    for kind in gf_a.mesh.groups:
        rule = rule_for_geometry(kind, acc)
        tab, va = gf_a.values(kind, rule.points)
        _, vb = gf_b.values(kind, rule.points)
        d = va - vb
        sq = np.sum(d**2, axis=-1) if gf_a.is_vector else d**2
        total += float(np.sum(rule.weights * tab.detJ * sq))
    return math.sqrt(total)


# -- reference fields -------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceFields:
    """Pressure and velocity fields the discrete solutions are measured against."""

    p: Callable
    ux: Callable
    uy: Callable

    def u(self, x, y):
        return np.stack([self.ux(x, y), self.uy(x, y)], axis=-1)


# p = e^x sin y is harmonic, so it does not solve -lap p = 1 and errors
# against it level off near a constant under refinement.
STAR_REFERENCE = ReferenceFields(
    p=lambda x, y: np.exp(x) * np.sin(y),
    ux=lambda x, y: -np.exp(x) * np.sin(y),
    uy=lambda x, y: -np.exp(x) * np.cos(y),
)

MANUFACTURED_REFERENCE = ReferenceFields(
    p=lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y),
    ux=lambda x, y: -np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
    uy=lambda x, y: -np.pi * np.sin(np.pi * x) * np.cos(np.pi * y),
)


# -- VTK export -----------------------------------------------------------------

_VTK_CELL = {"triangle": 5, "quadrilateral": 9}


def write_vtk(path, mesh: Mesh, fields: dict, title: str = "femcompare") -> None:
    """Write fields to a legacy ASCII VTK unstructured grid.

    Every element gets its own copy of its vertices so discontinuous
    functions are shown without averaging.  ``fields`` maps names to
    GridFunctions (scalar or vector) or to ``(ux, uy)`` pairs.
    """
    pts, cells, types, owners = [], [], [], []
    for e, el in enumerate(mesh.elements):
        start = len(pts)
        pts.extend(mesh.vertices[list(el.vertex_ids)])
        cells.append(list(range(start, start + len(el.vertex_ids))))
        types.append(_VTK_CELL[el.kind])
        owners.append(e)

    def sample(gf):
        out = []
        for e, el in enumerate(mesh.elements):
            for p in REFERENCE_VERTICES[el.kind]:
                out.append(np.atleast_1d(eval_gridfunction(gf, e, p)))
        return np.array(out)

    with open(path, "w") as f:
        f.write("# vtk DataFile Version 2.0\n")
        f.write(f"{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {len(pts)} double\n")
        for x, y in pts:
            f.write(f"{x!r} {y!r} 0.0\n")
        size = sum(len(c) + 1 for c in cells)
        f.write(f"CELLS {len(cells)} {size}\n")
        for c in cells:
            f.write(" ".join(map(str, [len(c)] + c)) + "\n")
        f.write(f"CELL_TYPES {len(cells)}\n")
        f.write("\n".join(map(str, types)) + "\n")
        f.write(f"POINT_DATA {len(pts)}\n")
        for name, gf in fields.items():
            if isinstance(gf, GridFunction):
                vals = sample(gf)
            else:
                vals = np.column_stack([sample(g)[:, 0] for g in gf])
            if vals.shape[1] == 1:
                f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                f.write("\n".join(f"{v!r}" for v in vals[:, 0].tolist()) + "\n")
            else:
                f.write(f"VECTORS {name} double\n")
                for vx, vy in vals[:, :2].tolist():
                    f.write(f"{vx!r} {vy!r} 0.0\n")
