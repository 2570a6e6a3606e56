"""Global operators and right-hand sides for the two Poisson formulations.

Lagrange: ``A p = b`` with ``A[i, j] = int grad phi_i . grad phi_j``.

Mixed (Darcy form): the block system ``[[M, B^T], [B, 0]] [u; p] = [f_u; f_p]``
with ``M[i, j] = int k phi_i . phi_j``, ``B[l, i] = -int psi_l div phi_i`` and
``f_p[l] = int g psi_l``.  The negated ``B`` keeps the operator symmetric
for ``-div u = g``.

Scalar coefficients and fields may be numbers or vectorized callables
``f(x, y)``; vector fields return an array with a trailing axis of 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .elements import H1, L2, RT, FESpace, essential_boundary_dofs
from .mesh import LOCAL_EDGES, REFERENCE_VERTICES
from .quadrature import required_order, rule_for_geometry

Field = Union[float, Callable[..., np.ndarray]]


class AssemblyError(ValueError):
    pass


def evaluate_field(f: Field, x: np.ndarray, vector: bool = False) -> np.ndarray:
    """Evaluate a constant or callable field at points ``x`` of shape ``(..., 2)``."""
    shape = x.shape[:-1] + ((2,) if vector else ())
    if callable(f):
        return np.broadcast_to(np.asarray(f(x[..., 0], x[..., 1]), dtype=float), shape)
    return np.broadcast_to(np.asarray(f, dtype=float), shape)


def _scatter(rows, cols, vals, shape) -> sp.csr_matrix:
    A = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()
    A.sum_duplicates()
    return A


def _accuracy(*spaces: FESpace) -> int:
    return required_order(max(s.degree for s in spaces))


def _require(space: FESpace, families, what: str):
    if space.family not in families or space.vdim != 1:
        raise AssemblyError(f"{what} needs a scalar-component {'/'.join(families)} space, got {space!r}")


def assemble_diffusion(space: FESpace, coeff: Field = 1.0, accuracy: int | None = None) -> sp.csr_matrix:
    """Stiffness matrix ``int coeff grad phi_i . grad phi_j`` of an H1 space."""
    _require(space, (H1,), "assemble_diffusion")
    acc = _accuracy(space) if accuracy is None else accuracy
    rows, cols, vals = [], [], []
    for kind in space.mesh.groups:
        rule = rule_for_geometry(kind, acc)
        tab = space.tabulate(kind, rule.points)
        wc = rule.weights * tab.detJ * evaluate_field(coeff, tab.x)
        Ke = np.einsum("nq,nqia,nqja->nij", wc, tab.derivs, tab.derivs)
        Ke = 0.5 * (Ke + Ke.transpose(0, 2, 1))  # bitwise symmetric
        d = tab.dofs
        rows.append(np.repeat(d[:, :, None], d.shape[1], axis=2))
        cols.append(np.repeat(d[:, None, :], d.shape[1], axis=1))
        vals.append(Ke)
    return _scatter(*_cat(rows, cols, vals), (space.ndofs, space.ndofs))


def assemble_vector_mass(space: FESpace, coeff: Field = 1.0, accuracy: int | None = None) -> sp.csr_matrix:
    """Mass matrix ``int coeff phi_i . phi_j`` of Piola-mapped RT functions."""
    _require(space, (RT,), "assemble_vector_mass")
    acc = _accuracy(space) if accuracy is None else accuracy
    rows, cols, vals = [], [], []
    for kind in space.mesh.groups:
        rule = rule_for_geometry(kind, acc)
        tab = space.tabulate(kind, rule.points)
        wc = rule.weights * tab.detJ * evaluate_field(coeff, tab.x)
        Me = np.einsum("nq,nqia,nqja->nij", wc, tab.values, tab.values)
        Me = 0.5 * (Me + Me.transpose(0, 2, 1))
        d = tab.dofs
        rows.append(np.repeat(d[:, :, None], d.shape[1], axis=2))
        cols.append(np.repeat(d[:, None, :], d.shape[1], axis=1))
        vals.append(Me)
    return _scatter(*_cat(rows, cols, vals), (space.ndofs, space.ndofs))


def assemble_divergence(rt_space: FESpace, l2_space: FESpace, accuracy: int | None = None) -> sp.csr_matrix:
    """``B[l, i] = -int psi_l div phi_i``, shape ``(n_p, n_u)``."""
    _require(rt_space, (RT,), "assemble_divergence")
    _require(l2_space, (L2,), "assemble_divergence")
    if rt_space.mesh is not l2_space.mesh:
        raise AssemblyError("RT and L2 spaces live on different meshes")
    if rt_space.order != l2_space.order:
        raise AssemblyError("L2 order must equal RT order")
    acc = _accuracy(rt_space, l2_space) if accuracy is None else accuracy
    rows, cols, vals = [], [], []
    for kind in rt_space.mesh.groups:
        rule = rule_for_geometry(kind, acc)
        tu = rt_space.tabulate(kind, rule.points)
        tp = l2_space.tabulate(kind, rule.points)
        w = rule.weights * tu.detJ
        Be = -np.einsum("nq,nql,nqi->nli", w, tp.values, tu.derivs)
        du, dp = tu.dofs, tp.dofs
        rows.append(np.repeat(dp[:, :, None], du.shape[1], axis=2))
        cols.append(np.repeat(du[:, None, :], dp.shape[1], axis=1))
        vals.append(Be)
    return _scatter(*_cat(rows, cols, vals), (l2_space.ndofs, rt_space.ndofs))


def assemble_load(space: FESpace, f: Field, accuracy: int | None = None) -> np.ndarray:
    """``b[i] = int f psi_i`` for a scalar H1 or L2 space."""
    _require(space, (H1, L2), "assemble_load")
    acc = _accuracy(space) if accuracy is None else accuracy
    b = np.zeros(space.ndofs)
    for kind in space.mesh.groups:
        rule = rule_for_geometry(kind, acc)
        tab = space.tabulate(kind, rule.points)
        wf = rule.weights * tab.detJ * evaluate_field(f, tab.x)
        np.add.at(b, tab.dofs, np.einsum("nq,nqi->ni", wf, tab.values))
    return b


def assemble_vector_load(space: FESpace, f: Field, accuracy: int | None = None) -> np.ndarray:
    """``b[i] = int f . phi_i`` for an RT space and a vector field ``f``."""
    _require(space, (RT,), "assemble_vector_load")
    acc = _accuracy(space) if accuracy is None else accuracy
    b = np.zeros(space.ndofs)
    for kind in space.mesh.groups:
        rule = rule_for_geometry(kind, acc)
        tab = space.tabulate(kind, rule.points)
        fv = evaluate_field(f, tab.x, vector=True)
        contrib = np.einsum("nq,nqa,nqia->ni", rule.weights * tab.detJ, fv, tab.values)
        np.add.at(b, tab.dofs, contrib)
    return b


def assemble_boundary_flux(rt_space: FESpace, p0: Field, accuracy: int | None = None) -> np.ndarray:
    """``b[i] = int_Gamma p0 (phi_i . n)`` over the mesh boundary.

    The Piola map preserves ``(phi . n) ds``, so the integrand is evaluated
    on the reference edge.
    """
    _require(rt_space, (RT,), "assemble_boundary_flux")
    mesh = rt_space.mesh
    acc = _accuracy(rt_space) if accuracy is None else accuracy
    seg = rule_for_geometry("segment", acc)
    t = 0.5 * (seg.points[:, 0] + 1.0)
    w = 0.5 * seg.weights
    b = np.zeros(rt_space.ndofs)
    for eid in mesh.boundary_edge_ids:
        e = int(mesh.edge_elements[eid, 0])
        kind = mesh.elements[e].kind
        local = mesh.element_edges[e].index(eid)
        a, c = LOCAL_EDGES[kind][local]
        verts = REFERENCE_VERTICES[kind]
        tau = verts[c] - verts[a]
        ref_pts = verts[a] + t[:, None] * tau
        ref = rt_space.refs[kind]
        own = ref.edge_dofs(local)  # other basis functions have zero flux here
        vals, _ = ref.tabulate(ref_pts)
        flux = vals[:, own] @ np.array([tau[1], -tau[0]])
        pv = evaluate_field(p0, mesh.element_geometry(e).map(ref_pts))
        dofs, signs = rt_space.element_dofs(e)
        b[dofs[own]] += signs[own] * ((w * pv) @ flux)
    return b


def _cat(rows, cols, vals):
    if not rows:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    return (
        np.concatenate([r.ravel() for r in rows]),
        np.concatenate([c.ravel() for c in cols]),
        np.concatenate([v.ravel() for v in vals]),
    )


def apply_essential_bc(A, b, dofs, value: float = 0.0):
    """Symmetric elimination of Dirichlet DOFs.

    Constrained rows and columns are zeroed with a unit diagonal, the
    lifted ``value`` is moved to the right-hand side and ``b[dofs] = value``.
    Returns new ``(A, b)``; the inputs are not modified.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    if A.shape[1] != n:
        raise AssemblyError("essential BCs need a square matrix")
    dofs = np.unique(np.asarray(dofs, dtype=int))
    if len(dofs) and (dofs[0] < 0 or dofs[-1] >= n):
        raise AssemblyError("constrained DOF out of range")
    mask = np.zeros(n, dtype=bool)
    mask[dofs] = True
    b = np.array(b, dtype=float)
    if value != 0.0:
        lift = np.zeros(n)
        lift[dofs] = value
        b = b - A @ lift
    keep = sp.diags((~mask).astype(float))
    A = (keep @ A @ keep + sp.diags(mask.astype(float))).tocsr()
    A.sum_duplicates()
    b[dofs] = value
    return A, b


# -- block system ----------------------------------------------------------------


@dataclass
class BlockSystem:
    """The symmetric saddle-point operator ``[[M, B^T], [B, 0]]`` and its right-hand side."""

    M: sp.csr_matrix
    B: sp.csr_matrix
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    _BT: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        self._BT = self.B.T.tocsr()

    @property
    def n_u(self) -> int:
        return self.M.shape[0]

    @property
    def n_p(self) -> int:
        return self.B.shape[0]

    @property
    def offsets(self) -> np.ndarray:
        return np.cumsum([0, self.n_u, self.n_p])

    @property
    def shape(self):
        n = self.n_u + self.n_p
        return (n, n)

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate([self.rhs_u, self.rhs_p])

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u, p = x[: self.n_u], x[self.n_u :]
        return np.concatenate([self.M @ u + self._BT @ p, self.B @ u])

    __matmul__ = matvec

    def diagonal(self) -> np.ndarray:
        return np.concatenate([self.M.diagonal(), np.zeros(self.n_p)])

    def as_operator(self) -> LinearOperator:
        return LinearOperator(self.shape, matvec=self.matvec, rmatvec=self.matvec, dtype=float)

    def to_sparse(self) -> sp.csr_matrix:
        return sp.bmat([[self.M, self._BT], [self.B, None]], format="csr")

    def split(self, x):
        return x[: self.n_u], x[self.n_u :]


def build_block_system(M, B, rhs_u, rhs_p) -> BlockSystem:
    M, B = sp.csr_matrix(M), sp.csr_matrix(B)
    rhs_u, rhs_p = np.asarray(rhs_u, dtype=float), np.asarray(rhs_p, dtype=float)
    if M.shape[0] != M.shape[1]:
        raise AssemblyError("M must be square")
    if B.shape[1] != M.shape[0]:
        raise AssemblyError(f"B has {B.shape[1]} columns, M has {M.shape[0]} rows")
    if rhs_u.shape != (M.shape[0],) or rhs_p.shape != (B.shape[0],):
        raise AssemblyError("right-hand side blocks do not match the operator")
    return BlockSystem(M, B, rhs_u, rhs_p)


# -- problem data -------------------------------------------------------------------


def _zero_vector(x, y):
    return np.zeros(np.shape(x) + (2,))


@dataclass(frozen=True)
class ProblemSpec:
    """Data of the Darcy problem ``k u + grad p = f, -div u = g, -p = p0 on the boundary``
    and of the matching Lagrange problem ``-lap p = rhs_lagrange, p = 0``.

    The defaults (k = 1, f = 0, g = -1, p0 = 0) make both describe
    ``-lap p = 1`` with homogeneous Dirichlet data.
    """

    k_coeff: Field = 1.0
    f: Field = _zero_vector
    g: Field = -1.0
    p0: Field = 0.0
    rhs_lagrange: Field = 1.0


POISSON_PROBLEM = ProblemSpec()


def manufactured_problem() -> ProblemSpec:
    """Data for the exact solution ``p = sin(pi x) sin(pi y)`` on the unit square."""

    def source(x, y):
        return 2 * math.pi**2 * np.sin(math.pi * x) * np.sin(math.pi * y)

    return ProblemSpec(g=lambda x, y: -source(x, y), rhs_lagrange=source)


@dataclass
class LagrangeSystem:
    A: sp.csr_matrix
    b: np.ndarray
    ess_dofs: np.ndarray


def assemble_lagrange(h1: FESpace, problem: ProblemSpec = POISSON_PROBLEM) -> LagrangeSystem:
    A = assemble_diffusion(h1, 1.0)
    b = assemble_load(h1, problem.rhs_lagrange)
    ess = essential_boundary_dofs(h1)
    A, b = apply_essential_bc(A, b, ess, 0.0)
    return LagrangeSystem(A, b, ess)


def assemble_mixed(rt: FESpace, l2: FESpace, problem: ProblemSpec = POISSON_PROBLEM) -> BlockSystem:
    M = assemble_vector_mass(rt, problem.k_coeff)
    B = assemble_divergence(rt, l2)
    rhs_u = assemble_vector_load(rt, problem.f) + assemble_boundary_flux(rt, problem.p0)
    rhs_p = assemble_load(l2, problem.g)
    return build_block_system(M, B, rhs_u, rhs_p)


def export_matrix_market(A, path) -> None:
    """Write a sparse matrix in MatrixMarket coordinate format."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(A))

