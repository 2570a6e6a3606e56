"""Reference elements and global finite element spaces.

Three families are provided on triangles and quadrilaterals:

``H1``
    continuous Lagrange elements of order k >= 1 (P_k on triangles, Q_k on
    quadrilaterals) with equispaced nodes;
``L2``
    discontinuous elements of order k >= 0 on the same polynomial spaces;
``RT``
    Raviart-Thomas H(div) elements of order k >= 0: [P_k]^2 + x P_k on
    triangles and Q_{k+1,k} x Q_{k,k+1} on quadrilaterals, mapped with the
    contravariant Piola transform.

Every basis is the dual basis of its degrees of freedom: point values for
the scalar families, normal-flux moments against Legendre polynomials on
edges plus interior moments for RT.  The basis is obtained by inverting the
matrix of functionals applied to a well-conditioned prime basis (tensor
Legendre polynomials on quadrilaterals, the Dubiner basis on triangles).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import eval_jacobi

from .mesh import (
    LOCAL_EDGES,
    QUADRILATERAL,
    REFERENCE_VERTICES,
    TRIANGLE,
    ElementGeometry,
    Mesh,
    inside_reference,
    map_points,
)
from .quadrature import rule_for_geometry

H1 = "H1"
L2 = "L2"
RT = "RT"
FAMILIES = (H1, L2, RT)

MAX_ORDER = {H1: 6, L2: 5, RT: 5}
MIN_ORDER = {H1: 1, L2: 0, RT: 0}


class ElementError(ValueError):
    pass


def legendre01(n: int, t) -> tuple[np.ndarray, np.ndarray]:
    """Shifted Legendre polynomials ``L_j(t) = P_j(2t - 1)``, j = 0..n.

    Returns values and t-derivatives, each of shape ``(len(t), n + 1)``.
    """
    t = np.asarray(t, dtype=float)
    s = 2.0 * t - 1.0
    P = np.zeros(t.shape + (n + 1,))
    D = np.zeros_like(P)
    P[..., 0] = 1.0
    if n >= 1:
        P[..., 1] = s
        D[..., 1] = 1.0
    for j in range(1, n):
        P[..., j + 1] = ((2 * j + 1) * s * P[..., j] - j * P[..., j - 1]) / (j + 1)
        D[..., j + 1] = D[..., j - 1] + (2 * j + 1) * P[..., j]
    return P, 2.0 * D


# -- prime bases ----------------------------------------------------------------


def _scalar_terms(geometry: str, k: int) -> list[tuple[int, int]]:
    if geometry == QUADRILATERAL:
        return [(a, b) for b in range(k + 1) for a in range(k + 1)]
    return [(a, b) for b in range(k + 1) for a in range(k + 1 - b)]


def _dubiner(k: int, points):
    """Orthogonal (Dubiner) basis of P_k on the reference triangle.

    Uses the collapsed form psi_ab = Q_a(x, t) P_b^(2a+1,0)(2 eta - 1) with
    Q_a(x, t) = t^a P_a(x / t), x = 2 xi - 1 + eta, t = 1 - eta, which is a
    polynomial and so has no singularity at the top vertex.
    """
    pts = np.atleast_2d(points)
    xi, eta = pts[:, 0], pts[:, 1]
    x, t = 2 * xi - 1 + eta, 1 - eta
    Q = np.zeros((len(xi), k + 1))
    Qx, Qt = np.zeros_like(Q), np.zeros_like(Q)
    Q[:, 0] = 1.0
    if k >= 1:
        Q[:, 1] = x
        Qx[:, 1] = 1.0
    for n in range(1, k):
        c1, c2 = (2 * n + 1) / (n + 1), n / (n + 1)
        Q[:, n + 1] = c1 * x * Q[:, n] - c2 * t**2 * Q[:, n - 1]
        Qx[:, n + 1] = c1 * (Q[:, n] + x * Qx[:, n]) - c2 * t**2 * Qx[:, n - 1]
        Qt[:, n + 1] = c1 * x * Qt[:, n] - c2 * (2 * t * Q[:, n - 1] + t**2 * Qt[:, n - 1])
    s = 2 * eta - 1
    terms = _scalar_terms(TRIANGLE, k)
    vals = np.empty((len(xi), len(terms)))
    grads = np.empty((len(xi), len(terms), 2))
    for m, (a, b) in enumerate(terms):
        J = eval_jacobi(b, 2 * a + 1, 0, s)
        dJ = 0.5 * (b + 2 * a + 2) * eval_jacobi(b - 1, 2 * a + 2, 1, s) if b > 0 else 0.0
        vals[:, m] = Q[:, a] * J
        grads[:, m, 0] = 2 * Qx[:, a] * J
        # d/deta: x_eta = 1, t_eta = -1, s_eta = 2
        grads[:, m, 1] = (Qx[:, a] - Qt[:, a]) * J + Q[:, a] * 2 * dJ
    return vals, grads


def _scalar_prime(geometry: str, k: int, points):
    pts = np.atleast_2d(points)
    if geometry == TRIANGLE:
        return _dubiner(k, pts)
    terms = _scalar_terms(geometry, k)
    Lx, dLx = legendre01(k, pts[:, 0])
    Ly, dLy = legendre01(k, pts[:, 1])
    a = np.array([t[0] for t in terms])
    b = np.array([t[1] for t in terms])
    vals = Lx[:, a] * Ly[:, b]
    grads = np.stack([dLx[:, a] * Ly[:, b], Lx[:, a] * dLy[:, b]], axis=-1)
    return vals, grads


def _rt_prime(geometry: str, k: int, points):
    """Vector prime basis of RT_k: values ``(q, m, 2)`` and divergences ``(q, m)``."""
    pts = np.atleast_2d(points)
    xi, eta = pts[:, 0], pts[:, 1]
    Lx, dLx = legendre01(k + 1, xi)
    Ly, dLy = legendre01(k + 1, eta)
    vals, divs = [], []
    zero = np.zeros_like(xi)
    if geometry == QUADRILATERAL:
        for b in range(k + 1):
            for a in range(k + 2):
                vals.append(np.stack([Lx[:, a] * Ly[:, b], zero], axis=-1))
                divs.append(dLx[:, a] * Ly[:, b])
        for b in range(k + 2):
            for a in range(k + 1):
                vals.append(np.stack([zero, Lx[:, a] * Ly[:, b]], axis=-1))
                divs.append(Lx[:, a] * dLy[:, b])
    else:
        P, dP = _dubiner(k, pts)
        for m in range(P.shape[1]):
            vals.append(np.stack([P[:, m], zero], axis=-1))
            divs.append(dP[:, m, 0])
        for m in range(P.shape[1]):
            vals.append(np.stack([zero, P[:, m]], axis=-1))
            divs.append(dP[:, m, 1])
        # (x - c) h for the degree-k members h of the orthogonal basis: their
        # top-degree parts span the homogeneous polynomials, so the span is
        # [P_k]^2 + x P_k
        cx, cy = xi - 1 / 3, eta - 1 / 3
        terms = _scalar_terms(TRIANGLE, k)
        for m, (a, b) in enumerate(terms):
            if a + b != k:
                continue
            h, hx, hy = P[:, m], dP[:, m, 0], dP[:, m, 1]
            vals.append(np.stack([cx * h, cy * h], axis=-1))
            divs.append(2 * h + cx * hx + cy * hy)
    return np.stack(vals, axis=1), np.stack(divs, axis=1)


# -- degrees of freedom ---------------------------------------------------------


def _lagrange_nodes(geometry: str, k: int, family: str):
    """Nodes and their owning entity ``("vertex"|"edge"|"interior", index, position)``."""
    if family == L2:
        if k == 0:
            centre = [1 / 3, 1 / 3] if geometry == TRIANGLE else [0.5, 0.5]
            return np.array([centre]), [("interior", 0, 0)]
        if geometry == QUADRILATERAL:
            nodes = [(i / k, j / k) for j in range(k + 1) for i in range(k + 1)]
        else:
            nodes = [(i / k, j / k) for j in range(k + 1) for i in range(k + 1 - j)]
        return np.array(nodes), [("interior", 0, p) for p in range(len(nodes))]

    verts = REFERENCE_VERTICES[geometry]
    nodes = [tuple(v) for v in verts]
    owners = [("vertex", i, 0) for i in range(len(verts))]
    for e, (a, b) in enumerate(LOCAL_EDGES[geometry]):
        for i in range(1, k):
            nodes.append(tuple(verts[a] + (i / k) * (verts[b] - verts[a])))
            owners.append(("edge", e, i - 1))
    if geometry == QUADRILATERAL:
        inner = [(i / k, j / k) for j in range(1, k) for i in range(1, k)]
    else:
        inner = [(i / k, j / k) for j in range(1, k) for i in range(1, k - j)]
    nodes.extend(inner)
    owners.extend(("interior", 0, p) for p in range(len(inner)))
    return np.array(nodes, dtype=float), owners


def _edge_rule(k: int):
    rule = rule_for_geometry("segment", 2 * k + 4)
    t = 0.5 * (rule.points[:, 0] + 1.0)
    return t, 0.5 * rule.weights


def _rt_functionals(geometry: str, k: int, evaluate):
    """Apply the RT_k functionals to ``evaluate(points) -> (q, m, 2)`` values.

    Returns the ``(ndofs, m)`` matrix and the DOF owner list.
    """
    rows, owners = [], []
    verts = REFERENCE_VERTICES[geometry]
    t, w = _edge_rule(k)
    Lt, _ = legendre01(k, t)
    for e, (a, b) in enumerate(LOCAL_EDGES[geometry]):
        tau = verts[b] - verts[a]
        nds = np.array([tau[1], -tau[0]])  # outward normal times edge length
        pts = verts[a] + t[:, None] * tau
        flux = evaluate(pts) @ nds  # (q, m)
        for j in range(k + 1):
            rows.append((w * Lt[:, j]) @ flux)
            owners.append(("edge", e, j))
    if k > 0:
        rule = rule_for_geometry(geometry, 2 * k + 3)
        vals = evaluate(rule.points)
        Lx, _ = legendre01(k, rule.points[:, 0])
        Ly, _ = legendre01(k, rule.points[:, 1])
        if geometry == QUADRILATERAL:
            tests = [(0, Lx[:, a] * Ly[:, b]) for b in range(k + 1) for a in range(k)]
            tests += [(1, Lx[:, a] * Ly[:, b]) for b in range(k) for a in range(k + 1)]
        else:
            low = _dubiner(k - 1, rule.points)[0].T
            tests = [(0, q) for q in low] + [(1, q) for q in low]
        for p, (c, q) in enumerate(tests):
            rows.append((rule.weights * q) @ vals[:, :, c])
            owners.append(("interior", 0, p))
    return np.array(rows), owners


@dataclass(frozen=True, eq=False)
class ReferenceElement:
    """A reference finite element; basis j = sum_m coeffs[m, j] * prime_m."""

    family: str
    order: int
    geometry: str
    ndofs: int
    nodes: np.ndarray | None
    owners: tuple
    coeffs: np.ndarray

    @property
    def degree(self) -> int:
        """Largest polynomial degree in one reference direction."""
        return self.order + 1 if self.family == RT else self.order

    @property
    def is_vector(self) -> bool:
        return self.family == RT

    def edge_dofs(self, e: int) -> list[int]:
        return [i for i, o in enumerate(self.owners) if o[0] == "edge" and o[1] == e]

    def vertex_dofs(self, v: int) -> list[int]:
        return [i for i, o in enumerate(self.owners) if o[0] == "vertex" and o[1] == v]

    @cached_property
    def interior_dofs(self) -> list[int]:
        return [i for i, o in enumerate(self.owners) if o[0] == "interior"]

    def prime(self, points):
        if self.family == RT:
            return _rt_prime(self.geometry, self.order, points)
        return _scalar_prime(self.geometry, self.order, points)

    def tabulate(self, points):
        """Basis values and derivatives at reference points, unchecked.

        Scalar families: values ``(q, n)``, gradients ``(q, n, 2)``.
        RT: values ``(q, n, 2)``, divergences ``(q, n)``.
        """
        v, d = self.prime(points)
        if self.family == RT:
            return np.einsum("qmc,mn->qnc", v, self.coeffs), d @ self.coeffs
        return v @ self.coeffs, np.einsum("qmc,mn->qnc", d, self.coeffs)

    def apply_functionals(self, evaluate) -> np.ndarray:
        """Matrix of every DOF functional applied to the functions ``evaluate`` returns."""
        if self.family == RT:
            return _rt_functionals(self.geometry, self.order, evaluate)[0]
        return evaluate(self.nodes)


@lru_cache(maxsize=None)
def reference_element(family: str, order: int, geometry: str) -> ReferenceElement:
    if family not in FAMILIES:
        raise ElementError(f"unknown family {family!r}")
    if geometry not in (TRIANGLE, QUADRILATERAL):
        raise ElementError(f"unsupported geometry {geometry!r}")
    if not MIN_ORDER[family] <= order <= MAX_ORDER[family]:
        raise ElementError(
            f"{family} order must be in [{MIN_ORDER[family]}, {MAX_ORDER[family]}], got {order}"
        )
    if family == RT:
        V, owners = _rt_functionals(geometry, order, lambda p: _rt_prime(geometry, order, p)[0])
        nodes = None
    else:
        nodes, owners = _lagrange_nodes(geometry, order, family)
        V = _scalar_prime(geometry, order, nodes)[0]
    if V.shape[0] != V.shape[1]:
        raise ElementError(f"{family}{order} on {geometry}: {V.shape[0]} functionals for {V.shape[1]} functions")
    coeffs = np.linalg.inv(V)
    for a in (coeffs,) + ((nodes,) if nodes is not None else ()):
        a.setflags(write=False)
    return ReferenceElement(family, order, geometry, V.shape[0], nodes, tuple(owners), coeffs)


def _check_point(ref: ReferenceElement, point):
    pts = np.atleast_2d(np.asarray(point, dtype=float))
    if not inside_reference(ref.geometry, pts):
        raise ElementError(f"point {point} lies outside the reference {ref.geometry}")
    return pts


def eval_scalar_basis(ref: ReferenceElement, point):
    """Values ``(n,)`` and reference gradients ``(n, 2)`` of an H1/L2 basis."""
    if ref.family == RT:
        raise ElementError("eval_scalar_basis needs a scalar family")
    v, g = ref.tabulate(_check_point(ref, point))
    return v[0], g[0]


def eval_rt_basis(ref: ReferenceElement, point):
    """Reference vector values ``(n, 2)`` and divergences ``(n,)`` of an RT basis."""
    if ref.family != RT:
        raise ElementError("eval_rt_basis needs an RT element")
    v, d = ref.tabulate(_check_point(ref, point))
    return v[0], d[0]


def piola_map(geom: ElementGeometry, ref_vec, point, ref_div=None):
    """Contravariant Piola transform ``J v / det J`` of a reference vector.

    With ``ref_div`` given, also returns the mapped divergence ``div / det J``.
    """
    J = geom.jacobian(point)[0]
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    if abs(det) <= 1e-14 * max(1.0, np.abs(J).max() ** 2):
        raise ElementError("singular Jacobian in Piola map")
    v = J @ np.asarray(ref_vec, dtype=float).T / det
    v = v.T
    if ref_div is None:
        return v
    return v, np.asarray(ref_div) / det


# -- global spaces --------------------------------------------------------------


@dataclass(frozen=True)
class Tabulation:
    """Physical basis data for a group of same-kind elements at shared reference points.

    ``values`` is ``(n, q, nloc)`` for scalar spaces, ``(n, q, nloc, 2)`` for RT;
    ``derivs`` holds physical gradients ``(n, q, nloc, 2)`` or divergences
    ``(n, q, nloc)``.  Orientation signs are already applied.
    """

    elements: np.ndarray
    x: np.ndarray
    detJ: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    dofs: np.ndarray


class FESpace:
    """A finite element space on a mesh.

    ``element_dofs(e)`` returns the global DOF ids of element ``e`` in local
    order together with orientation signs (nontrivial only for RT edge DOFs).
    Numbering is vertices, then edges in global edge order, then element
    interiors in element order.  With ``vdim > 1`` component ``c`` of scalar
    DOF ``i`` is global DOF ``c * nscalar + i``.
    """

    def __init__(self, mesh: Mesh, family: str, order: int, vdim: int = 1):
        if vdim < 1 or (family == RT and vdim != 1):
            raise ElementError("vdim must be 1 for RT and >= 1 otherwise")
        self.mesh = mesh
        self.family = family
        self.order = order
        self.vdim = vdim
        self.refs = {kind: reference_element(family, order, kind) for kind in mesh.groups}
        self._number()

    def __repr__(self):
        return f"FESpace({self.family}{self.order}, ndofs={self.ndofs}, vdim={self.vdim})"

    @property
    def degree(self) -> int:
        return self.order + 1 if self.family == RT else self.order

    def _number(self):
        mesh = self.mesh
        k = self.order
        if self.family == H1:
            per_vertex, per_edge = 1, k - 1
        elif self.family == RT:
            per_vertex, per_edge = 0, k + 1
        else:
            per_vertex, per_edge = 0, 0
        edge_base = per_vertex * mesh.num_vertices
        next_id = edge_base + per_edge * mesh.num_edges
        interior_start = np.zeros(mesh.num_elements, dtype=int)
        for e, el in enumerate(mesh.elements):
            interior_start[e] = next_id
            next_id += len(self.refs[el.kind].interior_dofs)
        self.nscalar = next_id
        self.ndofs = next_id * self.vdim

        self._dofs, self._signs = {}, {}
        for kind, ids in mesh.groups.items():
            ref = self.refs[kind]
            conn = mesh.connectivity(kind)
            dofs = np.empty((len(ids), ref.ndofs), dtype=int)
            signs = np.ones((len(ids), ref.ndofs))
            for row, e in enumerate(ids):
                for i, (what, idx, pos) in enumerate(ref.owners):
                    if what == "vertex":
                        dofs[row, i] = conn[row, idx]
                    elif what == "edge":
                        a, b = LOCAL_EDGES[kind][idx]
                        eid = mesh.element_edges[e][idx]
                        forward = conn[row, a] < conn[row, b]
                        if self.family == H1:
                            gpos = pos if forward else per_edge - 1 - pos
                            dofs[row, i] = edge_base + eid * per_edge + gpos
                        else:
                            dofs[row, i] = edge_base + eid * per_edge + pos
                            # reversed edge: normal flips and L_j(1 - t) = (-1)^j L_j(t)
                            signs[row, i] = 1.0 if forward else (-1.0) ** (pos + 1)
                    else:
                        dofs[row, i] = interior_start[e] + pos
            dofs.setflags(write=False)
            signs.setflags(write=False)
            self._dofs[kind], self._signs[kind] = dofs, signs

    def group(self, kind: str):
        """Element ids, DOF table ``(n, nloc)`` and sign table for elements of ``kind``."""
        return self.mesh.groups[kind], self._dofs[kind], self._signs[kind]

    def element_dofs(self, e: int):
        kind = self.mesh.elements[e].kind
        ids = self.mesh.groups[kind]
        row = int(np.searchsorted(ids, e))
        return self._dofs[kind][row], self._signs[kind][row]

    def component_dofs(self, dofs, comp: int):
        return np.asarray(dofs) + comp * self.nscalar

    def tabulate(self, kind: str, points) -> Tabulation:
        """Physical basis values for every element of ``kind`` at reference ``points``."""
        ids, dofs, signs = self.group(kind)
        ref = self.refs[kind]
        coords = self.mesh.vertices[self.mesh.connectivity(kind)]
        x, J, det = map_points(kind, coords, points)
        if np.any(det <= 0):
            raise ElementError("inverted element encountered during tabulation")
        v, d = ref.tabulate(points)
        if self.family == RT:
            values = np.einsum("nqab,qib->nqia", J, v) / det[..., None, None]
            values *= signs[:, None, :, None]
            derivs = d[None] / det[..., None] * signs[:, None, :]
        else:
            values = np.broadcast_to(v, (len(ids),) + v.shape)
            # physical gradient = J^{-T} reference gradient
            inv = np.empty_like(J)
            inv[..., 0, 0] = J[..., 1, 1]
            inv[..., 1, 1] = J[..., 0, 0]
            inv[..., 0, 1] = -J[..., 0, 1]
            inv[..., 1, 0] = -J[..., 1, 0]
            inv /= det[..., None, None]
            derivs = np.einsum("nqba,qib->nqia", inv, d)
        return Tabulation(ids, x, det, values, derivs, dofs)


def build_space(mesh: Mesh, family: str, order: int, vdim: int = 1) -> FESpace:
    return FESpace(mesh, family, order, vdim)


def essential_boundary_dofs(space: FESpace) -> np.ndarray:
    """Sorted H1 DOFs located on boundary edges (all components)."""
    if space.family != H1:
        raise ElementError(
            f"essential boundary DOFs exist only for H1 spaces; {space.family} "
            "imposes the boundary condition naturally"
        )
    mesh = space.mesh
    bverts = {v for be in mesh.boundary for v in be.vertex_ids}
    dofs = set(bverts)
    per_edge = space.order - 1
    base = mesh.num_vertices
    for eid in mesh.boundary_edge_ids:
        dofs.update(range(base + eid * per_edge, base + (eid + 1) * per_edge))
    scalar = np.array(sorted(dofs), dtype=int)
    return np.concatenate([space.component_dofs(scalar, c) for c in range(space.vdim)])
