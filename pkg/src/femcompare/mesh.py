"""Two-dimensional unstructured meshes of triangles and quadrilaterals.

Meshes are read from the MFEM v1.0 text format (2D subset), can be
uniformly refined, and expose the straight-sided element maps used by the
rest of the package.

Reference conventions used throughout:

* triangle: vertices (0, 0), (1, 0), (0, 1)
* quadrilateral: the unit square [0, 1]^2, vertices counterclockwise from
  the origin

Local edge ``i`` of an element joins local vertices ``i`` and ``i + 1``
(cyclically), so for counterclockwise elements the right-hand normal of the
edge tangent points outward.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TRIANGLE = "triangle"
QUADRILATERAL = "quadrilateral"

#: MFEM geometry codes understood by the parser.
GEOMETRY_CODES = {2: TRIANGLE, 3: QUADRILATERAL}
SEGMENT_CODE = 1
_CODE_OF = {TRIANGLE: 2, QUADRILATERAL: 3}

REFERENCE_VERTICES = {
    TRIANGLE: np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    QUADRILATERAL: np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
}
LOCAL_EDGES = {
    TRIANGLE: ((0, 1), (1, 2), (2, 0)),
    QUADRILATERAL: ((0, 1), (1, 2), (2, 3), (3, 0)),
}
REFERENCE_AREA = {TRIANGLE: 0.5, QUADRILATERAL: 1.0}
NUM_VERTICES = {TRIANGLE: 3, QUADRILATERAL: 4}


class MeshError(ValueError):
    """Raised for meshes that violate the topological or geometric invariants."""


class MeshParseError(MeshError):
    """Raised for malformed mesh files; ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class InvertedElementError(MeshError):
    pass


@dataclass(frozen=True)
class Vertex:
    x: float
    y: float


@dataclass(frozen=True)
class Element:
    kind: str
    vertex_ids: tuple[int, ...]
    attribute: int = 1


@dataclass(frozen=True)
class BoundaryEdge:
    vertex_ids: tuple[int, int]
    attribute: int = 1


# -- reference maps -----------------------------------------------------------


def geometry_shape(kind: str, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vertex shape functions of the straight-sided map and their gradients.

    Returns ``N`` with shape ``(q, nv)`` and ``dN`` with shape ``(q, nv, 2)``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    xi, eta = pts[:, 0], pts[:, 1]
    if kind == QUADRILATERAL:
        N = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta], axis=1)
        dxi = np.stack([-(1 - eta), 1 - eta, eta, -eta], axis=1)
        deta = np.stack([-(1 - xi), -xi, xi, 1 - xi], axis=1)
        dN = np.stack([dxi, deta], axis=2)
    elif kind == TRIANGLE:
        N = np.stack([1 - xi - eta, xi, eta], axis=1)
        dN = np.broadcast_to(
            np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]), (len(pts), 3, 2)
        ).copy()
    else:
        raise MeshError(f"unsupported geometry {kind!r}")
    return N, dN


def map_points(kind: str, coords: np.ndarray, points: np.ndarray):
    """Physical points, Jacobians and determinants for a batch of elements.

    Parameters
    ----------
    coords : array, shape (n, nv, 2)
        Vertex coordinates of ``n`` elements of the same kind.
    points : array, shape (q, 2)
        Reference points.

    Returns
    -------
    x : (n, q, 2), J : (n, q, 2, 2), detJ : (n, q)
        ``J[..., a, b] = d x_a / d xi_b``.
    """
    N, dN = geometry_shape(kind, points)
    x = np.einsum("qv,nva->nqa", N, coords)
    J = np.einsum("qvb,nva->nqab", dN, coords)
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    return x, J, detJ


def inside_reference(kind: str, points: np.ndarray, tol: float = 1e-12) -> bool:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    xi, eta = pts[:, 0], pts[:, 1]
    ok = (xi >= -tol) & (eta >= -tol)
    if kind == QUADRILATERAL:
        ok &= (xi <= 1 + tol) & (eta <= 1 + tol)
    else:
        ok &= xi + eta <= 1 + tol
    return bool(np.all(ok))


@dataclass(frozen=True)
class ElementGeometry:
    """The straight-sided map from the reference element onto one element."""

    kind: str
    coords: np.ndarray

    def map(self, points) -> np.ndarray:
        x, _, _ = map_points(self.kind, self.coords[None], np.atleast_2d(points))
        return x[0]

    def jacobian(self, points) -> np.ndarray:
        _, J, _ = map_points(self.kind, self.coords[None], np.atleast_2d(points))
        return J[0]

    def det(self, points) -> np.ndarray:
        _, _, d = map_points(self.kind, self.coords[None], np.atleast_2d(points))
        return d[0]

    def check_orientation(self, points=None):
        """Raise :class:`InvertedElementError` unless det J > 0 at ``points``.

        By default the reference vertices are used; the determinant of a
        straight-sided map is affine in each reference coordinate, so
        positivity at the corners implies positivity everywhere.
        """
        if points is None:
            points = REFERENCE_VERTICES[self.kind]
        d = self.det(points)
        if np.any(d <= 0):
            raise InvertedElementError(
                f"inverted or degenerate {self.kind} (min det J = {d.min():.3e})"
            )


# -- mesh ---------------------------------------------------------------------


@dataclass(frozen=True)
class Mesh:
    """An immutable conforming 2D mesh.

    ``vertices`` is a ``(nv, 2)`` float array. Construction validates index
    ranges, edge sharing, the boundary list and element orientation.
    """

    vertices: np.ndarray
    elements: tuple[Element, ...]
    boundary: tuple[BoundaryEdge, ...]
    dimension: int = field(default=2)

    def __post_init__(self):
        verts = np.ascontiguousarray(np.asarray(self.vertices, dtype=float).reshape(-1, 2))
        verts.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(self, "boundary", tuple(self.boundary))
        self._validate()

    def _validate(self):
        if self.dimension != 2:
            raise MeshError("only 2D meshes are supported")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("vertex coordinates must be finite")
        nv = len(self.vertices)
        for i, el in enumerate(self.elements):
            if el.kind not in NUM_VERTICES:
                raise MeshError(f"element {i}: unknown kind {el.kind!r}")
            if len(el.vertex_ids) != NUM_VERTICES[el.kind]:
                raise MeshError(f"element {i}: wrong vertex count")
            if len(set(el.vertex_ids)) != len(el.vertex_ids):
                raise MeshError(f"element {i}: repeated vertex")
            if min(el.vertex_ids) < 0 or max(el.vertex_ids) >= nv:
                raise MeshError(f"element {i}: vertex index out of range")
        for i, be in enumerate(self.boundary):
            if len(be.vertex_ids) != 2 or min(be.vertex_ids) < 0 or max(be.vertex_ids) >= nv:
                raise MeshError(f"boundary edge {i}: vertex index out of range")
        on_boundary = self.edge_elements[:, 1] < 0
        bkeys = set()
        for i, be in enumerate(self.boundary):
            key = (min(be.vertex_ids), max(be.vertex_ids))
            eid = self._edge_index.get(key)
            if eid is None or not on_boundary[eid]:
                raise MeshError(f"boundary edge {i} {be.vertex_ids} is not an edge of exactly one element")
            bkeys.add(eid)
        missing = set(np.flatnonzero(on_boundary)) - bkeys
        if missing:
            e = self.edges[min(missing)]
            raise MeshError(f"edge {tuple(e)} lies on one element but is not in the boundary list")
        for kind, ids in self.groups.items():
            _, _, det = map_points(kind, self.vertices[self.connectivity(kind)], REFERENCE_VERTICES[kind])
            bad = np.flatnonzero(np.any(det <= 0, axis=1))
            if len(bad):
                raise InvertedElementError(f"element {ids[bad[0]]} is inverted (clockwise or degenerate)")

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_elements(self) -> int:
        return len(self.elements)

    @cached_property
    def groups(self) -> dict[str, np.ndarray]:
        """Element indices grouped by kind, in a fixed kind order."""
        out = {}
        for kind in (TRIANGLE, QUADRILATERAL):
            ids = np.array([i for i, e in enumerate(self.elements) if e.kind == kind], dtype=int)
            if len(ids):
                out[kind] = ids
        return out

    def connectivity(self, kind: str) -> np.ndarray:
        ids = self.groups.get(kind, np.zeros(0, int))
        return np.array([self.elements[i].vertex_ids for i in ids], dtype=int).reshape(
            len(ids), NUM_VERTICES[kind]
        )

    # cached_property writes to __dict__ directly, so it works on frozen instances
    @cached_property
    def _topology(self):
        index: dict[tuple[int, int], int] = {}
        edges: list[tuple[int, int]] = []
        owners: list[list[int]] = []
        elem_edges = []
        for ei, el in enumerate(self.elements):
            row = []
            for a, b in LOCAL_EDGES[el.kind]:
                va, vb = el.vertex_ids[a], el.vertex_ids[b]
                key = (min(va, vb), max(va, vb))
                eid = index.get(key)
                if eid is None:
                    eid = index[key] = len(edges)
                    edges.append(key)
                    owners.append([])
                owners[eid].append(ei)
                row.append(eid)
            elem_edges.append(tuple(row))
        ee = np.full((len(edges), 2), -1, dtype=int)
        for eid, own in enumerate(owners):
            if len(own) > 2:
                raise MeshError(f"edge {edges[eid]} is shared by {len(own)} elements")
            ee[eid, : len(own)] = own
        return index, np.array(edges, dtype=int).reshape(-1, 2), ee, tuple(elem_edges)

    @property
    def _edge_index(self) -> dict:
        return self._topology[0]

    @property
    def edges(self) -> np.ndarray:
        """Global edges ``(lo, hi)`` in order of first appearance."""
        return self._topology[1]

    @property
    def num_edges(self) -> int:
        return len(self._topology[1])

    @property
    def edge_elements(self) -> np.ndarray:
        """``(num_edges, 2)`` adjacent element ids; -1 marks a boundary side."""
        return self._topology[2]

    @property
    def element_edges(self) -> tuple[tuple[int, ...], ...]:
        return self._topology[3]

    def edge_id(self, a: int, b: int) -> int:
        return self._edge_index[(min(a, b), max(a, b))]

    @cached_property
    def boundary_edge_ids(self) -> np.ndarray:
        return np.array(sorted(self.edge_id(*be.vertex_ids) for be in self.boundary), dtype=int)

    def element_geometry(self, elem: int) -> ElementGeometry:
        if not 0 <= elem < self.num_elements:
            raise IndexError(f"element index {elem} out of range")
        el = self.elements[elem]
        return ElementGeometry(el.kind, self.vertices[list(el.vertex_ids)].copy())

    def area(self) -> float:
        """Total area, integrated with the exact (degree 2) rule per element."""
        from .quadrature import rule_for_geometry

        total = 0.0
        for kind in self.groups:
            rule = rule_for_geometry(kind, 2)
            _, _, det = map_points(kind, self.vertices[self.connectivity(kind)], rule.points)
            total += float(np.sum(det * rule.weights))
        return total


def element_geometry(mesh: Mesh, elem: int) -> ElementGeometry:
    """Geometry map of element ``elem``; raises on inverted elements."""
    geo = mesh.element_geometry(elem)
    geo.check_orientation()
    return geo


# -- parsing and writing ------------------------------------------------------


def _tokens(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def parse_mfem_mesh(text) -> Mesh:
    """Parse an MFEM v1.0 mesh (2D, straight triangles/quads) from text or a stream."""
    if not isinstance(text, str):
        text = text.read()
    lines = list(_tokens(text))
    if not lines:
        raise MeshParseError("empty mesh file", 1)
    lineno, header = lines[0]
    if header != "MFEM mesh v1.0":
        raise MeshParseError(f"unsupported header {header!r}", lineno)
    pos = 1
    dimension = None
    elements: list[Element] = []
    boundary: list[BoundaryEdge] = []
    vertices = None

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise MeshParseError("unexpected end of file", lines[-1][0])
        item = lines[pos]
        pos += 1
        return item

    def take_int(what):
        ln, s = take()
        try:
            return ln, int(s)
        except ValueError:
            raise MeshParseError(f"expected integer {what}, got {s!r}", ln) from None

    def take_ints(ln, s):
        try:
            return [int(t) for t in s.split()]
        except ValueError:
            raise MeshParseError(f"non-integer entry in {s!r}", ln) from None

    while pos < len(lines):
        ln, key = take()
        if key == "dimension":
            ln, dimension = take_int("dimension")
            if dimension != 2:
                raise MeshParseError(f"only dimension 2 is supported, got {dimension}", ln)
        elif key == "elements":
            _, n = take_int("element count")
            for _ in range(n):
                ln, s = take()
                vals = take_ints(ln, s)
                if len(vals) < 2 or vals[1] not in GEOMETRY_CODES:
                    raise MeshParseError(f"unknown element geometry in {s!r}", ln)
                kind = GEOMETRY_CODES[vals[1]]
                if len(vals) != 2 + NUM_VERTICES[kind]:
                    raise MeshParseError(f"wrong number of vertices for {kind}", ln)
                elements.append(Element(kind, tuple(vals[2:]), vals[0]))
        elif key == "boundary":
            _, n = take_int("boundary count")
            for _ in range(n):
                ln, s = take()
                vals = take_ints(ln, s)
                if len(vals) != 4 or vals[1] != SEGMENT_CODE:
                    raise MeshParseError(f"boundary rows must be 'attr 1 v0 v1', got {s!r}", ln)
                boundary.append(BoundaryEdge((vals[2], vals[3]), vals[0]))
        elif key == "vertices":
            _, n = take_int("vertex count")
            ln, vdim = take_int("vertex dimension")
            if vdim != 2:
                raise MeshParseError(f"vertex dimension must be 2, got {vdim}", ln)
            vertices = np.empty((n, 2))
            for i in range(n):
                ln, s = take()
                parts = s.split()
                if len(parts) != 2:
                    raise MeshParseError(f"expected 2 coordinates, got {s!r}", ln)
                try:
                    vertices[i] = [float(parts[0]), float(parts[1])]
                except ValueError:
                    raise MeshParseError(f"bad coordinate in {s!r}", ln) from None
        else:
            raise MeshParseError(f"unknown section {key!r}", ln)

    if dimension is None:
        raise MeshParseError("missing 'dimension' section", lines[-1][0])
    if vertices is None:
        raise MeshParseError("missing 'vertices' section", lines[-1][0])
    _check_ranges(lines, elements, boundary, len(vertices))
    return Mesh(vertices, tuple(elements), tuple(boundary))


def _check_ranges(lines, elements, boundary, nv):
    # report range errors against the source line of the offending row
    row_lines = {}
    section = None
    count = 0
    for ln, s in lines:
        if s in ("elements", "boundary", "vertices", "dimension"):
            section, count = s, -1
            continue
        if section in ("elements", "boundary"):
            if count >= 0:
                row_lines[(section, count)] = ln
            count += 1
    for i, el in enumerate(elements):
        if min(el.vertex_ids) < 0 or max(el.vertex_ids) >= nv:
            raise MeshParseError("element vertex index out of range", row_lines.get(("elements", i)))
    for i, be in enumerate(boundary):
        if min(be.vertex_ids) < 0 or max(be.vertex_ids) >= nv:
            raise MeshParseError("boundary vertex index out of range", row_lines.get(("boundary", i)))


def load_mesh(path) -> Mesh:
    return parse_mfem_mesh(Path(path).read_text())


def star_mesh_path() -> Path:
    """Path of the bundled MFEM ``star.mesh`` (20 rhombic quadrilaterals)."""
    return Path(str(resources.files("femcompare").joinpath("data/star.mesh")))


def load_star_mesh() -> Mesh:
    return load_mesh(star_mesh_path())


def serialize_mesh(mesh: Mesh) -> str:
    """Write ``mesh`` in MFEM v1.0 format; coordinates round-trip exactly."""
    out = io.StringIO()
    out.write("MFEM mesh v1.0\n\ndimension\n2\n\nelements\n")
    out.write(f"{mesh.num_elements}\n")
    for el in mesh.elements:
        out.write(" ".join(map(str, (el.attribute, _CODE_OF[el.kind], *el.vertex_ids))) + "\n")
    out.write(f"\nboundary\n{len(mesh.boundary)}\n")
    for be in mesh.boundary:
        out.write(" ".join(map(str, (be.attribute, SEGMENT_CODE, *be.vertex_ids))) + "\n")
    out.write(f"\nvertices\n{mesh.num_vertices}\n2\n")
    for x, y in mesh.vertices:
        out.write(f"{float(x)!r} {float(y)!r}\n")
    return out.getvalue()


def unit_square_mesh() -> Mesh:
    """The single quadrilateral [0, 1]^2 with its four boundary edges."""
    return Mesh(
        REFERENCE_VERTICES[QUADRILATERAL],
        (Element(QUADRILATERAL, (0, 1, 2, 3)),),
        tuple(BoundaryEdge(e) for e in LOCAL_EDGES[QUADRILATERAL]),
    )


def mesh_from_arrays(vertices, cells: Sequence[Sequence[int]], attributes: Iterable[int] | None = None) -> Mesh:
    """Build a mesh from vertex coordinates and cells, deriving the boundary."""
    cells = [tuple(int(v) for v in c) for c in cells]
    attrs = list(attributes) if attributes is not None else [1] * len(cells)
    kinds = {3: TRIANGLE, 4: QUADRILATERAL}
    elements = tuple(Element(kinds[len(c)], c, a) for c, a in zip(cells, attrs))
    count: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for el in elements:
        for a, b in LOCAL_EDGES[el.kind]:
            va, vb = el.vertex_ids[a], el.vertex_ids[b]
            count.setdefault((min(va, vb), max(va, vb)), []).append((va, vb))
    boundary = tuple(BoundaryEdge(v[0]) for v in count.values() if len(v) == 1)
    return Mesh(np.asarray(vertices, dtype=float), elements, boundary)


# -- refinement and size ------------------------------------------------------


def uniform_refine(mesh: Mesh, times: int = 1) -> Mesh:
    """Split every element into four; ``times=0`` returns ``mesh`` itself.

    New vertices are numbered after the old ones: edge midpoints in global
    edge order, then quadrilateral centroids in element order.
    """
    if times < 0:
        raise ValueError("refinement count must be nonnegative")
    for _ in range(times):
        mesh = _refine_once(mesh)
    return mesh


def _refine_once(mesh: Mesh) -> Mesh:
    nv = mesh.num_vertices
    edges = mesh.edges
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    quad_ids = [i for i, e in enumerate(mesh.elements) if e.kind == QUADRILATERAL]
    centre_of = {e: nv + len(edges) + j for j, e in enumerate(quad_ids)}
    centres = [mesh.vertices[list(mesh.elements[e].vertex_ids)].mean(axis=0) for e in quad_ids]
    new_vertices = np.vstack([mesh.vertices, mids] + ([np.array(centres)] if centres else []))

    children = []
    for ei, el in enumerate(mesh.elements):
        v = el.vertex_ids
        m = [nv + eid for eid in mesh.element_edges[ei]]
        if el.kind == QUADRILATERAL:
            c = centre_of[ei]
            quads = ((v[0], m[0], c, m[3]), (m[0], v[1], m[1], c), (c, m[1], v[2], m[2]), (m[3], c, m[2], v[3]))
            children.extend(Element(QUADRILATERAL, q, el.attribute) for q in quads)
        else:
            tris = ((v[0], m[0], m[2]), (m[0], v[1], m[1]), (m[2], m[1], v[2]), (m[0], m[1], m[2]))
            children.extend(Element(TRIANGLE, t, el.attribute) for t in tris)
    boundary = []
    for be in mesh.boundary:
        a, b = be.vertex_ids
        m = nv + mesh.edge_id(a, b)
        boundary.append(BoundaryEdge((a, m), be.attribute))
        boundary.append(BoundaryEdge((m, b), be.attribute))
    return Mesh(new_vertices, tuple(children), tuple(boundary))


# maps the equilateral "perfect" triangle onto the reference triangle
_PERFECT_TRIANGLE_INV = np.linalg.inv(np.array([[1.0, 0.5], [0.0, math.sqrt(3.0) / 2]]))


def element_diameters(mesh: Mesh) -> np.ndarray:
    """Largest vertex-to-vertex distance of every element."""
    out = np.empty(mesh.num_elements)
    for kind, ids in mesh.groups.items():
        xy = mesh.vertices[mesh.connectivity(kind)]
        d = np.linalg.norm(xy[:, :, None, :] - xy[:, None, :, :], axis=-1)
        out[ids] = d.reshape(len(ids), -1).max(axis=1)
    return out


def element_jacobian_sizes(mesh: Mesh) -> np.ndarray:
    """Largest singular value of the element Jacobian at the reference centre.

    Triangles are measured relative to the equilateral unit triangle, quads
    relative to the unit square.
    """
    out = np.empty(mesh.num_elements)
    centre = {QUADRILATERAL: [[0.5, 0.5]], TRIANGLE: [[1 / 3, 1 / 3]]}
    for kind, ids in mesh.groups.items():
        _, J, _ = map_points(kind, mesh.vertices[mesh.connectivity(kind)], np.array(centre[kind]))
        J = J[:, 0]
        if kind == TRIANGLE:
            J = J @ _PERFECT_TRIANGLE_INV
        out[ids] = np.linalg.svd(J, compute_uv=False)[:, 0]
    return out


def mesh_h(mesh: Mesh, metric: str = "diameter") -> float:
    """Mesh size: the maximum element size.

    ``metric="diameter"`` (default) uses the element diameter; ``"jacobian"``
    uses the largest singular value of the centre Jacobian, which is what
    MFEM's ``GetElementSize(i, 2)`` reports for straight elements.
    """
    if mesh.num_elements == 0:
        raise MeshError("mesh has no elements")
    if metric == "diameter":
        return float(element_diameters(mesh).max())
    if metric == "jacobian":
        return float(element_jacobian_sizes(mesh).max())
    raise ValueError(f"unknown size metric {metric!r}")
