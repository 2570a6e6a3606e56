import numpy as np
import pytest

from femcompare.mesh import LOCAL_EDGES, REFERENCE_VERTICES, load_star_mesh, mesh_from_arrays, uniform_refine, unit_square_mesh

_ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_report():
    """Record a one-line verdict, echo it, and return the flag for asserting."""

    def record(number, title, ok, detail=""):
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}" + (f": {detail}" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


@pytest.fixture(scope="session")
def star():
    return load_star_mesh()


@pytest.fixture(scope="session")
def unit_square():
    return unit_square_mesh()


@pytest.fixture(scope="session")
def square4():
    return uniform_refine(unit_square_mesh(), 2)


@pytest.fixture(scope="session")
def hybrid():
    """A quad next to two triangles on [0, 2] x [0, 1]."""
    verts = [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1)]
    return mesh_from_arrays(verts, [(0, 1, 4, 3), (1, 2, 5), (1, 5, 4)])


@pytest.fixture(scope="session")
def distorted():
    """2 x 2 quads with a displaced centre vertex (non-affine elements)."""
    verts = [(x, y) for y in (0, 0.5, 1) for x in (0, 0.5, 1)]
    verts[4] = (0.6, 0.42)
    cells = [(0, 1, 4, 3), (1, 2, 5, 4), (3, 4, 7, 6), (4, 5, 8, 7)]
    return mesh_from_arrays(verts, cells)


@pytest.fixture(scope="session")
def triangles():
    """Unit square split into 4 triangles around (0.45, 0.55)."""
    verts = [(0, 0), (1, 0), (1, 1), (0, 1), (0.45, 0.55)]
    return mesh_from_arrays(verts, [(0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)])


def shared_edge_points(mesh, t):
    """For every interior edge, reference points on both neighbours that map to
    the same physical points; yields ``(e1, pts1, e2, pts2, normal)``.
    """
    for eid, (e1, e2) in enumerate(mesh.edge_elements):
        if e2 < 0:
            continue
        a, b = mesh.edges[eid]
        out = []
        for e in (e1, e2):
            el = mesh.elements[e]
            ref = REFERENCE_VERTICES[el.kind]
            for la, lb in LOCAL_EDGES[el.kind]:
                va, vb = el.vertex_ids[la], el.vertex_ids[lb]
                if {va, vb} == {a, b}:
                    s = t if va == a else 1 - t
                    out.append(ref[la] + s[:, None] * (ref[lb] - ref[la]))
        tau = mesh.vertices[b] - mesh.vertices[a]
        yield e1, out[0], e2, out[1], np.array([tau[1], -tau[0]]) / np.linalg.norm(tau)
