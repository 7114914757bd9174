"""Closed triangulated surfaces in R^3: data model, geometry and refinement.

Conventions used throughout the package:

* triangles are stored as vertex-index triples oriented so that
  ``(v1 - v0) x (v2 - v0)`` points outward;
* edges are the sorted, de-duplicated vertex pairs ``(i, j)`` with ``i < j``,
  ordered lexicographically;
* the local edge ``k`` of a triangle joins its corners ``k`` and ``k + 1``;
* refinement puts the midpoint of edge ``e`` at vertex index ``V + e`` and
  orders the children of cell ``c`` as ``4c + 0..3`` = corner-0, corner-1,
  corner-2, center.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np

#: Cells with area at or below this value are treated as degenerate.
DEGENERATE_AREA = 1e-14

Projection = Union[None, str, Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]]


class DegenerateCellError(ValueError):
    """A triangle has (numerically) zero area."""


class ProjectionError(ValueError):
    """A refinement midpoint cannot be projected onto the target surface."""


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Oriented triangulation of a closed surface.

    Attributes:
        vertices: ``(V, 3)`` float array of points.
        triangles: ``(F, 3)`` int array of vertex indices, outward oriented.
    """

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self) -> None:
        verts = np.ascontiguousarray(self.vertices, dtype=np.float64)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise ValueError(f"vertices must have shape (V, 3), got {verts.shape}")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise ValueError(f"triangles must have shape (F, 3), got {tris.shape}")
        if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
            raise ValueError("triangle references a vertex index out of range")
        verts.setflags(write=False)
        tris.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def _edge_data(self) -> tuple[np.ndarray, np.ndarray]:
        tris = self.triangles
        a = tris.ravel()
        b = np.roll(tris, -1, axis=1).ravel()
        pairs = np.stack([np.minimum(a, b), np.maximum(a, b)], axis=1)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        return edges, inverse.reshape(-1, 3)

    @property
    def edges(self) -> np.ndarray:
        """``(E, 2)`` sorted vertex pairs, lexicographically ordered."""
        return self._edge_data[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """``(F, 3)`` edge index of local edge ``k`` (corner ``k`` to ``k+1``)."""
        return self._edge_data[1]

    @cached_property
    def edge_triangles(self) -> list[list[int]]:
        """Incident triangles of every edge, in increasing triangle order."""
        incident: list[list[int]] = [[] for _ in range(self.n_edges)]
        for t, row in enumerate(self.triangle_edges):
            for e in row:
                incident[e].append(t)
        return incident

    @cached_property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_triangles

    @cached_property
    def areas(self) -> np.ndarray:
        return triangle_areas(self.vertices, self.triangles)

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())


@dataclass(frozen=True)
class TriangleGeometry:
    area: float
    unit_normal: np.ndarray
    projection_tensor: np.ndarray
    h_K: float
    inradius_K: float
    barycenter: np.ndarray


@dataclass(frozen=True)
class MeshQuality:
    h: float
    inradius_min: float
    shape_regularity: float


@dataclass(frozen=True, eq=False)
class NestedMeshPair:
    """A coarse mesh and its in-plane (unprojected) uniform refinement.

    Attributes:
        coarse: the density mesh.
        fine: the potential mesh; every coarse cell is split into 4 coplanar
            children whose midpoints stay in the parent's plane.
        children: ``(F, 4)`` fine-cell indices of each coarse cell.
        parent: ``(4F,)`` coarse parent of each fine cell.
        fine_vertex_origin: ``(V_fine, 2)`` coarse vertex pair a fine vertex
            comes from; ``(i, i)`` for an original vertex, ``(i, j)`` for the
            midpoint of coarse edge ``(i, j)``.
    """

    coarse: SurfaceMesh
    fine: SurfaceMesh
    children: np.ndarray
    parent: np.ndarray
    fine_vertex_origin: np.ndarray


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=1)


def triangle_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Unit normals following the stored orientation."""
    p = vertices[triangles]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    norm = np.linalg.norm(cross, axis=1)
    if np.any(0.5 * norm <= DEGENERATE_AREA):
        bad = np.flatnonzero(0.5 * norm <= DEGENERATE_AREA)
        raise DegenerateCellError(f"degenerate triangles: {bad[:10].tolist()}")
    return cross / norm[:, None]


def validate(mesh: SurfaceMesh) -> list[str]:
    """List every violated closed-surface invariant; empty means valid."""
    report: list[str] = []
    edges = mesh.edges
    for e, tris in enumerate(mesh.edge_triangles):
        i, j = edges[e]
        if len(tris) == 1:
            report.append(f"boundary edge ({i}, {j}) in triangle {tris[0]}")
        elif len(tris) > 2:
            report.append(f"non-manifold edge ({i}, {j}) shared by triangles {tris}")
        else:
            # each direction must occur exactly once across the two triangles
            directions = []
            for t in tris:
                row = mesh.triangles[t]
                k = int(np.flatnonzero(mesh.triangle_edges[t] == e)[0])
                directions.append(row[k] == i)
            if directions[0] == directions[1]:
                report.append(f"orientation mismatch on edge ({i}, {j}) between triangles {tris}")
    for t in np.flatnonzero(mesh.areas <= DEGENERATE_AREA):
        report.append(f"degenerate triangle {t} (area {mesh.areas[t]:.3e})")
    chi = mesh.euler_characteristic
    if chi != 2:
        report.append(f"euler characteristic {chi} != 2")
    return report


def triangle_geometry(mesh: SurfaceMesh, cell: int) -> TriangleGeometry:
    if not 0 <= cell < mesh.n_triangles:
        raise IndexError(f"cell {cell} out of range for {mesh.n_triangles} triangles")
    p = mesh.vertices[mesh.triangles[cell]]
    cross = np.cross(p[1] - p[0], p[2] - p[0])
    area = 0.5 * float(np.linalg.norm(cross))
    if area <= DEGENERATE_AREA:
        raise DegenerateCellError(f"triangle {cell} is degenerate (area {area:.3e})")
    n = cross / (2.0 * area)
    lengths = np.linalg.norm(p - np.roll(p, -1, axis=0), axis=1)
    return TriangleGeometry(
        area=area,
        unit_normal=n,
        projection_tensor=np.eye(3) - np.outer(n, n),
        h_K=float(lengths.max()),
        inradius_K=2.0 * area / float(lengths.sum()),
        barycenter=p.mean(axis=0),
    )


def mesh_quality(mesh: SurfaceMesh) -> MeshQuality:
    p = mesh.vertices[mesh.triangles]
    areas = mesh.areas
    if np.any(areas <= DEGENERATE_AREA):
        bad = np.flatnonzero(areas <= DEGENERATE_AREA)
        raise DegenerateCellError(f"degenerate triangles: {bad[:10].tolist()}")
    lengths = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
    h_k = lengths.max(axis=1)
    inradius = 2.0 * areas / lengths.sum(axis=1)
    return MeshQuality(
        h=float(h_k.max()),
        inradius_min=float(inradius.min()),
        shape_regularity=float((inradius / h_k).min()),
    )


def _radial(midpoints: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(midpoints, axis=1)
    if np.any(norms < 1e-14):
        raise ProjectionError("edge midpoint at the origin cannot be projected radially")
    return midpoints / norms[:, None]


def refine(mesh: SurfaceMesh, projection: Projection = None) -> tuple[SurfaceMesh, np.ndarray]:
    """Split every triangle into four through its edge midpoints.

    Args:
        mesh: the mesh to refine.
        projection: ``None`` keeps midpoints in the parent planes,
            ``"radial"`` moves them to the unit sphere, and a callable
            ``f(midpoints, a, b)`` receives ``(E, 3)`` midpoints and edge
            endpoints and returns the placed points.

    Returns:
        The refined mesh and the ``(4F,)`` parent index of each child.
    """
    verts = mesh.vertices
    edges = mesh.edges
    a, b = verts[edges[:, 0]], verts[edges[:, 1]]
    mids = 0.5 * (a + b)
    if projection == "radial":
        mids = _radial(mids, a, b)
    elif callable(projection):
        mids = np.asarray(projection(mids, a, b), dtype=np.float64)
    elif projection is not None:
        raise ValueError(f"unknown projection {projection!r}")

    nv = mesh.n_vertices
    m = nv + mesh.triangle_edges  # m[:, k] is the midpoint of corner k -> k+1
    t = mesh.triangles
    children = np.empty((mesh.n_triangles, 4, 3), dtype=np.int64)
    children[:, 0] = np.stack([t[:, 0], m[:, 0], m[:, 2]], axis=1)
    children[:, 1] = np.stack([m[:, 0], t[:, 1], m[:, 1]], axis=1)
    children[:, 2] = np.stack([m[:, 2], m[:, 1], t[:, 2]], axis=1)
    children[:, 3] = m
    fine = SurfaceMesh(np.vstack([verts, mids]), children.reshape(-1, 3))
    parent = np.repeat(np.arange(mesh.n_triangles), 4)
    return fine, parent


def build_nested_pair(coarse: SurfaceMesh) -> NestedMeshPair:
    fine, parent = refine(coarse, projection=None)
    nv = coarse.n_vertices
    origin = np.vstack([np.repeat(np.arange(nv), 2).reshape(-1, 2), coarse.edges])
    children = np.arange(4 * coarse.n_triangles).reshape(-1, 4)
    for arr in (children, parent, origin):
        arr.setflags(write=False)
    return NestedMeshPair(coarse, fine, children, parent, origin)


def orient_outward(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Flip triangles whose normal points toward the centroid of the vertices.

    Only meaningful for star-shaped surfaces around their centroid.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    triangles = np.array(triangles, dtype=np.int64)
    p = vertices[triangles]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    inward = np.einsum("ij,ij->i", n, p.mean(axis=1) - vertices.mean(axis=0)) < 0
    triangles[inward] = triangles[inward][:, ::-1]
    return triangles


def tetrahedron(edge: float = 1.0) -> SurfaceMesh:
    """Regular tetrahedron surface with the given edge length."""
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64)
    v *= edge / (2.0 * np.sqrt(2.0))
    tris = orient_outward(v, [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])
    return SurfaceMesh(v, tris)


def octahedron() -> SurfaceMesh:
    """Octahedron inscribed in the unit sphere."""
    v = np.array(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.float64
    )
    tris = [[4, 0, 2], [4, 2, 1], [4, 1, 3], [4, 3, 0], [5, 2, 0], [5, 1, 2], [5, 3, 1], [5, 0, 3]]
    return SurfaceMesh(v, orient_outward(v, tris))


def signed_volume(mesh: SurfaceMesh) -> float:
    """Enclosed volume; positive for outward orientation."""
    p = mesh.vertices[mesh.triangles]
    return float(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0)
