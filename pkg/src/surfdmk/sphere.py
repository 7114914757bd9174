"""Unit-sphere benchmark: aligned meshes, polar coordinates and the exact solution.

Two unit densities live on geodesic quadrilaterals in the longitude sector
``[0, pi/2]``: the source on the colatitude band ``(pi/6, pi/3)`` and the
sink on ``(2pi/3, 5pi/6)``.  Mass is transported south along meridians, so
the transport density, the potential ``-r`` and the Beckmann field are known
in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import NestedMeshPair, SurfaceMesh, refine

#: Wasserstein-1 distance between the two densities.
EXACT_W1 = 0.876739625901484

POLE_TOL = 1e-12


class ConfigurationError(ValueError):
    """Invalid mesh-construction parameters."""


@dataclass(frozen=True)
class PolarPoint:
    """Colatitude ``r`` from the north pole and longitude ``phi`` in ``[0, 2pi)``."""

    r: float
    phi: float
    pole: bool = False


@dataclass(frozen=True)
class TestCaseSpec:
    band_radii: tuple[float, float, float, float] = (np.pi / 6, np.pi / 3, 2 * np.pi / 3, 5 * np.pi / 6)
    sector: tuple[float, float] = (0.0, np.pi / 2)
    density_value: float = 1.0

    __test__ = False  # not a pytest class


TEST_CASE = TestCaseSpec()


def sphere_aligned_mesh(n_r: int = 12, n_phi: int = 16) -> SurfaceMesh:
    """Latitude-longitude triangulation of the unit sphere with pole fans.

    Parallels sit at ``r = j pi / n_r`` and meridians at ``phi = 2 pi i / n_phi``,
    so with ``n_r % 12 == 0`` and ``n_phi % 4 == 0`` the support boundaries
    are unions of mesh edges.
    """
    if n_r < 12 or n_r % 12:
        raise ConfigurationError(f"n_r must be a positive multiple of 12, got {n_r}")
    if n_phi < 4 or n_phi % 4:
        raise ConfigurationError(f"n_phi must be a positive multiple of 4, got {n_phi}")

    rings = np.arange(1, n_r) * np.pi / n_r
    phis = np.arange(n_phi) * 2 * np.pi / n_phi
    rr, pp = np.meshgrid(rings, phis, indexing="ij")
    ring_pts = np.stack(
        [np.sin(rr) * np.cos(pp), np.sin(rr) * np.sin(pp), np.cos(rr)], axis=-1
    ).reshape(-1, 3)
    vertices = np.vstack([[0.0, 0.0, 1.0], ring_pts, [0.0, 0.0, -1.0]])
    north, south = 0, len(vertices) - 1

    def vid(j: int, i: int) -> int:
        # j: ring index 0..n_r-2, i: meridian index (periodic)
        return 1 + j * n_phi + (i % n_phi)

    tris = []
    for i in range(n_phi):
        tris.append((north, vid(0, i), vid(0, i + 1)))
    for j in range(n_r - 2):
        for i in range(n_phi):
            a, b = vid(j, i), vid(j + 1, i)
            c, d = vid(j + 1, i + 1), vid(j, i + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    for i in range(n_phi):
        tris.append((vid(n_r - 2, i), south, vid(n_r - 2, i + 1)))
    return SurfaceMesh(vertices, np.array(tris, dtype=np.int64))


def aligned_projection(midpoints: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Place refinement midpoints on the unit sphere without breaking alignment.

    Midpoints of edges lying on a parallel (equal ``z`` at both ends) are
    moved horizontally onto that parallel; all others are projected radially,
    which keeps meridian edges on their meridian.
    """
    out = midpoints / np.linalg.norm(midpoints, axis=1)[:, None]
    on_parallel = np.abs(a[:, 2] - b[:, 2]) <= 1e-14
    if np.any(on_parallel):
        m = midpoints[on_parallel]
        z = m[:, 2]
        rho = np.sqrt(np.maximum(1.0 - z * z, 0.0))
        horiz = np.linalg.norm(m[:, :2], axis=1)
        out[on_parallel, :2] = m[:, :2] * (rho / horiz)[:, None]
        out[on_parallel, 2] = z
    return out


def sphere_level_mesh(level: int, n_r: int = 12, n_phi: int = 16) -> SurfaceMesh:
    """Base aligned mesh refined ``level`` times with midpoints moved to the sphere."""
    mesh = sphere_aligned_mesh(n_r, n_phi)
    for _ in range(level):
        mesh, _ = refine(mesh, projection=aligned_projection)
    return mesh


def to_polar(x) -> PolarPoint:
    x = np.asarray(x, dtype=np.float64)
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        raise ValueError("the zero vector has no polar coordinates")
    x = x / norm
    r = float(np.arccos(np.clip(x[2], -1.0, 1.0)))
    if np.sin(r) < POLE_TOL:
        return PolarPoint(r, 0.0, pole=True)
    phi = float(np.arctan2(x[1], x[0])) % (2 * np.pi)
    return PolarPoint(r, phi)


def polar_arrays(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`to_polar` for ``(N, 3)`` points; pole longitudes are 0."""
    x = np.asarray(x, dtype=np.float64)
    x = x / np.linalg.norm(x, axis=1)[:, None]
    r = np.arccos(np.clip(x[:, 2], -1.0, 1.0))
    phi = np.arctan2(x[:, 1], x[:, 0]) % (2 * np.pi)
    phi[np.sin(r) < POLE_TOL] = 0.0
    return r, phi


def embed(r, phi) -> np.ndarray:
    r, phi = np.asarray(r, dtype=np.float64), np.asarray(phi, dtype=np.float64)
    return np.stack([np.sin(r) * np.cos(phi), np.sin(r) * np.sin(phi), np.cos(r)], axis=-1)


def _source_density(r: np.ndarray, phi: np.ndarray) -> np.ndarray:
    r1, r2, r3, r4 = TEST_CASE.band_radii
    lo, hi = TEST_CASE.sector
    in_sector = (phi > lo) & (phi < hi)
    out = np.zeros(np.broadcast(r, phi).shape)
    out[in_sector & (r > r1) & (r < r2)] = TEST_CASE.density_value
    out[in_sector & (r > r3) & (r < r4)] = -TEST_CASE.density_value
    return out


def _exact_tdens(r: np.ndarray, phi: np.ndarray) -> np.ndarray:
    r1, r2, r3, r4 = TEST_CASE.band_radii
    lo, hi = TEST_CASE.sector
    r = np.asarray(r, dtype=np.float64)
    c = np.cos(r1)
    s = np.sin(r)
    safe = np.where(s > 0, s, 1.0)
    branch1 = (c - np.cos(r)) / safe
    branch2 = (c - np.cos(r2)) / safe
    branch3 = (c + np.cos(r)) / safe
    in_sector = (phi >= lo) & (phi <= hi)
    out = np.select(
        [(r >= r1) & (r <= r2), (r > r2) & (r < r3), (r >= r3) & (r <= r4)],
        [branch1, branch2, branch3],
        default=0.0,
    )
    return np.where(in_sector, np.maximum(out, 0.0), 0.0)


def source_density(p: PolarPoint) -> float:
    """``f+ - f-`` at a point: +1, -1 inside the open supports, 0 elsewhere."""
    return float(_source_density(np.array(p.r), np.array(p.phi)))


def exact_tdens(p: PolarPoint) -> float:
    return float(_exact_tdens(np.array(p.r), np.array(p.phi)))


def exact_potential(p: PolarPoint) -> float:
    return -p.r


def source_density_at(x: np.ndarray) -> np.ndarray:
    """``f+ - f-`` at ``(N, 3)`` points, classified by their radial projection."""
    return _source_density(*polar_arrays(x))


def exact_tdens_at(x: np.ndarray) -> np.ndarray:
    return _exact_tdens(*polar_arrays(x))


def exact_potential_at(x: np.ndarray) -> np.ndarray:
    return -polar_arrays(x)[0]


def exact_velocity_at(x: np.ndarray) -> np.ndarray:
    """Beckmann field at ``(N, 3)`` points: density times the southward unit meridian."""
    r, phi = polar_arrays(x)
    mag = _exact_tdens(r, phi)
    south = np.stack([np.cos(r) * np.cos(phi), np.cos(r) * np.sin(phi), -np.sin(r)], axis=-1)
    return mag[:, None] * south


def exact_velocity(x) -> np.ndarray:
    return exact_velocity_at(np.atleast_2d(np.asarray(x, dtype=np.float64)))[0]


def exact_w1() -> float:
    return EXACT_W1


def band_mass() -> float:
    """Mass of each density: area of one geodesic quadrilateral."""
    r1, r2, _, _ = TEST_CASE.band_radii
    return (TEST_CASE.sector[1] - TEST_CASE.sector[0]) * (np.cos(r1) - np.cos(r2))


@dataclass(frozen=True, eq=False)
class SphereProblem:
    """Level-``L`` benchmark instance: nested pair, fine-cell source and load."""

    level: int
    pair: NestedMeshPair
    source: np.ndarray
    b: np.ndarray


def sphere_problem(level: int, n_r: int = 12, n_phi: int = 16) -> SphereProblem:
    from .fem import assemble_rhs
    from .mesh import build_nested_pair  # noqa: PLC0415

    pair = build_nested_pair(sphere_level_mesh(level, n_r, n_phi))
    source = source_density_at(pair.fine.barycenters)
    return SphereProblem(level, pair, source, assemble_rhs(pair, source))
