"""P1/P0 surface finite elements on a nested mesh pair.

The potential is continuous piecewise linear on the fine mesh, the density
piecewise constant on the coarse mesh.  On each flat fine triangle the
tangential gradient of a P1 function is the in-plane gradient of its affine
interpolant, so every integral needed here is exact cell by cell.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .mesh import DEGENERATE_AREA, DegenerateCellError, NestedMeshPair


class DomainError(ValueError):
    """A field violates its sign constraint (e.g. negative density)."""


def local_p1_gradients(p: np.ndarray) -> np.ndarray:
    """In-plane gradients of the three nodal basis functions of a triangle.

    Args:
        p: ``(3, 3)`` vertices, or ``(N, 3, 3)`` for a batch.

    Returns:
        Array of the same shape; row ``j`` is the gradient of the affine
        function equal to 1 at vertex ``j`` and 0 at the others.
    """
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 2
    if single:
        p = p[None]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    twice_area = np.linalg.norm(cross, axis=1)
    if np.any(0.5 * twice_area <= DEGENERATE_AREA):
        raise DegenerateCellError("cannot build P1 gradients on a degenerate triangle")
    n = cross / twice_area[:, None]
    # grad(lambda_j) = n x (edge opposite to j, oriented) / (2 area)
    opposite = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grads = np.cross(n[:, None, :], opposite) / twice_area[:, None, None]
    return grads[0] if single else grads


@dataclass(frozen=True, eq=False)
class GradientCache:
    """Geometry of a nested pair that never changes during a run.

    Attributes:
        grads: ``(F_fine, 3, 3)`` basis gradients per fine cell.
        fine_areas, coarse_areas: flat cell areas; a coarse area is the sum
            of its children's.
        local_stiffness: ``(F_fine, 3, 3)`` ``area * <g_a, g_b>``.
        weights: ``w_i`` = integral of the hat function ``i``.
        indptr, indices: CSR pattern of the stiffness matrix.
        slots: CSR data slot of every local stiffness entry.
    """

    pair: NestedMeshPair
    grads: np.ndarray
    fine_areas: np.ndarray
    coarse_areas: np.ndarray
    local_stiffness: np.ndarray
    weights: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    slots: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.pair.fine.n_vertices


_CACHES: "weakref.WeakKeyDictionary[NestedMeshPair, GradientCache]" = weakref.WeakKeyDictionary()


def gradient_cache(pair: NestedMeshPair) -> GradientCache:
    cache = _CACHES.get(pair)
    if cache is None:
        cache = _build_cache(pair)
        _CACHES[pair] = cache
    return cache


def _build_cache(pair: NestedMeshPair) -> GradientCache:
    fine = pair.fine
    tris = fine.triangles
    grads = local_p1_gradients(fine.vertices[tris])
    areas = fine.areas
    coarse_areas = areas[pair.children].sum(axis=1)
    local = areas[:, None, None] * np.einsum("tai,tbi->tab", grads, grads)

    n = fine.n_vertices
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    keys = rows * n + cols
    unique_keys, slots = np.unique(keys, return_inverse=True)
    urows, ucols = np.divmod(unique_keys, n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, urows + 1, 1)
    indptr = np.cumsum(indptr)
    weights = np.bincount(tris.ravel(), weights=np.repeat(areas / 3.0, 3), minlength=n)

    for arr in (grads, areas, coarse_areas, local, weights, indptr, ucols, slots):
        arr.setflags(write=False)
    return GradientCache(
        pair=pair,
        grads=grads,
        fine_areas=areas,
        coarse_areas=coarse_areas,
        local_stiffness=local,
        weights=weights,
        indptr=indptr,
        indices=ucols.astype(np.int64),
        slots=slots.astype(np.int64),
    )


def vertex_weights(pair: NestedMeshPair) -> np.ndarray:
    """``w_i`` = integral of hat function ``i`` (one third of incident fine areas)."""
    return gradient_cache(pair).weights


def assemble_stiffness(pair: NestedMeshPair, mu: np.ndarray) -> sp.csr_matrix:
    """Stiffness matrix ``A_ij = sum_T mu(parent T) area_T <g_i, g_j>``."""
    cache = gradient_cache(pair)
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (pair.coarse.n_triangles,):
        raise ValueError(f"mu must have one value per coarse cell, got shape {mu.shape}")
    if np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise DomainError("density must be finite and non-negative")
    values = (mu[pair.parent][:, None, None] * cache.local_stiffness).ravel()
    data = kernels.ACTIVE.scatter_add(cache.slots, values, len(cache.indices))
    n = cache.n_dofs
    return sp.csr_matrix((data, cache.indices, cache.indptr), shape=(n, n))


def assemble_rhs(
    pair: NestedMeshPair, source: np.ndarray, *, enforce_compatibility: bool = True
) -> np.ndarray:
    """Load vector of a fine-cell-constant source against the P1 basis.

    With ``enforce_compatibility`` the weighted mean is removed,
    ``b <- b - (sum b / sum w) w``, so ``b`` is orthogonal to the constants.
    """
    cache = gradient_cache(pair)
    source = np.asarray(source, dtype=np.float64)
    if source.shape != (pair.fine.n_triangles,):
        raise ValueError(f"source must have one value per fine cell, got shape {source.shape}")
    contrib = np.repeat(source * cache.fine_areas / 3.0, 3)
    b = np.bincount(pair.fine.triangles.ravel(), weights=contrib, minlength=cache.n_dofs)
    if enforce_compatibility:
        w = cache.weights
        b = b - (b.sum() / w.sum()) * w
    return b


def fine_gradients(pair: NestedMeshPair, u: np.ndarray) -> np.ndarray:
    """``(F_fine, 3)`` constant gradient of ``u`` on every fine cell."""
    cache = gradient_cache(pair)
    return np.einsum("ta,tai->ti", np.asarray(u)[pair.fine.triangles], cache.grads)


def cell_gradients(pair: NestedMeshPair, u: np.ndarray) -> np.ndarray:
    """``(F_coarse, 3)`` arithmetic mean of the 4 child gradients per coarse cell."""
    return fine_gradients(pair, u)[pair.children].mean(axis=1)


def cell_gradient(pair: NestedMeshPair, u: np.ndarray, r: int) -> np.ndarray:
    cache = gradient_cache(pair)
    kids = pair.children[r]
    tris = pair.fine.triangles[kids]
    g = np.einsum("ta,tai->ti", np.asarray(u)[tris], cache.grads[kids])
    return g.mean(axis=0)


def lyapunov(pair: NestedMeshPair, mu: np.ndarray, u: np.ndarray) -> float:
    """Energy plus mass: ``1/2 int mu |grad u|^2 + 1/2 int mu`` on flat cells."""
    cache = gradient_cache(pair)
    mu = np.asarray(mu, dtype=np.float64)
    g = fine_gradients(pair, u)
    energy = np.dot(mu[pair.parent] * cache.fine_areas, np.einsum("ti,ti->t", g, g))
    mass = np.dot(mu, cache.coarse_areas)
    return 0.5 * float(energy) + 0.5 * float(mass)
