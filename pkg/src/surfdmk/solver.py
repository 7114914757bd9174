"""Deflated preconditioned conjugate gradient for singular stiffness systems.

``A`` is symmetric positive semidefinite with the constant vector as kernel.
A consistent right-hand side has zero sum; the solution is pinned by the
weighted-mean constraint ``w^T u = 0``.  Two oblique projectors realise this
without touching ``A``:

* ``P u = u - (w^T u / w^T 1) 1`` moves iterates onto ``w^T u = 0`` along
  the kernel, leaving ``A u`` unchanged;
* ``P^T r = r - (1^T r / w^T 1) w`` removes the incompatible part of a
  residual.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from . import kernels

logger = logging.getLogger(__name__)

MAX_SHIFT = 1.0
MIN_SHIFT = 1e-8


class FactorizationError(RuntimeError):
    """IC(0) broke down even with the largest allowed diagonal shift."""


@dataclass(frozen=True, eq=False)
class IC0Factor:
    """Lower factor ``L`` with ``L L^T ~ A + shift * diag(A)`` on the pattern of ``A``."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    shift: float

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    def to_sparse(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))

    def __call__(self, r: np.ndarray) -> np.ndarray:
        k = kernels.ACTIVE
        y = k.forward(self.indptr, self.indices, self.data, r)
        return k.backward(self.indptr, self.indices, self.data, y)


class JacobiPreconditioner:
    """Diagonal fallback; zero diagonal entries act as identity."""

    def __init__(self, A: sp.spmatrix) -> None:
        d = A.diagonal().astype(np.float64)
        self.inv_diag = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.inv_diag * r


@dataclass(frozen=True, eq=False)
class DeflationSpace:
    """Zero-mean constraint ``w^T u = 0`` with constant-vector kernel."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or np.any(w <= 0):
            raise ValueError("deflation weights must be a strictly positive vector")
        object.__setattr__(self, "weights", w)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def project_solution(self, u: np.ndarray) -> np.ndarray:
        return u - np.dot(self.weights, u) / self.total

    def project_residual(self, r: np.ndarray) -> np.ndarray:
        return r - (r.sum() / self.total) * self.weights


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool
    preconditioner_rebuilt: bool = False


Preconditioner = Union[None, IC0Factor, JacobiPreconditioner, Callable[[np.ndarray], np.ndarray]]


def lower_triangle(A: sp.spmatrix) -> sp.csr_matrix:
    """Lower triangle of ``A`` (diagonal included) in canonical CSR."""
    L = sp.tril(A, format="csr")
    L.sum_duplicates()
    L.sort_indices()
    return L


def ic0_factorize(A: sp.spmatrix, shift: float = 0.0) -> IC0Factor:
    """Incomplete Cholesky with zero fill on ``A + shift * diag(A)``.

    On a non-positive pivot the shift grows as ``max(2 shift, 1e-8)`` and
    the factorization restarts, until the shift would exceed 1.
    """
    L = lower_triangle(A)
    n = L.shape[0]
    diag_pos = L.indptr[1:] - 1
    if n and np.any(L.indices[diag_pos] != np.arange(n)):
        raise FactorizationError("matrix has a structurally missing diagonal entry")
    base = L.data.astype(np.float64)
    diag = base[diag_pos].copy()
    indptr = L.indptr.astype(np.int64)
    indices = L.indices.astype(np.int64)
    alpha = float(shift)
    while True:
        data = base.copy()
        data[diag_pos] = diag * (1.0 + alpha)
        out, fail = kernels.ACTIVE.ic0(indptr, indices, data)
        if fail < 0:
            return IC0Factor(indptr, indices, out, alpha)
        logger.debug("IC(0) breakdown at row %d with shift %.3g", fail, alpha)
        alpha = max(2.0 * alpha, MIN_SHIFT)
        if alpha > MAX_SHIFT:
            raise FactorizationError(f"IC(0) breakdown at row {fail} even with shift {MAX_SHIFT}")


def default_maxit(n: int) -> int:
    return max(1, int(np.ceil(10.0 * np.sqrt(n))))


def pcg_solve(
    A: sp.spmatrix,
    b: np.ndarray,
    precond: Preconditioner = None,
    deflation: Optional[DeflationSpace] = None,
    tol: float = 1e-10,
    maxit: Optional[int] = None,
    x0: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, SolveReport]:
    """Preconditioned CG, deflated against the constant kernel when requested.

    Convergence is declared on the true projected residual
    ``|P^T (b - A u)| / |P^T b| <= tol``; the recursive residual only
    triggers the check.
    """
    b = np.asarray(b, dtype=np.float64)
    n = len(b)
    maxit = default_maxit(n) if maxit is None else maxit
    apply_m = precond if precond is not None else (lambda r: r.copy())

    if deflation is not None:
        proj_u, proj_r = deflation.project_solution, deflation.project_residual
    else:
        proj_u = proj_r = lambda v: v

    rhs = proj_r(b)
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)

    x = np.zeros(n) if x0 is None else proj_u(np.asarray(x0, dtype=np.float64).copy())
    r = proj_r(rhs - A @ x)
    rel = float(np.linalg.norm(r)) / rhs_norm
    if rel <= tol:
        return x, SolveReport(0, rel, True)

    z = proj_u(apply_m(r))
    p = z.copy()
    rz = float(np.dot(r, z))
    it = 0
    restarted = False
    while it < maxit:
        q = A @ p
        pq = float(np.dot(p, q))
        if not pq > 0.0:
            # rounding made A look indefinite along p; restart once from the true residual
            r = proj_r(rhs - A @ x)
            rel = float(np.linalg.norm(r)) / rhs_norm
            if rel <= tol or restarted:
                break
            restarted = True
            z = proj_u(apply_m(r))
            p = z.copy()
            rz = float(np.dot(r, z))
            continue
        restarted = False
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        r = proj_r(r)
        it += 1
        if float(np.linalg.norm(r)) / rhs_norm <= tol:
            r = proj_r(rhs - A @ x)
            rel = float(np.linalg.norm(r)) / rhs_norm
            if rel <= tol:
                break
            # recursive residual drifted; restart from the true one
            z = proj_u(apply_m(r))
            p = z.copy()
            rz = float(np.dot(r, z))
            continue
        z = proj_u(apply_m(r))
        rz_new = float(np.dot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new

    x = proj_u(x)
    rel = float(np.linalg.norm(proj_r(rhs - A @ x))) / rhs_norm
    return x, SolveReport(it, rel, rel <= tol)


def preconditioner_policy(
    last_iterations: int,
    iterations_at_rebuild: int,
    steps_since_rebuild: int,
    growth: float = 1.5,
    period: int = 50,
) -> str:
    """``"rebuild"`` when iterations grew past ``growth`` times the count seen
    right after the last rebuild, or every ``period`` steps; else ``"keep"``."""
    if last_iterations > growth * iterations_at_rebuild or steps_since_rebuild >= period:
        return "rebuild"
    return "keep"
