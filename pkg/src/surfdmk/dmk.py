"""Forward-Euler Dynamic Monge-Kantorovich time stepping.

Each step solves ``A(mu^k) u^k = b`` and then updates every coarse cell
``mu_r <- mu_r (1 + dt D_rr)`` with ``D_rr`` the cell mean of
``|grad u| - 1``.  The step size keeps ``1 + dt D_rr >= 1 - eta`` so the
density stays positive without clipping.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, fields
from typing import Optional, Union

import numpy as np

from .fem import assemble_stiffness, cell_gradients, fine_gradients, gradient_cache, lyapunov
from .mesh import NestedMeshPair
from .solver import (
    DeflationSpace,
    FactorizationError,
    JacobiPreconditioner,
    SolveReport,
    ic0_factorize,
    pcg_solve,
    preconditioner_policy,
)

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("k", "t", "dt", "var", "lyapunov", "lin_iters", "lin_residual", "rebuilt_flag")


class LinearSolveError(RuntimeError):
    """The elliptic solve did not converge; carries the state at failure."""

    def __init__(self, message: str, state: "DmkState", report: SolveReport) -> None:
        super().__init__(message)
        self.state = state
        self.report = report


@dataclass
class DmkConfig:
    mu0: Union[float, np.ndarray] = 1.0
    eta: float = 0.5
    dt_max: float = 1.0
    tau_T: float = 1e-4
    k_max: int = 2000
    lin_tol: float = 1e-10
    lin_maxit: Optional[int] = None
    conductivity_floor: float = 1e-12

    def __post_init__(self) -> None:
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        if not self.dt_max > 0.0:
            raise ValueError(f"dt_max must be positive, got {self.dt_max}")
        if not self.tau_T > 0.0:
            raise ValueError(f"tau_T must be positive, got {self.tau_T}")
        if int(self.k_max) < 1:
            raise ValueError(f"k_max must be at least 1, got {self.k_max}")
        if not self.lin_tol > 0.0:
            raise ValueError(f"lin_tol must be positive, got {self.lin_tol}")
        if self.lin_maxit is not None and int(self.lin_maxit) < 1:
            raise ValueError(f"lin_maxit must be at least 1, got {self.lin_maxit}")
        if not 0.0 <= self.conductivity_floor < 1.0:
            raise ValueError(f"conductivity_floor must lie in [0, 1), got {self.conductivity_floor}")
        if np.any(np.asarray(self.mu0) <= 0) or not np.all(np.isfinite(self.mu0)):
            raise ValueError("mu0 must be finite and strictly positive")

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


@dataclass(frozen=True)
class StepRecord:
    k: int
    t: float
    dt: float
    var: float
    lyapunov: float
    lin_iters: int
    lin_residual: float
    rebuilt_flag: bool

    def row(self) -> tuple:
        return (self.k, self.t, self.dt, self.var, self.lyapunov, self.lin_iters,
                self.lin_residual, int(self.rebuilt_flag))


@dataclass
class DmkState:
    mu: np.ndarray
    u: np.ndarray
    t: float = 0.0
    k: int = 0
    D: Optional[np.ndarray] = None
    last_var: float = float("inf")
    lyapunov_history: list[float] = field(default_factory=list)


@dataclass
class DmkResult:
    mu_star: np.ndarray
    u_star: np.ndarray
    v_star: np.ndarray
    w1_estimate: float
    t_star: float
    logs: list[StepRecord]
    converged: bool
    steps: int
    wall_time: float
    message: str = ""

    @property
    def final_var(self) -> float:
        return self.logs[-1].var if self.logs else float("nan")

    @property
    def lyapunov_history(self) -> list[float]:
        return [rec.lyapunov for rec in self.logs]


class EllipticSolver:
    """Solves ``A(mu) u = b`` across time steps, reusing the IC(0) factor.

    The factor is rebuilt according to :func:`preconditioner_policy`, and
    once more whenever a solve with a stale factor fails to converge.

    Off the transport support ``mu`` decays geometrically; once it falls
    below ``eps * max(mu)`` the assembled operator is indefinite at rounding
    level.  The conductivity seen by the solve is therefore bounded below by
    ``floor * max(mu)``; the density itself is never modified.
    """

    def __init__(self, pair: NestedMeshPair, b: np.ndarray, tol: float = 1e-10,
                 maxit: Optional[int] = None, floor: float = 1e-12) -> None:
        self.pair = pair
        self.b = np.asarray(b, dtype=np.float64)
        self.tol = tol
        self.maxit = maxit
        self.floor = floor
        self.deflation = DeflationSpace(gradient_cache(pair).weights)
        self.precond = None
        self.iters_at_rebuild = 0
        self.steps_since_rebuild = 0
        self.rebuild_next = True

    def _rebuild(self, A) -> None:
        try:
            self.precond = ic0_factorize(A)
        except FactorizationError:
            logger.warning("IC(0) failed; using a diagonal preconditioner")
            self.precond = JacobiPreconditioner(A)

    def solve(self, mu: np.ndarray, x0: Optional[np.ndarray] = None) -> tuple[np.ndarray, SolveReport]:
        mu = np.asarray(mu, dtype=np.float64)
        if self.floor > 0.0:
            mu = np.maximum(mu, self.floor * mu.max())
        A = assemble_stiffness(self.pair, mu)
        rebuilt = False
        if self.rebuild_next or self.precond is None:
            self._rebuild(A)
            rebuilt = True
        u, rep = pcg_solve(A, self.b, self.precond, self.deflation, self.tol, self.maxit, x0)
        if not rep.converged and not rebuilt:
            self._rebuild(A)
            rebuilt = True
            u, rep = pcg_solve(A, self.b, self.precond, self.deflation, self.tol, self.maxit, x0)
        if rebuilt:
            self.iters_at_rebuild = rep.iterations
            self.steps_since_rebuild = 0
        else:
            self.steps_since_rebuild += 1
        self.rebuild_next = (
            preconditioner_policy(rep.iterations, self.iters_at_rebuild, self.steps_since_rebuild)
            == "rebuild"
        )
        return u, SolveReport(rep.iterations, rep.relative_residual, rep.converged, rebuilt)


def dynamics_diagonal(pair: NestedMeshPair, u: np.ndarray) -> np.ndarray:
    """Per coarse cell: area-weighted mean of ``|grad u|`` over its children, minus 1."""
    cache = gradient_cache(pair)
    norms = np.linalg.norm(fine_gradients(pair, u), axis=1)
    weighted = (cache.fine_areas * norms)[pair.children].sum(axis=1)
    return weighted / cache.coarse_areas - 1.0


def choose_dt(D: np.ndarray, config: DmkConfig) -> float:
    peak = float(np.max(np.abs(D))) if len(D) else 0.0
    if peak == 0.0:
        return config.dt_max
    return min(config.dt_max, config.eta / peak)


def var_metric(mu_new: np.ndarray, mu_old: np.ndarray, dt: float, areas: np.ndarray) -> float:
    """Relative L1 change of the density per unit time."""
    old_mass = float(np.dot(np.abs(mu_old), areas))
    if old_mass == 0.0:
        raise ZeroDivisionError("relative variation undefined for a zero density")
    if not dt > 0.0:
        raise ValueError(f"time step must be positive, got {dt}")
    return float(np.dot(np.abs(mu_new - mu_old), areas)) / (dt * old_mass)


def reconstruct_velocity(pair: NestedMeshPair, mu: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Beckmann field per coarse cell, ``-mu_r`` times the mean child gradient.

    With the load ``f+ - f-`` the potential decreases from source to sink,
    so the flux is along ``-grad u``.
    """
    return -np.asarray(mu)[:, None] * cell_gradients(pair, u)


def initial_state(pair: NestedMeshPair, config: DmkConfig) -> DmkState:
    n_cells = pair.coarse.n_triangles
    mu = np.broadcast_to(np.asarray(config.mu0, dtype=np.float64), (n_cells,)).copy()
    return DmkState(mu=mu, u=np.zeros(pair.fine.n_vertices))


def step(state: DmkState, pair: NestedMeshPair, b: np.ndarray, config: DmkConfig,
         solver: Optional[EllipticSolver] = None) -> tuple[DmkState, StepRecord]:
    """Advance one forward-Euler step; returns the new state and its log record."""
    if solver is None:
        solver = EllipticSolver(pair, b, config.lin_tol, config.lin_maxit, config.conductivity_floor)
    u, rep = solver.solve(state.mu, x0=state.u if state.k else None)
    if not rep.converged:
        raise LinearSolveError(
            f"linear solve failed at step {state.k + 1}: residual {rep.relative_residual:.3e} "
            f"after {rep.iterations} iterations",
            state,
            rep,
        )
    areas = gradient_cache(pair).coarse_areas
    lyap = lyapunov(pair, state.mu, u)
    D = dynamics_diagonal(pair, u)
    dt = choose_dt(D, config)
    mu_new = state.mu * (1.0 + dt * D)
    var = var_metric(mu_new, state.mu, dt, areas)
    new_state = DmkState(
        mu=mu_new,
        u=u,
        t=state.t + dt,
        k=state.k + 1,
        D=D,
        last_var=var,
        lyapunov_history=state.lyapunov_history + [lyap],
    )
    record = StepRecord(new_state.k, new_state.t, dt, var, lyap, rep.iterations,
                        rep.relative_residual, rep.preconditioner_rebuilt)
    return new_state, record


def run(pair: NestedMeshPair, b: np.ndarray, config: Optional[DmkConfig] = None) -> DmkResult:
    """Iterate :func:`step` until ``var < tau_T`` or ``k_max`` steps.

    Non-convergence is reported through ``DmkResult.converged``; the fields
    reached so far are returned either way.
    """
    config = config or DmkConfig()
    start = time.perf_counter()
    solver = EllipticSolver(pair, b, config.lin_tol, config.lin_maxit, config.conductivity_floor)
    state = initial_state(pair, config)
    logs: list[StepRecord] = []
    converged = False
    message = f"k_max = {config.k_max} reached"
    try:
        while state.k < config.k_max:
            state, record = step(state, pair, b, config, solver)
            logs.append(record)
            if record.var < config.tau_T:
                converged = True
                message = "converged"
                break
        u, rep = solver.solve(state.mu, x0=state.u if state.k else None)
        if not rep.converged:
            converged = False
            message = f"final linear solve failed (residual {rep.relative_residual:.3e})"
    except LinearSolveError as exc:
        logger.error("%s", exc)
        converged = False
        message = str(exc)
        u = exc.state.u
        state = exc.state
    w1 = lyapunov(pair, state.mu, u)
    return DmkResult(
        mu_star=state.mu,
        u_star=u,
        v_star=reconstruct_velocity(pair, state.mu, u),
        w1_estimate=w1,
        t_star=state.t,
        logs=logs,
        converged=converged,
        steps=state.k,
        wall_time=time.perf_counter() - start,
        message=message,
    )
