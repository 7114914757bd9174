"""Error metrics against the exact sphere solution and convergence rates."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .fem import gradient_cache
from .mesh import NestedMeshPair
from .sphere import EXACT_W1, exact_velocity_at

logger = logging.getLogger(__name__)

RATE_COLUMNS = ("level", "h", "err_bp", "err_w1", "steps", "wall_time")


@dataclass(frozen=True)
class ErrorRecord:
    level: int
    h: float
    err_bp: float
    err_w1: float
    var_final: float
    steps: int
    wall_time: float

    def row(self) -> tuple:
        return (self.level, self.h, self.err_bp, self.err_w1, self.steps, self.wall_time)


@dataclass(frozen=True)
class RateEstimate:
    slope: float
    intercept: float
    residual: float
    n_points: int
    excluded: tuple[int, ...] = ()


def err_bp(
    pair: NestedMeshPair,
    v_h: np.ndarray,
    exact: Callable[[np.ndarray], np.ndarray] = exact_velocity_at,
    exact_l1: float = EXACT_W1,
) -> float:
    """Relative L1 Beckmann error with a midpoint rule on the coarse cells.

    The exact field is sampled at the barycenters pushed radially onto the
    unit sphere.  The denominator is the exact integral of ``|v*|``, which
    equals the Wasserstein-1 distance because ``|v*| = mu*``.
    """
    bary = pair.coarse.barycenters
    proj = bary / np.linalg.norm(bary, axis=1)[:, None]
    diff = np.linalg.norm(np.asarray(v_h) - exact(proj), axis=1)
    return float(np.dot(gradient_cache(pair).coarse_areas, diff)) / exact_l1


def err_w1(w1_estimate: float, exact: float = EXACT_W1) -> float:
    return abs(w1_estimate - exact) / exact


def convergence_rate(records: Iterable[tuple[float, float]]) -> RateEstimate:
    """Least-squares slope of ``log(err)`` against ``log(h)``.

    Points with a non-positive error are dropped (and listed in
    ``excluded``); fewer than two remaining points is an error.
    """
    pts = [(float(h), float(e)) for h, e in records]
    keep = [i for i, (h, e) in enumerate(pts) if e > 0 and h > 0]
    excluded = tuple(i for i in range(len(pts)) if i not in keep)
    if excluded:
        logger.warning("excluding non-positive errors at points %s", excluded)
    if len(keep) < 2:
        raise ValueError("a convergence rate needs at least two positive errors")
    x = np.log([pts[i][0] for i in keep])
    y = np.log([pts[i][1] for i in keep])
    if np.ptp(x) == 0.0:
        raise ValueError("mesh parameters must be distinct")
    design = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    residual = float(np.linalg.norm(design @ np.array([slope, intercept]) - y))
    return RateEstimate(float(slope), float(intercept), residual, len(keep), excluded)


def rates_for(records: list[ErrorRecord]) -> tuple[RateEstimate, RateEstimate]:
    """Slopes for the Beckmann and Wasserstein-1 errors over a sweep."""
    bp = convergence_rate((r.h, r.err_bp) for r in records)
    w1 = convergence_rate((r.h, r.err_w1) for r in records)
    return bp, w1


def equilibrium_defect(D: np.ndarray, mu: np.ndarray, rel_threshold: float = 1e-6) -> Optional[float]:
    """Largest ``|D_rr|`` over cells carrying mass above ``rel_threshold * max(mu)``."""
    mask = mu > rel_threshold * np.max(mu)
    return float(np.max(np.abs(D[mask]))) if np.any(mask) else None
