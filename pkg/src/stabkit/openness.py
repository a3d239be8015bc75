"""Linear openness bounds and the empirical covering-rate estimator.

At a linearization [A | B] the smallest singular value bounds how fast the
map opens balls around the working point, its reciprocal is the metric
regularity bound, and the largest singular value is a local Lipschitz bound.
The empirical estimator below cross-checks the linear bound directly on the
nonlinear map by measuring how large a ball around f(z) is actually covered
by the image of a radius-r ball around z.  It is a diagnostic, never the
authoritative input to verdicts, and is limited to very small dimensions
because it searches the full joint state-control ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .linalg import rank_tolerance, singular_values
from .system import SystemSpec, evaluate

MAX_SEARCH_DIM = 3


@dataclass(frozen=True)
class OpennessReport:
    """Openness bounds of one linearization."""

    cov_bound: float
    reg_bound: float
    lip_bound: float
    jacobian_rank: int
    linearly_open: bool


@dataclass(frozen=True)
class CoveringGrid:
    """Sampling configuration for the empirical covering search."""

    directions: int = 48
    radial_levels: int = 4
    axis_points: int = 15
    attain_rel_tol: float = 1e-6
    resolution: float = 1e-3


def covering_bound(lin, tol: float | None = None) -> float:
    """Smallest singular value of [A | B], floored to 0 when rank-deficient."""
    stacked = lin.augmented
    svals = singular_values(stacked)
    if tol is None:
        tol = rank_tolerance(svals, stacked.shape)
    rank = int(np.count_nonzero(svals > tol))
    if rank < stacked.shape[0]:
        return 0.0
    return float(svals[-1])


def regularity_bound(lin, tol: float | None = None) -> float:
    """Reciprocal of the covering bound; +inf when the system is not open."""
    cov = covering_bound(lin, tol)
    return math.inf if cov == 0.0 else 1.0 / cov


def lipschitz_bound(lin) -> float:
    """Largest singular value of [A | B]."""
    return float(singular_values(lin.augmented)[0])


def openness_report(lin, tol: float | None = None) -> OpennessReport:
    stacked = lin.augmented
    svals = singular_values(stacked)
    if tol is None:
        tol = rank_tolerance(svals, stacked.shape)
    rank = int(np.count_nonzero(svals > tol))
    open_ = rank == stacked.shape[0]
    cov = float(svals[-1]) if open_ else 0.0
    reg = math.inf if cov == 0.0 else 1.0 / cov
    lip = float(svals[0]) if len(svals) else 0.0
    return OpennessReport(cov, reg, lip, rank, open_)


def shifted_covering_lower_bound(cov: float, nu: float) -> float:
    """Covering bound surviving a perturbation of Lipschitz size nu."""
    if nu < 0:
        raise ValueError("perturbation size must be nonnegative")
    return cov - nu


# --- empirical covering search --------------------------------------------


def _sphere_directions(dim: int, count: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        angles = 2.0 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(angles), np.sin(angles)])
    golden = np.pi * (3.0 - np.sqrt(5.0))
    k = np.arange(count)
    z = 1.0 - (2.0 * k + 1.0) / count
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    theta = golden * k
    return np.column_stack([rho * np.cos(theta), rho * np.sin(theta), z])


def _cube_grid(dim: int, radius: float, axis_points: int) -> np.ndarray:
    axis = np.linspace(-radius, radius, axis_points)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _cube_to_ball(points: np.ndarray) -> np.ndarray:
    """Map the cube [-r, r]^dim radially onto the ball of radius r.

    Each point keeps its direction and takes its max-norm as Euclidean norm,
    so the cube boundary lands exactly on the sphere and the map is
    one-to-one.  Searching in cube coordinates keeps the domain constraint
    separable: feasibility is a per-coordinate clip, and no move can drag
    the other coordinates along the way a projection onto the sphere would.
    """
    inf_norms = np.max(np.abs(points), axis=1)
    two_norms = np.linalg.norm(points, axis=1)
    safe = np.where(two_norms > 0.0, two_norms, 1.0)
    return points * (inf_norms / safe)[:, None]


def _distances(values: np.ndarray, targets: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(values - targets, axis=1)
    return np.where(np.isfinite(d), d, np.inf)


def _refine(
    objective: Callable[[np.ndarray], np.ndarray],
    points: np.ndarray,
    dist: np.ndarray,
    targets: np.ndarray,
    radius: float,
    tol: float,
    initial_step: float,
) -> np.ndarray:
    """Box-constrained coordinate pattern search, vectorized across targets.

    Operates in cube coordinates (see _cube_to_ball), and steps are tracked
    per coordinate: a nearly flat coordinate that keeps yielding microscopic
    gains must not pin the step of the others.
    """
    points = points.copy()
    dist = dist.copy()
    count, dim = points.shape
    step = np.full((count, dim), initial_step)
    floor = 1e-12 * radius
    for _ in range(400):
        active = (dist > tol) & (step.max(axis=1) > floor)
        if not active.any():
            break
        for k in range(dim):
            improved = np.zeros(count, dtype=bool)
            for sign in (1.0, -1.0):
                candidate = points.copy()
                moved = candidate[:, k] + sign * step[:, k]
                candidate[:, k] = np.clip(moved, -radius, radius)
                trial = _distances(objective(candidate), targets)
                better = trial < dist
                points[better] = candidate[better]
                dist[better] = trial[better]
                improved |= better
            step[~improved, k] *= 0.5
    return dist


def empirical_covering_modulus(
    system: SystemSpec,
    center: tuple[Sequence[float], Sequence[float]] | None = None,
    radius: float = 0.1,
    grid: CoveringGrid | None = None,
) -> float:
    """Measured covering rate of f over the joint (x, u) ball of given radius.

    Returns the largest kappa (up to the configured resolution) such that
    every sampled target in the ball of radius kappa*r around f(z) is
    attained by f from the joint ball of radius r around z, to within the
    attainment tolerance.  Deterministic: the search uses fixed grids and a
    projected pattern search, no randomness.
    """
    grid = grid or CoveringGrid()
    n, m = system.n, system.m
    joint = n + m
    if joint > MAX_SEARCH_DIM:
        raise ValueError(
            f"empirical covering search supports n + m <= {MAX_SEARCH_DIM}, got {joint}"
        )
    if radius <= 0:
        raise ValueError("radius must be positive")
    if center is None:
        x0 = np.asarray(system.x_eq, dtype=float)
        u0 = np.asarray(system.u_eq, dtype=float)
    else:
        x0 = np.asarray(center[0], dtype=float)
        u0 = np.asarray(center[1], dtype=float)
    field = ex.compile_field(system.components)

    def fw(offsets: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            return field(x0 + offsets[:, :n], u0 + offsets[:, n:])

    def ball_objective(cube_points: np.ndarray) -> np.ndarray:
        return fw(_cube_to_ball(cube_points))

    f_center = evaluate(system, x0, u0)
    cube = _cube_grid(joint, radius, grid.axis_points)
    values = ball_objective(cube)
    finite = np.all(np.isfinite(values), axis=1)
    if not finite.any():
        return 0.0
    spread = float(np.max(np.linalg.norm(values[finite] - f_center, axis=1)))
    if spread == 0.0:
        return 0.0

    directions = _sphere_directions(n, grid.directions)
    attain_tol = grid.attain_rel_tol * radius
    initial_step = 2.0 * radius / grid.axis_points

    def attained_everywhere(kappa: float) -> bool:
        shell_radii = [kappa * radius * j / grid.radial_levels
                       for j in range(1, grid.radial_levels + 1)]
        targets = np.vstack([f_center + r_k * directions for r_k in shell_radii])
        # (targets, samples) distance matrix seeds each search at the best grid point
        diff = values[None, :, :] - targets[:, None, :]
        dist_matrix = np.linalg.norm(diff, axis=2)
        dist_matrix = np.where(np.isfinite(dist_matrix), dist_matrix, np.inf)
        seeds = np.argmin(dist_matrix, axis=1)
        start_points = cube[seeds]
        start_dist = dist_matrix[np.arange(len(targets)), seeds]
        if np.all(start_dist <= attain_tol):
            return True
        final = _refine(
            ball_objective, start_points, start_dist, targets, radius, attain_tol, initial_step
        )
        return bool(np.all(final <= attain_tol))

    hi = 1.1 * spread / radius + 1e-9
    if attained_everywhere(hi):
        return float(hi)
    lo = 0.0
    width_target = grid.resolution * hi
    while hi - lo > width_target:
        mid = 0.5 * (lo + hi)
        if attained_everywhere(mid):
            lo = mid
        else:
            hi = mid
    return float(lo)
