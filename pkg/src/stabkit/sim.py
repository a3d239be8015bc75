"""Closed-loop simulation and empirical decay certification.

Continuous systems integrate with fixed-step RK4 plus a per-step Richardson
check (the half-step result replaces the full step when the estimated local
error exceeds 1e-8); discrete systems iterate the map.  Norm trajectories
are fitted in log space after a transient skip to certify an exponential
envelope ||x(t)|| <= M ||x0|| exp(-alpha t).  All sampling is deterministic:
initial conditions come from a Halton sequence pushed through the inverse
normal transform, on shells of radius delta, delta/2, delta/4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from . import expr as ex
from .synthesis import FeedbackGain, gain_expressions
from .system import CONTINUOUS, DISCRETE, SystemSpec

DIVERGENCE_NORM = 1e6
DEFAULT_HORIZON = 20.0
DEFAULT_DT = 1e-3
DEFAULT_STEPS = 200
STEP_ERROR_TOL = 1e-8
ALPHA_FLOOR = 1e-12


@dataclass(frozen=True)
class DecayFit:
    """Fitted exponential envelope ||x(t)|| <= m_hat ||x0|| exp(-alpha_hat t)."""

    m_hat: float
    alpha_hat: float
    residual: float
    certified: bool


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    feedback_used: str
    diverged: bool

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        times.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)


@dataclass(frozen=True)
class StabilityCheck:
    passed: bool
    delta: float
    samples: int
    min_alpha: float
    worst: DecayFit | None
    worst_x0: tuple[float, ...] | None
    failures: tuple[tuple[float, ...], ...]


@dataclass(frozen=True)
class Feedback:
    """Normalized feedback law: a batch state-to-control map plus metadata."""

    fn: Callable[[np.ndarray], np.ndarray]
    description: str
    smooth: bool

    def __call__(self, states: np.ndarray) -> np.ndarray:
        return self.fn(states)


def make_feedback(system: SystemSpec, fb) -> Feedback:
    """Normalize a gain, expression list, or callable into a Feedback."""
    if isinstance(fb, Feedback):
        return fb
    if isinstance(fb, FeedbackGain):
        k = np.asarray(fb.k, dtype=float)
        x_eq = np.asarray(system.x_eq)
        u_eq = np.asarray(system.u_eq)

        def gain_fn(states: np.ndarray) -> np.ndarray:
            return u_eq + (np.asarray(states, dtype=float) - x_eq) @ k.T

        return Feedback(gain_fn, "; ".join(gain_expressions(fb, system)), True)
    if callable(fb):
        return Feedback(fb, "custom callable", True)
    parsed: list[ex.Expr] = []
    for item in fb:
        parsed.append(ex.parse_expr(item) if isinstance(item, str) else item)
    if len(parsed) != system.m:
        raise ValueError(f"expected {system.m} feedback components, got {len(parsed)}")
    for i, e in enumerate(parsed, start=1):
        max_x, max_u = ex.max_indices(e)
        if max_u > 0:
            raise ValueError(f"feedback component {i} references a control variable")
        if max_x > system.n:
            raise ValueError(f"feedback component {i} references x{max_x} but n={system.n}")
    compiled = ex.compile_field(tuple(parsed))

    def expr_fn(states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        return compiled(states, np.zeros(states.shape[:-1] + (1,)))

    smooth = all(ex.is_c1_everywhere(e) for e in parsed)
    return Feedback(expr_fn, "; ".join(ex.unparse(e) for e in parsed), smooth)


def _closed_loop_field(system: SystemSpec, feedback: Feedback):
    field = ex.compile_field(system.components)

    def g(states: np.ndarray) -> np.ndarray:
        return field(states, feedback(states))

    return g


def _rk4_step(g, states: np.ndarray, h: float) -> np.ndarray:
    k1 = g(states)
    k2 = g(states + 0.5 * h * k1)
    k3 = g(states + 0.5 * h * k2)
    k4 = g(states + h * k3)
    return states + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_double_step(g, states: np.ndarray, h: float) -> np.ndarray:
    full = _rk4_step(g, states, h)
    half = _rk4_step(g, _rk4_step(g, states, 0.5 * h), 0.5 * h)
    err = np.linalg.norm(full - half, axis=-1) / 15.0
    use_half = ~np.isfinite(err) | (err > STEP_ERROR_TOL)
    return np.where(use_half[..., None], half, full)


def _run_batch(step, x0s: np.ndarray, steps: int):
    """Advance all rows, freezing each at its first divergence."""
    count, n = x0s.shape
    states = np.empty((count, steps + 1, n))
    states[:, 0] = x0s
    alive = np.ones(count, dtype=bool)
    diverged = np.zeros(count, dtype=bool)
    first_bad = np.full(count, steps + 1)
    current = x0s.astype(float).copy()
    with np.errstate(all="ignore"):
        for k in range(steps):
            advanced = step(current)
            finite = np.isfinite(advanced).all(axis=1)
            advanced = np.where((alive & finite)[:, None], advanced, current)
            norms = np.linalg.norm(advanced, axis=1)
            newly_bad = alive & (~finite | (norms > DIVERGENCE_NORM))
            states[:, k + 1] = advanced
            first_bad[newly_bad & (first_bad > steps)] = k + 1
            diverged |= newly_bad
            alive &= ~newly_bad
            current = advanced
    return states, diverged, first_bad


def integrate_closed_loop(
    system: SystemSpec,
    feedback,
    x0: Sequence[float],
    horizon: float = DEFAULT_HORIZON,
    dt: float = DEFAULT_DT,
) -> Trajectory:
    """RK4 integration of dx/dt = f(x, u(x)) from x0 over [0, horizon]."""
    if system.mode != CONTINUOUS:
        raise ValueError("integrate_closed_loop requires a continuous-mode system")
    if dt <= 0 or horizon <= 0:
        raise ValueError("horizon and dt must be positive")
    fb = make_feedback(system, feedback)
    g = _closed_loop_field(system, fb)
    steps = max(1, int(round(horizon / dt)))
    x0_arr = np.asarray(x0, dtype=float)[None, :]
    states, diverged, first_bad = _run_batch(
        lambda cur: _rk4_double_step(g, cur, dt), x0_arr, steps
    )
    times = np.arange(steps + 1) * dt
    end = int(first_bad[0]) if diverged[0] else steps
    return Trajectory(times[: end + 1], states[0, : end + 1], fb.description, bool(diverged[0]))


def iterate_closed_loop(
    system: SystemSpec,
    feedback,
    x0: Sequence[float],
    steps: int = DEFAULT_STEPS,
) -> Trajectory:
    """Iteration of x+ = f(x, u(x)) from x0 for the given number of steps."""
    if system.mode != DISCRETE:
        raise ValueError("iterate_closed_loop requires a discrete-mode system")
    if steps < 1:
        raise ValueError("steps must be positive")
    fb = make_feedback(system, feedback)
    g = _closed_loop_field(system, fb)
    x0_arr = np.asarray(x0, dtype=float)[None, :]
    states, diverged, first_bad = _run_batch(g, x0_arr, steps)
    times = np.arange(steps + 1, dtype=float)
    end = int(first_bad[0]) if diverged[0] else steps
    return Trajectory(times[: end + 1], states[0, : end + 1], fb.description, bool(diverged[0]))


def _fit_decay(times: np.ndarray, norms: np.ndarray, transient_skip: float) -> DecayFit:
    start_norm = norms[0]
    if start_norm == 0.0:
        raise ValueError("trajectory starts at the equilibrium; nothing to fit")
    start = int(math.floor(transient_skip * len(norms)))
    start = min(start, len(norms) - 2)
    logs = np.log(np.maximum(norms, 1e-300))
    design = np.column_stack([times[start:], np.ones(len(times) - start)])
    coef, *_ = np.linalg.lstsq(design, logs[start:], rcond=None)
    slope = float(coef[0])
    alpha = -slope
    residual = float(np.sqrt(np.mean((design @ coef - logs[start:]) ** 2)))
    with np.errstate(over="ignore"):
        envelope = norms * np.exp(alpha * times)
    m_hat = float(np.max(envelope) / start_norm)
    certified = alpha > ALPHA_FLOOR and math.isfinite(m_hat)
    return DecayFit(m_hat=m_hat, alpha_hat=alpha, residual=residual, certified=certified)


def estimate_decay(traj: Trajectory, transient_skip: float = 0.1) -> DecayFit:
    """Least-squares exponential envelope of a non-divergent trajectory."""
    if traj.diverged:
        raise ValueError("cannot fit a decay envelope on a divergent trajectory")
    if not 0.0 <= transient_skip < 1.0:
        raise ValueError("transient_skip must lie in [0, 1)")
    norms = np.linalg.norm(traj.states, axis=1)
    return _fit_decay(np.asarray(traj.times, dtype=float), norms, transient_skip)


def _sphere_directions(count: int, dim: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0 if i % 2 == 0 else -1.0] for i in range(count)])
    sampler = qmc.Halton(d=dim, scramble=False)
    sampler.fast_forward(1)
    u = sampler.random(count)
    z = ndtri(np.clip(u, 1e-12, 1.0 - 1e-12))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return z / norms


def verify_local_stability(
    system: SystemSpec,
    feedback,
    delta: float,
    samples: int = 100,
    horizon: float = DEFAULT_HORIZON,
    dt: float = DEFAULT_DT,
    steps: int = DEFAULT_STEPS,
    transient_skip: float = 0.1,
) -> StabilityCheck:
    """Certify decay from deterministic initial conditions near the equilibrium.

    Samples sit on shells of radius delta, delta/2 and delta/4 in Halton
    directions.  Passing requires every trajectory to stay finite and every
    decay fit to certify; the reported min_alpha is the worst fitted rate.
    Trajectories are advanced together, so the aggregate is order-independent.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if samples < 1:
        raise ValueError("need at least one sample")
    fb = make_feedback(system, feedback)
    g = _closed_loop_field(system, fb)
    directions = _sphere_directions(samples, system.n)
    radii = delta / 2.0 ** (np.arange(samples) % 3)
    x0s = np.asarray(system.x_eq) + directions * radii[:, None]

    if system.mode == CONTINUOUS:
        nsteps = max(1, int(round(horizon / dt)))
        times = np.arange(nsteps + 1) * dt
        states, diverged, _ = _run_batch(
            lambda cur: _rk4_double_step(g, cur, dt), x0s, nsteps
        )
    else:
        nsteps = steps
        times = np.arange(nsteps + 1, dtype=float)
        states, diverged, _ = _run_batch(g, x0s, nsteps)

    fits: list[DecayFit | None] = []
    failures: list[tuple[float, ...]] = []
    worst: DecayFit | None = None
    worst_x0: tuple[float, ...] | None = None
    min_alpha = math.inf
    for i in range(samples):
        if diverged[i]:
            fits.append(None)
            failures.append(tuple(x0s[i]))
            min_alpha = -math.inf
            continue
        fit = _fit_decay(times, np.linalg.norm(states[i], axis=1), transient_skip)
        fits.append(fit)
        if not fit.certified:
            failures.append(tuple(x0s[i]))
        if fit.alpha_hat < min_alpha:
            min_alpha = fit.alpha_hat
            worst = fit
            worst_x0 = tuple(x0s[i])
    passed = not failures
    return StabilityCheck(
        passed=passed,
        delta=delta,
        samples=samples,
        min_alpha=min_alpha,
        worst=worst,
        worst_x0=worst_x0,
        failures=tuple(failures),
    )


def trajectory_csv(traj: Trajectory) -> str:
    """CSV rendering: header t,x1..xn, one row per sample, full precision."""
    n = traj.states.shape[1]
    header = "t," + ",".join(f"x{i}" for i in range(1, n + 1))
    lines = [header]
    for t, row in zip(traj.times, traj.states):
        lines.append(",".join(f"{v:.17g}" for v in (t, *row)))
    return "\n".join(lines) + "\n"
