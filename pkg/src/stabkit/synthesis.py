"""Linear feedback synthesis for the stabilizable linearization.

The feedback convention is u = u* + K (x - x*), so at the zero equilibrium
of the worked examples the gain acts as u = K x.  Single-input placement
uses Ackermann's formula; multi-input placement solves a Sylvester equation
for a similarity bringing A + B K to a chosen stable block-diagonal form.
Partially controllable pairs are reduced with an orthogonal staircase
transform first and only the controllable block is placed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from .hautus import (
    format_eigenvalue,
    hautus_asymptotic,
    kalman_controllability_rank,
    spectral_profile,
)
from .linalg import spectrum
from .system import CONTINUOUS, SystemSpec, jacobian

PLACEMENT_TOL = 1e-6
_SYLVESTER_TRIES = 5


class UncontrollableError(RuntimeError):
    """The unstable part of the linearization is not controllable."""


class PlacementError(RuntimeError):
    """Pole placement could not reach the requested accuracy."""


@dataclass(frozen=True)
class FeedbackGain:
    """Linear feedback u = u* + K (x - x*) with its placement record."""

    k: np.ndarray
    target_poles: tuple[complex, ...]
    achieved_poles: tuple[complex, ...]
    mode: str

    def __post_init__(self):
        arr = np.asarray(self.k, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "k", arr)
        object.__setattr__(self, "target_poles", tuple(complex(v) for v in self.target_poles))
        object.__setattr__(self, "achieved_poles", tuple(complex(v) for v in self.achieved_poles))


@dataclass(frozen=True)
class Staircase:
    """Orthogonal change of basis isolating the controllable block."""

    transform: np.ndarray
    controllable_dim: int


def staircase_decompose(a, b, tol: float | None = None) -> Staircase:
    """Basis whose leading block carries the controllable subspace.

    The transform T is orthogonal; T' A T is block upper triangular with the
    controllable pair in the leading controllable_dim rows and columns, and
    the trailing diagonal block carries the uncontrollable modes.
    """
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    n = a_arr.shape[0]
    blocks = [b_arr]
    for _ in range(n - 1):
        blocks.append(a_arr @ blocks[-1])
    kalman = np.hstack(blocks)
    u, svals, _ = np.linalg.svd(kalman)
    if tol is None:
        tol = 1e-9 * (float(svals[0]) if len(svals) else 0.0) * max(kalman.shape)
    dim = int(np.count_nonzero(svals > tol))
    return Staircase(transform=u, controllable_dim=dim)


def closed_loop_spectrum(a, b, k) -> np.ndarray:
    return spectrum(np.asarray(a, dtype=float) + np.asarray(b, dtype=float) @ np.asarray(k, dtype=float))


def pole_match_error(achieved: Sequence[complex], desired: Sequence[complex]) -> float:
    """Largest pole deviation under a minimal-cost matching."""
    ach = np.asarray(achieved, dtype=complex)
    des = np.asarray(desired, dtype=complex)
    if ach.shape != des.shape:
        raise ValueError("pole lists must have equal length")
    if len(ach) == 0:
        return 0.0
    cost = np.abs(ach[:, None] - des[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def _check_conjugate_closure(values: Sequence[complex], tol: float = 1e-9) -> None:
    pool = [complex(v) for v in values]
    while pool:
        v = pool.pop()
        if abs(v.imag) <= tol:
            continue
        for i, w in enumerate(pool):
            if abs(w - v.conjugate()) <= tol * (1.0 + abs(v)):
                pool.pop(i)
                break
        else:
            raise ValueError(f"desired poles are not closed under conjugation near {v}")


def _real_block_form(desired: Sequence[complex], tol: float = 1e-9) -> np.ndarray:
    """Real block-diagonal matrix with the desired spectrum."""
    reals: list[float] = []
    pairs: list[complex] = []
    pool = [complex(v) for v in desired]
    while pool:
        v = pool.pop()
        if abs(v.imag) <= tol:
            reals.append(v.real)
            continue
        for i, w in enumerate(pool):
            if abs(w - v.conjugate()) <= tol * (1.0 + abs(v)):
                pool.pop(i)
                break
        pairs.append(complex(v.real, abs(v.imag)))
    size = len(reals) + 2 * len(pairs)
    out = np.zeros((size, size))
    pos = 0
    for r in reals:
        out[pos, pos] = r
        pos += 1
    for p in pairs:
        out[pos:pos + 2, pos:pos + 2] = [[p.real, p.imag], [-p.imag, p.real]]
        pos += 2
    return out


def _ackermann(a: np.ndarray, b: np.ndarray, desired: Sequence[complex]) -> np.ndarray:
    n = a.shape[0]
    coeffs = np.poly(np.asarray(desired, dtype=complex))
    if np.max(np.abs(coeffs.imag)) > 1e-9 * max(1.0, np.max(np.abs(coeffs.real))):
        raise ValueError("desired poles are not closed under conjugation")
    coeffs = coeffs.real
    phi = np.zeros((n, n))
    eye = np.eye(n)
    for c in coeffs:
        phi = phi @ a + c * eye
    blocks = [b]
    for _ in range(n - 1):
        blocks.append(a @ blocks[-1])
    ctrb = np.hstack(blocks)
    last_unit = np.zeros(n)
    last_unit[-1] = 1.0
    try:
        z = np.linalg.solve(ctrb.T, last_unit)
    except np.linalg.LinAlgError as err:
        raise PlacementError(f"controllability matrix is numerically singular: {err}") from err
    return -(z @ phi)[None, :]


def _sylvester(a: np.ndarray, b: np.ndarray, desired: Sequence[complex],
               rng: np.random.Generator) -> np.ndarray:
    m = b.shape[1]
    target = _real_block_form(desired)
    last_error: Exception | None = None
    for _ in range(_SYLVESTER_TRIES):
        g = rng.standard_normal((m, a.shape[0]))
        try:
            x = scipy.linalg.solve_sylvester(a, -target, -b @ g)
        except Exception as err:  # singular data for this draw
            last_error = err
            continue
        if not np.all(np.isfinite(x)) or np.linalg.cond(x) > 1e10:
            continue
        k = np.linalg.solve(x.T, g.T).T
        achieved = np.linalg.eigvals(a + b @ k)
        if pole_match_error(achieved, desired) <= PLACEMENT_TOL:
            return k
    raise PlacementError(
        "multi-input placement failed after redraws"
        + (f" (last solver error: {last_error})" if last_error else "")
    )


def place_poles(a, b, desired: Sequence[complex],
                rng: np.random.Generator | None = None) -> np.ndarray:
    """Gain K with the spectrum of A + B K at the desired poles.

    Requires a controllable pair and desired poles disjoint from the open-loop
    spectrum (the multi-input path needs the separation; the requirement is
    enforced uniformly).  The achieved accuracy is validated to 1e-6 under a
    minimal-cost matching.
    """
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    n = a_arr.shape[0]
    desired = [complex(v) for v in desired]
    if len(desired) != n:
        raise ValueError(f"expected {n} poles, got {len(desired)}")
    if n == 0:
        return np.zeros((b_arr.shape[1], 0))
    _check_conjugate_closure(desired)
    open_loop = np.linalg.eigvals(a_arr)
    scale = max(1.0, float(np.max(np.abs(open_loop))))
    for p in desired:
        if np.min(np.abs(open_loop - p)) <= 1e-9 * scale:
            raise ValueError(
                f"desired pole {p} collides with an open-loop eigenvalue; "
                "placement needs disjoint spectra"
            )
    if kalman_controllability_rank(a_arr, b_arr) < n:
        raise UncontrollableError("the pair (A, B) is not controllable")
    if b_arr.shape[1] == 1:
        k = _ackermann(a_arr, b_arr, desired)
        achieved = np.linalg.eigvals(a_arr + b_arr @ k)
        if pole_match_error(achieved, desired) > PLACEMENT_TOL:
            raise PlacementError("single-input placement lost accuracy")
        return k
    if rng is None:
        rng = np.random.default_rng(0)
    return _sylvester(a_arr, b_arr, desired, rng)


def default_poles(count: int, mode: str, eta_tilde: float = 0.0,
                  avoid: Sequence[complex] = ()) -> list[float]:
    """Deterministic stable pole defaults, nudged off any avoided values."""

    def collides(p: float, taken: list[complex]) -> bool:
        return any(abs(p - v) <= 1e-6 for v in taken)

    avoid_list = [complex(v) for v in avoid]
    chosen: list[float] = []
    if mode == CONTINUOUS:
        base = -(eta_tilde + 1.0)
        for i in range(count):
            p = base - 0.5 * i
            while collides(p, avoid_list + [complex(c) for c in chosen]):
                p -= 0.25
            chosen.append(p)
    else:
        spacing = 0.05 if count <= 20 else 0.95 / (count - 1)
        for i in range(count):
            p = 0.5 - spacing * i
            while collides(p, avoid_list + [complex(c) for c in chosen]):
                p = 0.5 - ((0.5 - p + 0.0171) % 1.43)
            chosen.append(p)
    return chosen


def synthesize(system: SystemSpec, poles: Sequence[complex] | None = None,
               seed: int = 0, tol: float | None = None) -> FeedbackGain:
    """Stabilizing gain for the linearization of the given system.

    Precondition: the Hautus test holds at every unstable eigenvalue; raises
    :class:`UncontrollableError` otherwise.  The returned gain is validated,
    i.e. the closed-loop spectrum is strictly stable for the system mode.
    """
    lin = jacobian(system)
    prof = spectral_profile(lin.a, system.mode)
    haut = hautus_asymptotic(lin.a, lin.b, prof, tol=tol)
    if not haut.holds:
        joined = ", ".join(format_eigenvalue(v) for v in haut.failures)
        raise UncontrollableError(f"uncontrollable unstable mode at lambda={joined}")
    stair = staircase_decompose(lin.a, lin.b, tol=tol)
    dim = stair.controllable_dim
    t = stair.transform
    a_bar = t.T @ lin.a @ t
    b_bar = t.T @ lin.b
    a_c = a_bar[:dim, :dim]
    b_c = b_bar[:dim, :]

    if poles is None:
        avoid = np.linalg.eigvals(a_c) if dim else []
        desired = [complex(p) for p in default_poles(dim, system.mode, prof.eta_tilde, avoid)]
    else:
        desired = [complex(p) for p in poles]
        if len(desired) != dim:
            raise ValueError(
                f"expected {dim} poles for the controllable block, got {len(desired)}"
            )
        if system.mode == CONTINUOUS:
            bad = [p for p in desired if p.real >= 0.0]
        else:
            bad = [p for p in desired if abs(p) >= 1.0]
        if bad:
            raise ValueError(f"requested poles are not stable for {system.mode} mode: {bad}")

    rng = np.random.default_rng(seed)
    if dim:
        k_c = place_poles(a_c, b_c, desired, rng=rng)
    else:
        k_c = np.zeros((system.m, 0))
    k_full = np.hstack([k_c, np.zeros((system.m, system.n - dim))]) @ t.T
    achieved = spectrum(lin.a + lin.b @ k_full)
    if system.mode == CONTINUOUS:
        stable = bool(np.all(achieved.real < 0.0))
    else:
        stable = bool(np.all(np.abs(achieved) < 1.0))
    if not stable:
        raise PlacementError("closed-loop spectrum failed the stability validation")
    return FeedbackGain(
        k=k_full,
        target_poles=tuple(desired),
        achieved_poles=tuple(complex(v) for v in achieved),
        mode=system.mode,
    )


def gain_expressions(gain: FeedbackGain, system: SystemSpec) -> list[str]:
    """Render u = u* + K (x - x*) componentwise in the expression language."""
    k = np.asarray(gain.k, dtype=float)
    out = []
    for i in range(k.shape[0]):
        constant = system.u_eq[i] - float(k[i] @ np.asarray(system.x_eq))
        terms = []
        if constant != 0.0:
            terms.append(repr(constant))
        for j in range(k.shape[1]):
            if k[i, j] != 0.0:
                terms.append(f"{float(k[i, j])!r}*x{j + 1}")
        out.append(" + ".join(terms) if terms else "0")
    return out
