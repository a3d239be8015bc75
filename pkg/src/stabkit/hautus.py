"""Spectral classification and rank tests on the linearization.

Continuous mode classifies eigenvalues with nonnegative real part as
unstable; discrete mode uses modulus at least one.  The classification is
deliberately conservative: anything within the classification tolerance of
the boundary is treated as unstable and additionally listed as a boundary
warning, so downstream sufficiency tests err toward demanding more margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import complex_pencil_rank, numerical_rank, spectrum
from .system import CONTINUOUS, DISCRETE

TOL_CLASS = 1e-8


def format_eigenvalue(z: complex) -> str:
    """Render an eigenvalue compactly, dropping a numerically zero imag part."""
    z = complex(z)
    if abs(z.imag) <= 1e-12:
        return f"{z.real:.12g}"
    sign = "+" if z.imag >= 0 else "-"
    return f"{z.real:.12g}{sign}{abs(z.imag):.12g}j"


@dataclass(frozen=True)
class SpectralProfile:
    """Classified spectrum of the state Jacobian."""

    mode: str
    eigenvalues: tuple[complex, ...]
    unstable: tuple[complex, ...]
    unstable_real_only: bool
    eta: float
    eta_tilde: float
    boundary_warnings: tuple[complex, ...]


@dataclass(frozen=True)
class HautusResult:
    holds: bool
    failures: tuple[complex, ...]


def spectral_profile(a, mode: str, tol_class: float = TOL_CLASS) -> SpectralProfile:
    """Classify the spectrum of A for the given mode.

    eta is the supremum of the real members of the unstable set (signed, -inf
    when there are none); eta_tilde is the largest modulus over the whole
    spectrum.
    """
    if mode not in (CONTINUOUS, DISCRETE):
        raise ValueError(f"mode must be continuous or discrete, got {mode!r}")
    values = spectrum(a)
    eigenvalues = tuple(complex(v) for v in values)
    if mode == CONTINUOUS:
        unstable = tuple(v for v in eigenvalues if v.real >= -tol_class)
        boundary = tuple(v for v in eigenvalues if abs(v.real) <= tol_class)
    else:
        unstable = tuple(v for v in eigenvalues if abs(v) >= 1.0 - tol_class)
        boundary = tuple(v for v in eigenvalues if abs(abs(v) - 1.0) <= tol_class)
    real_members = [v.real for v in unstable if abs(v.imag) <= tol_class]
    eta = max(real_members) if real_members else -math.inf
    eta_tilde = max((abs(v) for v in eigenvalues), default=0.0)
    unstable_real_only = all(abs(v.imag) <= tol_class for v in unstable)
    return SpectralProfile(
        mode=mode,
        eigenvalues=eigenvalues,
        unstable=unstable,
        unstable_real_only=unstable_real_only,
        eta=eta,
        eta_tilde=float(eta_tilde),
        boundary_warnings=boundary,
    )


def _distinct(values: tuple[complex, ...], tol: float = 1e-9) -> list[complex]:
    """Collapse eigenvalue clusters so each test point is checked once."""
    kept: list[complex] = []
    for v in sorted(values, key=lambda z: (z.real, z.imag)):
        if not any(abs(v - w) <= tol * (1.0 + abs(w)) for w in kept):
            kept.append(v)
    return kept


def kalman_controllability_rank(a, b, tol: float | None = None) -> int:
    """Rank of [B, AB, ..., A^(n-1) B]."""
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    n = a_arr.shape[0]
    blocks = [b_arr]
    for _ in range(n - 1):
        blocks.append(a_arr @ blocks[-1])
    return numerical_rank(np.hstack(blocks), tol)


def hautus_asymptotic(a, b, profile: SpectralProfile, tol: float | None = None) -> HautusResult:
    """Pencil rank test at every unstable eigenvalue.

    Holds exactly when rank [A - lam I | B] = n for each unstable lam, the
    linear-systems criterion for stabilizability.
    """
    n = np.asarray(a).shape[0]
    failures = tuple(
        lam for lam in _distinct(profile.unstable)
        if complex_pencil_rank(a, lam, b, tol) < n
    )
    return HautusResult(holds=not failures, failures=failures)


def hautus_full_spectrum(a, b, tol: float | None = None) -> bool:
    """Pencil rank test at every eigenvalue; equivalent to Kalman rank n."""
    arr = np.asarray(a, dtype=float)
    n = arr.shape[0]
    eigenvalues = tuple(complex(v) for v in spectrum(arr))
    return all(
        complex_pencil_rank(arr, lam, b, tol) == n for lam in _distinct(eigenvalues)
    )
