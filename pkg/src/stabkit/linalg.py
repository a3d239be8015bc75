"""Dense linear-algebra kernels shared by the analysis pipeline.

Everything here targets desk-scale problems (state dimension up to 50) and
leans on LAPACK through numpy; the value added is the rank-tolerance policy
and the real embedding used to take ranks of complex pencils.
"""

from __future__ import annotations

import numpy as np

MAX_DIM = 50
DEFAULT_RANK_SCALE = 1e-9


class ConvergenceError(RuntimeError):
    """An iterative eigenvalue computation failed to converge."""


def _as_matrix(m, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def spectrum(a) -> np.ndarray:
    """Eigenvalues of a square matrix, sorted by (real, imaginary) part."""
    arr = _as_matrix(a)
    rows, cols = arr.shape
    if rows != cols:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    if rows > MAX_DIM:
        raise ValueError(f"dimension {rows} exceeds the supported cap of {MAX_DIM}")
    try:
        values = np.linalg.eigvals(arr)
    except np.linalg.LinAlgError as err:
        raise ConvergenceError(f"eigenvalue computation failed: {err}") from err
    order = np.lexsort((values.imag, values.real))
    return values[order]


def singular_values(m) -> np.ndarray:
    """Singular values in descending order."""
    arr = np.asarray(m, dtype=complex if np.iscomplexobj(m) else float)
    if arr.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix contains non-finite entries")
    return np.linalg.svd(arr, compute_uv=False)


def rank_tolerance(svals: np.ndarray, shape: tuple[int, int]) -> float:
    """Default rank cutoff: 1e-9 * sigma_max * max(shape)."""
    largest = float(svals[0]) if len(svals) else 0.0
    return DEFAULT_RANK_SCALE * largest * max(shape)


def numerical_rank(m, tol: float | None = None) -> int:
    """Number of singular values strictly above the tolerance."""
    arr = np.asarray(m)
    svals = singular_values(arr)
    if tol is None:
        tol = rank_tolerance(svals, arr.shape)
    return int(np.count_nonzero(svals > tol))


def real_embedding(m: np.ndarray) -> np.ndarray:
    """Map a complex matrix M to [[Re M, -Im M], [Im M, Re M]].

    The embedding doubles every singular value's multiplicity, so complex
    ranks come back as the embedded rank divided by two.
    """
    arr = np.asarray(m, dtype=complex)
    return np.block([[arr.real, -arr.imag], [arr.imag, arr.real]])


def complex_pencil_rank(a, lam: complex, b, tol: float | None = None) -> int:
    """Rank over the complex numbers of [A - lam*I | B]."""
    a_arr = _as_matrix(a, "a")
    b_arr = _as_matrix(b, "b")
    n = a_arr.shape[0]
    if a_arr.shape[1] != n:
        raise ValueError("a must be square")
    if b_arr.shape[0] != n:
        raise ValueError("a and b must have the same number of rows")
    pencil = np.hstack([a_arr - complex(lam) * np.eye(n), b_arr.astype(complex)])
    embedded = real_embedding(pencil)
    return numerical_rank(embedded, tol) // 2
