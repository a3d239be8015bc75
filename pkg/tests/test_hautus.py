"""Spectral classification and stabilizability rank tests."""

import math

import numpy as np
import pytest

from stabkit.hautus import (
    format_eigenvalue,
    hautus_asymptotic,
    hautus_full_spectrum,
    kalman_controllability_rank,
    spectral_profile,
)
from stabkit.system import jacobian, load_system

SQRT_TENTH = 0.31622776601683794


def test_profile_three_state(examples_dir):
    lin = jacobian(load_system(examples_dir / "three_state_mixed.stab"))
    prof = spectral_profile(lin.a, "continuous")
    assert prof.eta == pytest.approx(SQRT_TENTH, abs=1e-12)
    assert prof.eta_tilde == pytest.approx(SQRT_TENTH, abs=1e-12)
    assert prof.unstable_real_only
    assert len(prof.unstable) == 2
    # the zero eigenvalue sits on the boundary and is flagged
    assert any(abs(v) <= 1e-8 for v in prof.boundary_warnings)


def test_profile_conservative_boundary_inclusion():
    prof = spectral_profile([[0.0, 1.0], [0.0, 0.0]], "continuous")
    assert len(prof.unstable) == 2
    assert prof.eta == pytest.approx(0.0, abs=1e-12)
    assert len(prof.boundary_warnings) == 2


def test_profile_stable_matrix_has_empty_unstable_set():
    prof = spectral_profile([[-1.0, 0.0], [0.0, -2.0]], "continuous")
    assert prof.unstable == ()
    assert prof.eta == -math.inf
    assert prof.eta_tilde == pytest.approx(2.0)


def test_profile_discrete_unit_circle():
    prof = spectral_profile([[1.5]], "discrete")
    assert prof.unstable == (1.5 + 0j,)
    assert prof.eta == pytest.approx(1.5)
    prof = spectral_profile([[0.5]], "discrete")
    assert prof.unstable == ()
    prof = spectral_profile([[1.0]], "discrete")
    assert len(prof.unstable) == 1
    assert len(prof.boundary_warnings) == 1


def test_profile_complex_pair_not_real_only():
    prof = spectral_profile([[1.0, -2.0], [2.0, 1.0]], "continuous")
    assert not prof.unstable_real_only
    assert prof.eta == -math.inf  # no real unstable member
    assert prof.eta_tilde == pytest.approx(abs(complex(1, 2)))


def test_profile_rejects_bad_mode():
    with pytest.raises(ValueError):
        spectral_profile(np.eye(2), "sampled")


def test_hautus_holds_on_controllable_fixtures(examples_dir):
    for name in ("planar_cubic", "three_state_mixed"):
        lin = jacobian(load_system(examples_dir / f"{name}.stab"))
        prof = spectral_profile(lin.a, "continuous")
        result = hautus_asymptotic(lin.a, lin.b, prof)
        assert result.holds
        assert result.failures == ()
        assert hautus_full_spectrum(lin.a, lin.b)


def test_hautus_fails_at_unreachable_unstable_mode(examples_dir):
    lin = jacobian(load_system(examples_dir / "unstable_drift.stab"))
    prof = spectral_profile(lin.a, "continuous")
    result = hautus_asymptotic(lin.a, lin.b, prof)
    assert not result.holds
    assert any(abs(v - 1.0) <= 1e-9 for v in result.failures)
    assert not hautus_full_spectrum(lin.a, lin.b)
    # the stable direction is still reachable, so the Kalman rank is 1
    assert kalman_controllability_rank(lin.a, lin.b) == 1


def test_kalman_rank_known_pairs():
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    b = np.array([[0.0], [1.0]])
    assert kalman_controllability_rank(a, b) == 2
    assert kalman_controllability_rank(np.zeros((2, 2)), np.zeros((2, 1))) == 0


def _random_pair(rng, controllable):
    n = int(rng.integers(2, 7))
    m = int(rng.integers(1, 3))
    if controllable:
        while True:
            a = rng.normal(size=(n, n))
            b = rng.normal(size=(n, m))
            if kalman_controllability_rank(a, b) == n:
                return a, b, True
    k = int(rng.integers(1, n))  # dimension of the reachable block
    while True:
        a_c = rng.normal(size=(k, k))
        b_c = rng.normal(size=(k, m))
        if kalman_controllability_rank(a_c, b_c) == k:
            break
    a = np.zeros((n, n))
    a[:k, :k] = a_c
    a[k:, k:] = rng.normal(size=(n - k, n - k))
    a[:k, k:] = rng.normal(size=(k, n - k))
    b = np.vstack([b_c, np.zeros((n - k, m))])
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return q.T @ a @ q, q.T @ b, False


def test_full_spectrum_hautus_equals_kalman():
    rng = np.random.default_rng(21)
    for trial in range(60):
        a, b, controllable = _random_pair(rng, controllable=trial % 2 == 0)
        n = a.shape[0]
        assert (kalman_controllability_rank(a, b) == n) == controllable
        assert hautus_full_spectrum(a, b) == controllable


def test_full_spectrum_implies_asymptotic():
    rng = np.random.default_rng(22)
    for _ in range(40):
        a, b, _ = _random_pair(rng, controllable=True)
        prof = spectral_profile(a, "continuous")
        assert hautus_asymptotic(a, b, prof).holds


def test_format_eigenvalue():
    assert format_eigenvalue(1 + 0j) == "1"
    assert format_eigenvalue(-0.5 + 0.25j) == "-0.5+0.25j"
    assert format_eigenvalue(-0.5 - 0.25j) == "-0.5-0.25j"
