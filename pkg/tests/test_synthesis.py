"""Gain synthesis tests: placement accuracy, reductions, failure modes."""

import numpy as np
import pytest

from stabkit import expr as ex
from stabkit.synthesis import (
    FeedbackGain,
    UncontrollableError,
    closed_loop_spectrum,
    default_poles,
    gain_expressions,
    place_poles,
    pole_match_error,
    staircase_decompose,
    synthesize,
)
from stabkit.system import load_system, system_from_strings

PLACEMENT_ROUNDS = 100
SQRT_TENTH = 0.31622776601683794


# --- frozen gains for the bundled examples ------------------------------

def test_planar_default_gain(examples_dir):
    gain = synthesize(load_system(examples_dir / "planar_cubic.stab"))
    assert gain.k == pytest.approx(np.array([[-1.5, -2.5]]), abs=1e-12)
    assert gain.target_poles == (-1.0, -1.5)
    assert gain.mode == "continuous"
    assert pole_match_error(gain.achieved_poles, gain.target_poles) <= 1e-10


def test_planar_requested_poles(examples_dir):
    gain = synthesize(load_system(examples_dir / "planar_cubic.stab"), poles=[-1.0, -2.0])
    assert gain.k == pytest.approx(np.array([[-2.0, -3.0]]), abs=1e-12)
    assert gain.target_poles == (-1.0, -2.0)


def test_three_state_default_targets(examples_dir):
    gain = synthesize(load_system(examples_dir / "three_state_mixed.stab"))
    base = -(SQRT_TENTH + 1.0)
    assert gain.target_poles == pytest.approx(
        (base, base - 0.5, base - 1.0), abs=1e-12
    )
    assert pole_match_error(gain.achieved_poles, gain.target_poles) <= 1e-13
    assert all(p.real < -1.0 for p in gain.achieved_poles)


def test_discrete_default_gain(examples_dir):
    gain = synthesize(load_system(examples_dir / "discrete_quadratic.stab"))
    assert gain.k == pytest.approx(np.array([[-1.0]]), abs=1e-12)
    assert gain.target_poles == (0.5,)
    assert gain.mode == "discrete"


# --- partially controllable pairs ---------------------------------------

def test_staircase_dimension():
    stair = staircase_decompose([[1.0, 0.0], [0.0, 0.0]], [[0.0], [1.0]])
    assert stair.controllable_dim == 1
    t = stair.transform
    assert t.T @ t == pytest.approx(np.eye(2), abs=1e-12)


def test_stable_uncontrollable_block_is_preserved():
    sys = system_from_strings("continuous", ["x2", "u1", "-2*x3"], m=1)
    gain = synthesize(sys)
    assert gain.target_poles == (-3.0, -3.5)
    achieved = sorted(gain.achieved_poles, key=lambda z: z.real)
    assert achieved[0] == pytest.approx(-3.5, abs=1e-8)
    assert achieved[1] == pytest.approx(-3.0, abs=1e-8)
    assert achieved[2] == pytest.approx(-2.0, abs=1e-8)
    assert gain.k[0, 2] == pytest.approx(0.0, abs=1e-12)


def test_unstable_uncontrollable_mode_raises(examples_dir):
    with pytest.raises(UncontrollableError, match="lambda=1"):
        synthesize(load_system(examples_dir / "unstable_drift.stab"))


# --- randomized placement accuracy --------------------------------------

def _random_placement_case(rng):
    """Controllable pair with stable desired poles clear of the open loop."""
    n = int(rng.integers(1, 6))
    m = int(rng.integers(1, 3))
    while True:
        a = rng.standard_normal((n, n))
        b = rng.standard_normal((n, m))
        ctrb = np.hstack([np.linalg.matrix_power(a, i) @ b for i in range(n)])
        if np.linalg.matrix_rank(ctrb) == n:
            break
    open_loop = np.linalg.eigvals(a)

    def clear(p):
        return np.min(np.abs(open_loop - p)) > 1e-3

    desired = []
    while len(desired) < n:
        if n - len(desired) >= 2 and rng.random() < 0.4:
            re = -float(rng.uniform(0.5, 3.0))
            im = float(rng.uniform(0.3, 2.0))
            if clear(complex(re, im)):
                desired.extend([complex(re, im), complex(re, -im)])
        else:
            p = -float(rng.uniform(0.5, 3.0))
            if clear(p):
                desired.append(complex(p))
    return a, b, desired


def test_random_placement_accuracy():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(PLACEMENT_ROUNDS):
        a, b, desired = _random_placement_case(rng)
        k = place_poles(a, b, desired, rng=rng)
        err = pole_match_error(np.linalg.eigvals(a + b @ k), desired)
        worst = max(worst, err)
    assert worst <= 1e-6


# --- input validation ---------------------------------------------------

A2 = np.array([[0.0, 1.0], [0.0, 0.0]])
B2 = np.array([[0.0], [1.0]])


def test_pole_count_mismatch():
    with pytest.raises(ValueError, match="expected 2 poles"):
        place_poles(A2, B2, [-1.0])


def test_unpaired_complex_pole():
    with pytest.raises(ValueError, match="not closed under conjugation"):
        place_poles(A2, B2, [complex(-1.0, 1.0), -2.0])


def test_pole_collision_with_open_loop():
    with pytest.raises(ValueError, match="collides"):
        place_poles(A2, B2, [0.0, -1.0])


def test_uncontrollable_pair_rejected():
    with pytest.raises(UncontrollableError):
        place_poles(np.eye(2), B2, [-1.0, -2.0])


def test_synthesize_rejects_unstable_request(examples_dir):
    sys = load_system(examples_dir / "planar_cubic.stab")
    with pytest.raises(ValueError, match="not stable for continuous mode"):
        synthesize(sys, poles=[0.5, -1.0])
    with pytest.raises(ValueError, match="expected 2 poles"):
        synthesize(sys, poles=[-1.0])


def test_synthesize_rejects_unstable_discrete_request(examples_dir):
    sys = load_system(examples_dir / "discrete_quadratic.stab")
    with pytest.raises(ValueError, match="not stable for discrete mode"):
        synthesize(sys, poles=[1.0])


def test_pole_match_error_is_permutation_invariant():
    achieved = [complex(-1, 2), complex(-3, 0), complex(-1, -2)]
    desired = [complex(-3, 0), complex(-1, -2), complex(-1, 2)]
    assert pole_match_error(achieved, desired) == 0.0
    with pytest.raises(ValueError, match="equal length"):
        pole_match_error(achieved, desired[:2])


# --- helpers ------------------------------------------------------------

def test_default_poles_avoid_collisions():
    assert default_poles(3, "continuous", 0.0, avoid=[-1.0]) == [-1.25, -1.5, -2.0]
    assert default_poles(3, "discrete") == [0.5, 0.45, 0.4]


def test_closed_loop_spectrum_matches_gain(examples_dir):
    sys = load_system(examples_dir / "planar_cubic.stab")
    gain = synthesize(sys)
    lam = closed_loop_spectrum(A2, B2, gain.k)
    assert pole_match_error(lam, gain.achieved_poles) <= 1e-12


def test_gain_is_frozen(examples_dir):
    gain = synthesize(load_system(examples_dir / "planar_cubic.stab"))
    with pytest.raises(ValueError):
        gain.k[0, 0] = 0.0
    assert isinstance(gain, FeedbackGain)


def test_gain_expressions_round_trip(examples_dir):
    sys = load_system(examples_dir / "planar_cubic.stab")
    gain = synthesize(sys)
    rendered = gain_expressions(gain, sys)
    assert rendered == ["-1.5*x1 + -2.5*x2"]
    tree = ex.parse_expr(rendered[0])
    for x in ([0.3, -0.7], [1.0, 2.0], [0.0, 0.0]):
        want = float(gain.k[0] @ np.asarray(x))
        assert ex.eval_expr(tree, x, []) == pytest.approx(want, abs=1e-12)


def test_gain_expressions_shifted_equilibrium():
    sys = system_from_strings(
        "continuous", ["x2 - 2", "u1 + 1"], x_eq=[0.0, 2.0], u_eq=[-1.0], m=1
    )
    gain = synthesize(sys)
    rendered = gain_expressions(gain, sys)
    tree = ex.parse_expr(rendered[0])
    for x in ([0.0, 2.0], [0.5, 1.0], [-1.0, 3.0]):
        dx = np.asarray(x) - np.asarray(sys.x_eq)
        want = sys.u_eq[0] + float(gain.k[0] @ dx)
        assert ex.eval_expr(tree, x, []) == pytest.approx(want, abs=1e-12)
    assert ex.eval_expr(tree, list(sys.x_eq), []) == pytest.approx(-1.0, abs=1e-12)
