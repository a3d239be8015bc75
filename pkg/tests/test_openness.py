"""Openness bounds and the empirical covering-rate estimator."""

import math

import numpy as np
import pytest

from stabkit.openness import (
    CoveringGrid,
    covering_bound,
    empirical_covering_modulus,
    lipschitz_bound,
    openness_report,
    regularity_bound,
    shifted_covering_lower_bound,
)
from stabkit.system import Linearization, jacobian, load_system, system_from_strings

THREE_STATE_COV = 0.6144698681796382
THREE_STATE_REG = 1.6274191002440714
THREE_STATE_LIP = 1.6194211432384584


def test_covering_bound_three_state(examples_dir):
    lin = jacobian(load_system(examples_dir / "three_state_mixed.stab"))
    assert covering_bound(lin) == pytest.approx(THREE_STATE_COV, abs=1e-12)
    assert regularity_bound(lin) == pytest.approx(THREE_STATE_REG, abs=1e-12)
    assert lipschitz_bound(lin) == pytest.approx(THREE_STATE_LIP, abs=1e-12)


def test_covering_bound_planar(examples_dir):
    lin = jacobian(load_system(examples_dir / "planar_cubic.stab"))
    assert covering_bound(lin) == pytest.approx(1.0, abs=1e-12)


def test_rank_deficient_floors_to_zero():
    lin = Linearization(np.zeros((2, 2)), np.array([[1.0], [0.0]]))
    assert covering_bound(lin) == 0.0
    assert regularity_bound(lin) == math.inf
    rep = openness_report(lin)
    assert not rep.linearly_open
    assert rep.jacobian_rank == 1


def test_reciprocity_on_random_full_rank():
    rng = np.random.default_rng(12)
    for _ in range(100):
        n = int(rng.integers(1, 7))
        m = int(rng.integers(1, 4))
        lin = Linearization(rng.normal(size=(n, n)), rng.normal(size=(n, m)))
        cov = covering_bound(lin)
        if cov == 0.0:
            continue
        assert abs(cov * regularity_bound(lin) - 1.0) <= 1e-12


def test_openness_report_fields(examples_dir):
    lin = jacobian(load_system(examples_dir / "three_state_mixed.stab"))
    rep = openness_report(lin)
    assert rep.linearly_open
    assert rep.jacobian_rank == 3
    assert rep.cov_bound == pytest.approx(THREE_STATE_COV, abs=1e-12)
    assert rep.reg_bound == pytest.approx(1.0 / rep.cov_bound, abs=1e-12)


def test_shifted_lower_bound():
    assert shifted_covering_lower_bound(1.0, 0.3) == pytest.approx(0.7)
    assert shifted_covering_lower_bound(1.0, 1.0) == pytest.approx(0.0)
    assert shifted_covering_lower_bound(THREE_STATE_COV, 0.31622776601683794) == pytest.approx(
        0.2982421021628003, abs=1e-12
    )
    with pytest.raises(ValueError):
        shifted_covering_lower_bound(1.0, -0.1)


def test_empirical_cubic_sweep(examples_dir):
    spec = load_system(examples_dir / "cubic_input.stab")
    ratios = []
    for r in (0.1, 0.05, 0.025):
        kappa = empirical_covering_modulus(spec, radius=r)
        assert max(kappa / r**2, r**2 / kappa) <= 1.5
        ratios.append(kappa / r)
    assert ratios[0] > ratios[1] > ratios[2]


def test_empirical_identity_near_unit_rate(examples_dir):
    spec = load_system(examples_dir / "identity_input.stab")
    for r in (0.1, 0.05, 0.025):
        assert empirical_covering_modulus(spec, radius=r) >= 0.9


def test_empirical_near_linear_planar(examples_dir):
    spec = load_system(examples_dir / "planar_cubic.stab")
    assert empirical_covering_modulus(spec, radius=0.05) >= 0.9


def test_empirical_matches_linear_bound_within_ten_percent():
    spec = system_from_strings(
        "continuous", ["0.3*x1 - 0.2*x2 + 0.5*u1", "0.4*x1 + 0.1*x2"], m=1
    )
    cov = covering_bound(jacobian(spec))
    fine = CoveringGrid(axis_points=21, directions=64)
    kappa = empirical_covering_modulus(spec, radius=0.1, grid=fine)
    assert abs(kappa - cov) <= 0.1 * cov


def test_empirical_nonincreasing_under_refinement(examples_dir):
    spec = load_system(examples_dir / "planar_cubic.stab")
    coarse = empirical_covering_modulus(spec, radius=0.05, grid=CoveringGrid(directions=16))
    fine = empirical_covering_modulus(spec, radius=0.05, grid=CoveringGrid(directions=48))
    assert fine <= coarse + 1e-3


def test_empirical_constant_map_is_zero():
    spec = system_from_strings("continuous", ["u1 - u1"], m=1)
    assert empirical_covering_modulus(spec, radius=0.1) == 0.0


def test_empirical_dimension_cap():
    spec = system_from_strings(
        "continuous", ["u1", "u2"], m=2
    )
    with pytest.raises(ValueError, match="n \\+ m"):
        empirical_covering_modulus(spec, radius=0.1)


def test_empirical_rejects_bad_radius(examples_dir):
    spec = load_system(examples_dir / "identity_input.stab")
    with pytest.raises(ValueError, match="radius"):
        empirical_covering_modulus(spec, radius=0.0)
