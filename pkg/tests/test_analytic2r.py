import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from calibdesign.analytic2r import (
    COMPARISON_REFERENCE,
    TwoLinkCase,
    accuracy_gain,
    comparison_row,
    cov_2r,
    decompose_plan,
    error_reduction,
    optimal_S,
    rho0_2r,
    rho0_min,
    rho0_of_sum,
    rho_d_squared,
)
from calibdesign.errors import IdentifiabilityError, InputError
from calibdesign.metrics import rho0_squared
from calibdesign.models import two_link_model
from conftest import q2_plan

q20s = st.floats(-math.pi, math.pi).filter(lambda x: abs(math.cos(x)) < 0.999)


@given(q20s, st.integers(2, 8))
def test_optimum_over_grid(q20, m):
    case = TwoLinkCase(m=m, q20=q20)
    grid = np.linspace(-m, m, 10_001)[1:-1]
    values = rho0_of_sum(grid, m, q20)
    best = rho0_min(case)
    assert best <= values.min() * (1 + 1e-12)
    assert rho0_of_sum(optimal_S(case), m, q20) == pytest.approx(best, rel=1e-12)


@given(st.floats(-math.pi, math.pi), st.integers(2, 8), st.floats(0.1, 3.0))
def test_closed_form_minimum(q20, m, sigma):
    case = TwoLinkCase(sigma=sigma, m=m, q20=q20)
    assert rho0_min(case) == pytest.approx(sigma**2 / m * (1 + abs(math.sin(q20))), rel=1e-12)
    assert abs(optimal_S(case)) <= m


@pytest.mark.parametrize("m", [2, 3, 4, 5, 7])
@pytest.mark.parametrize("q20_deg", [0, 20, 45, 80, 90, 100, 150, 179, 180, -60])
def test_decomposition_hits_target(m, q20_deg):
    case = TwoLinkCase(m=m, q20=math.radians(q20_deg))
    q2 = decompose_plan(case)
    assert len(q2) == m
    assert len(np.unique(np.round(q2, 12))) <= 3
    assert np.sum(np.cos(q2)) == pytest.approx(optimal_S(case), abs=1e-9)


def test_odd_decomposition_switches_to_half_turn():
    case = TwoLinkCase(m=3, q20=math.radians(170))
    q2 = decompose_plan(case)
    assert math.pi in q2
    with pytest.raises(InputError):
        decompose_plan(TwoLinkCase(m=3), S_target=3.5)


def test_covariance_formula():
    case = TwoLinkCase(sigma=0.5, m=2)
    np.testing.assert_allclose(cov_2r(case, np.radians([90, -90])), 0.125 * np.eye(2), atol=1e-15)
    with pytest.raises(IdentifiabilityError):
        rho0_2r(case, [0.0, 0.0])


@pytest.mark.parametrize("q20_deg", [0, 30, 60, 90, 120, 150, 180])
def test_joint_offsets_share_the_link_length_accuracy(q20_deg):
    lengths = two_link_model(parameter_set="link-lengths")
    offsets = two_link_model(parameter_set="joint-offsets")
    plan = q2_plan([25.0, -80.0, 140.0], q1=0.4)
    q0 = [-0.3, math.radians(q20_deg)]
    a = rho0_squared(lengths, lengths.nominal, plan, q0)
    b = rho0_squared(offsets, offsets.nominal, plan, q0)
    assert b == pytest.approx(a, rel=1e-9)


@pytest.mark.parametrize("a_deg", [10.0, 56.6, 90.0, 120.0])
def test_four_parameter_case_doubles(a_deg):
    # with lengths and offsets, m = 3 and plan (0, +-a): twice the two-parameter value
    full = two_link_model(parameter_set="both")
    q0 = np.radians([-45.0, 20.0])
    value = rho0_squared(full, full.nominal, q2_plan([0.0, a_deg, -a_deg]), q0)
    s = 1 + 2 * math.cos(math.radians(a_deg))
    assert value == pytest.approx(2 * rho0_of_sum(s, 3, q0[1]), rel=1e-9)


def test_d_optimal_value():
    assert rho_d_squared(TwoLinkCase(sigma=2.0, m=4)) == 2.0


def test_table_rows_and_discrepancy():
    for deg in (0, 30, 90, 150, 180):
        row = comparison_row(math.radians(deg))
        ref_rho, ref_gain = COMPARISON_REFERENCE[deg]
        assert row.rho0_sq == pytest.approx(ref_rho, abs=1e-12)
        assert abs(row.gain - ref_gain) < 0.5
        assert not row.discrepancy
    for deg in (60, 120):
        row = comparison_row(math.radians(deg))
        assert row.rho0_sq == pytest.approx((1 + math.sin(math.radians(60))) / 2, abs=1e-12)
        assert row.discrepancy


def test_gain_definitions():
    assert accuracy_gain(1.0, 1.0) == 0.0
    assert accuracy_gain(math.sqrt(2), 1.0) == pytest.approx(41.42, abs=0.01)
    assert error_reduction(2.0, 1.0) == 50.0


def test_case_validation():
    with pytest.raises(InputError):
        TwoLinkCase(m=1)
    with pytest.raises(InputError):
        TwoLinkCase(parameter_set="both", m=2)
    with pytest.raises(InputError):
        TwoLinkCase(l1=-1.0)
    with pytest.raises(InputError):
        TwoLinkCase(parameter_set="everything")
