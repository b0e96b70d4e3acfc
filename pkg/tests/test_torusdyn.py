import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GOLDEN, furstenberg_d3, skew_sin, timechange_d1, timechange_d2
from ergomourre.errors import InvalidArgument
from ergomourre.torusdyn import (
    FrequencyVector,
    FurstenbergSpec,
    OrbitQuadrature,
    SkewProductSpec,
    TimeChangeSpec,
    circular_distance,
    cocycle_phase_sum,
    furstenberg_apply,
    furstenberg_inverse_jacobian_bound,
    skew_apply,
    time_change_h,
    time_change_map,
    translate_flow,
    wrap,
)
from ergomourre.trigfun import TrigPoly

# x(1) for dx/dt = 1 + 0.3 cos(2 pi x), x(0) = 0; mpmath Taylor ODE solver, 30 digits.
H_AT_ONE = 0.93759972265700445581


def test_translate_flow_golden():
    assert translate_flow((GOLDEN,), [[0.0]], 2.0)[0, 0] == pytest.approx(0.2360679774997897, abs=1e-15)


def test_wrap_and_distance():
    assert wrap(np.array([-0.25, 1.5]))[0] == pytest.approx(0.75)
    assert circular_distance(0.95, 0.05) == pytest.approx(0.1)


def test_rational_frequency_is_flagged():
    assert FrequencyVector((0.5,)).rational_suspected
    assert not FrequencyVector((GOLDEN,)).rational_suspected
    with pytest.raises(InvalidArgument):
        FrequencyVector((0.25,), strict=True)


def test_flow_kind_tests_only_the_vector():
    # (1, golden) is independent as a flow direction even though y_1 is an integer
    assert not FrequencyVector((1.0, GOLDEN), kind="flow").rational_suspected


def test_skew_degenerate_guard():
    y = FrequencyVector((GOLDEN, math.sqrt(2) - 1))
    with pytest.raises(InvalidArgument):
        SkewProductSpec(y, [[1, -1], [1, -1]], (), (1, -1))
    spec = SkewProductSpec(y, [[1, -1], [1, -1]], (), (1, -1), allow_degenerate=True)
    assert spec.degenerate


def test_skew_rejects_non_integer_N():
    with pytest.raises(InvalidArgument):
        SkewProductSpec(FrequencyVector((GOLDEN,)), [[0.5]], (), (1,))


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 40))
def test_cocycle_sum_matches_iteration(x0, z0, n):
    spec = skew_sin(0.5)
    x, z = np.array([[x0]]), np.array([[z0]])
    for _ in range(n):
        x, z = skew_apply(spec, x, z)
    S = cocycle_phase_sum(spec, [[x0]], n)
    assert circular_distance(z[0, 0], (z0 + S[0]) % 1.0) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=3, max_size=3))
def test_furstenberg_inverse_round_trip(pt):
    spec = furstenberg_d3()
    x = np.array([pt])
    back = furstenberg_apply(spec, furstenberg_apply(spec, x), "inverse")
    assert np.max(circular_distance(back, wrap(x))) < 1e-12


def test_furstenberg_index_validation():
    with pytest.raises(InvalidArgument):
        FurstenbergSpec(2, GOLDEN, {(2, 1): 0})
    with pytest.raises(InvalidArgument):
        FurstenbergSpec(2, GOLDEN, {(1, 2): 1})
    spec = FurstenbergSpec(3, GOLDEN, {"2,1": 1, "3,2": 2})
    assert spec.coef(3, 2) == 2 and spec.coef(3, 1) == 0


def test_inverse_jacobian_bound_dominates_finite_difference():
    spec = furstenberg_d3()
    B = furstenberg_inverse_jacobian_bound(spec, 3)
    rng = np.random.default_rng(5)
    eps = 1e-6
    for x in rng.random((20, 3)):
        J = np.empty((3, 3))
        for c in range(3):
            e = np.zeros(3)
            e[c] = eps
            a = furstenberg_apply(spec, (x + e)[None], "inverse")[0]
            b = furstenberg_apply(spec, (x - e)[None], "inverse")[0]
            J[:, c] = ((a - b + 0.5) % 1.0 - 0.5) / (2 * eps)
        assert np.all(np.abs(J) <= B + 1e-6)


def test_time_change_h_against_high_precision_ode():
    h = time_change_h(timechange_d1(), np.array([[0.0]]), 1.0, tol=1e-13)
    assert abs(h[0] - H_AT_ONE) < 1e-12


def test_time_change_rejects_nonpositive_speed():
    with pytest.raises(InvalidArgument):
        TimeChangeSpec(1, FrequencyVector((1.0,), kind="flow"), TrigPoly.from_harmonics(1, 0.5, [([1], 1.0, 0.0)]))


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_flow_property(p1, p2, s, t):
    spec = timechange_d2()
    p = np.array([[p1, p2]])
    one = time_change_map(spec, p, s + t, tol=1e-12)
    two = time_change_map(spec, time_change_map(spec, p, s, tol=1e-12), t, tol=1e-12)
    assert np.max(circular_distance(one, two)) < 1e-10


def test_orbit_quadrature_backward_inverts_forward():
    spec = timechange_d1()
    p = np.array([[0.2], [0.7]])
    fwd = time_change_map(spec, p, 3.0, tol=1e-12)
    q = OrbitQuadrature(spec, tol=1e-12)
    back = wrap(fwd + q.run(fwd, 3.0, -1.0)["u"][:, None] * -1.0 * spec.y.vec)
    assert np.max(circular_distance(back, p)) < 1e-10
