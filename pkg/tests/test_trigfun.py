import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergomourre.errors import DomainError, InvalidArgument
from ergomourre.trigfun import (
    GridFunction,
    TrigPoly,
    certified_infimum,
    dumps,
    evaluate,
    exp_poly,
    from_samples,
    grid_points,
    hermitize,
    lie_derivative,
    loads,
    log_positive,
    max_coeff_diff,
    partial,
    product,
    sample,
    translate_pullback,
    unit_phase,
)

# Bessel J_n(0.5), n = 0..6, computed with mpmath at 30 digits.
BESSEL_HALF = [
    0.93846980724081290423,
    0.24226845767487388638,
    0.030604023458682641307,
    0.0025637299945872440754,
    0.00016073647636428759684,
    8.053627241357474086e-6,
    3.3606846286188487954e-7,
]
# mean of log(1 + 0.3 cos 2 pi x) = log((1 + sqrt(1 - 0.09)) / 2), mpmath.
LOG_MEAN = -0.023299742358466877063


def poly_strategy(d=1, max_k=4, max_terms=5):
    key = st.tuples(*[st.integers(-max_k, max_k)] * d)
    val = st.complex_numbers(max_magnitude=3.0, allow_nan=False, allow_infinity=False)
    return st.dictionaries(key, val, max_size=max_terms).map(lambda c: TrigPoly(d, c))


def real_poly_strategy(d=1, max_k=4):
    return poly_strategy(d, max_k).map(hermitize)


def test_harmonic_constructor_matches_pointwise():
    p = TrigPoly.from_harmonics(1, 0.5, [([1], 2.0, -1.0), ([3], 0.0, 0.25)])
    x = np.linspace(0, 1, 17)
    ref = 0.5 + 2 * np.cos(2 * np.pi * x) - np.sin(2 * np.pi * x) + 0.25 * np.sin(6 * np.pi * x)
    assert p.is_real
    assert np.max(np.abs(p(x) - ref)) < 1e-14
    assert p.degree == 3
    assert p.mean == 0.5


def test_negative_dimension_rejected():
    with pytest.raises(InvalidArgument):
        TrigPoly(0, {})


def test_dimension_mismatch_rejected():
    with pytest.raises(InvalidArgument):
        TrigPoly.cos([1]) + TrigPoly.cos([1, 0])


@settings(max_examples=60, deadline=None)
@given(poly_strategy(), poly_strategy(), st.floats(0, 1))
def test_product_is_pointwise(f, g, x):
    assert abs(product(f, g)(x) - f(x) * g(x)) < 1e-11


@settings(max_examples=60, deadline=None)
@given(poly_strategy(d=2, max_k=3), st.floats(0, 1), st.floats(0, 1))
def test_translation_pullback(f, a, b):
    v = np.array([a, b])
    x = np.array([0.3, 0.7])
    assert abs(translate_pullback(f, v)(x) - f((x + v) % 1.0)) < 1e-11


@settings(max_examples=60, deadline=None)
@given(real_poly_strategy(), st.floats(0.05, 0.95))
def test_lie_derivative_matches_finite_difference(f, x):
    h = 1e-5
    fd = (f(x + h) - f(x - h)) / (2 * h)
    assert abs(lie_derivative(f, [1.0])(x) - fd) < 1e-5 * (1 + f.lipschitz_bound() ** 2)


@settings(max_examples=40, deadline=None)
@given(real_poly_strategy(d=2, max_k=3))
def test_grid_round_trip(f):
    back = from_samples(sample(f, (9, 11)))
    assert max_coeff_diff(f, back) < 1e-12


@settings(max_examples=40, deadline=None)
@given(real_poly_strategy())
def test_certified_infimum_is_lower_bound(f):
    lower, _ = certified_infimum(f, 64)
    fine = f(np.linspace(0, 1, 20001)).real
    assert lower <= fine.min() + 1e-12


def test_certified_infimum_of_cosine():
    lower, argmin = certified_infimum(TrigPoly.cos([1]), 4096)
    # grid minimum -1 minus 2 pi / (2 * 4096)
    assert lower == pytest.approx(-1.0 - math.pi / 4096, abs=1e-15)
    assert argmin[0] == pytest.approx(0.5)


def test_unit_phase_bessel_coefficients():
    P, res = unit_phase(TrigPoly.sin([1], 0.5 / (2 * math.pi)))
    # exp(i z sin t) = sum J_n(z) e^{i n t}
    for n, jn in enumerate(BESSEL_HALF):
        assert abs(P.coefficient([n]) - jn) < 1e-15
        assert abs(P.coefficient([-n]) - (-1) ** n * jn) < 1e-15
    assert res <= 1e-13  # bound includes the FFT round-off floor


def test_unit_phase_rejects_complex():
    with pytest.raises(InvalidArgument):
        unit_phase(TrigPoly.exponential([1]))


def test_log_positive_mean():
    f = TrigPoly.from_harmonics(1, 1.0, [([1], 0.3, 0.0)])
    L, res = log_positive(f)
    assert abs(L.mean.real - LOG_MEAN) < 1e-15
    x = np.linspace(0, 1, 101)
    assert np.max(np.abs(L(x).real - np.log(f(x).real))) <= res + 1e-14


def test_log_positive_domain():
    with pytest.raises(DomainError):
        log_positive(TrigPoly.cos([1]))


def test_exp_poly_residual():
    f = TrigPoly.cos([0, 1], 0.2)
    E, res = exp_poly(f)
    pts = np.random.default_rng(0).random((200, 2))
    assert np.max(np.abs(E(pts).real - np.exp(f(pts).real))) <= res + 1e-14


def test_sample_rejects_aliasing():
    with pytest.raises(InvalidArgument):
        sample(TrigPoly.cos([4]), 8)


def test_anisotropic_grid_shape():
    f = TrigPoly.cos([0, 5])
    gf = sample(f, (2, 16))
    assert gf.shape == (2, 16)
    assert np.allclose(gf.samples.real, f(grid_points(2, (2, 16))).real.reshape(2, 16))


def test_partial_derivative_axis():
    f = TrigPoly.from_harmonics(2, 0.0, [([1, 2], 1.0, 0.0)])
    d1 = partial(f, 1)
    x = np.array([0.1, 0.2])
    assert abs(d1(x) - (-4 * math.pi * math.sin(2 * math.pi * 0.5))) < 1e-12


@settings(max_examples=30, deadline=None)
@given(poly_strategy(d=2))
def test_serialization_round_trip(f):
    assert max_coeff_diff(f, loads(dumps(f))) == 0.0


def test_loads_rejects_false_real_flag():
    text = "trigpoly d=1 real=1 terms=1\n1 1.0 0.0\n"
    with pytest.raises(InvalidArgument):
        loads(text)


def test_evaluate_dimension_check():
    with pytest.raises(InvalidArgument):
        evaluate(TrigPoly.cos([1, 1]), np.zeros((3, 3)))


def test_grid_function_reshapes():
    gf = GridFunction(2, 4, np.arange(16.0))
    assert gf.shape == (4, 4)
    assert gf.sup() == 15.0
