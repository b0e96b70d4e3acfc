import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GOLDEN, furstenberg_d2, skew_sin, timechange_d1, timechange_d2
from ergomourre import mourre, opcalc
from ergomourre.errors import DegenerateSpec, EmptySelection, InvalidArgument
from ergomourre.torusdyn import FrequencyVector, SkewProductSpec
from ergomourre.trigfun import TrigPoly, certified_infimum, max_coeff_diff

TWO_PI = 2 * math.pi
LIMIT = (TWO_PI * GOLDEN) ** 2  # 15.079413702802341092 by mpmath


def degenerate_spec():
    y = FrequencyVector((GOLDEN, math.sqrt(2) - 1))
    return SkewProductSpec(y, [[1, -1], [1, -1]], (), (1, -1), allow_degenerate=True)


@pytest.mark.parametrize("eps", [0.0, 0.5, 1.5])
def test_g_skew_closed_form(eps):
    expected = TrigPoly.from_harmonics(1, LIMIT, [([1], LIMIT * eps, 0.0)])
    assert max_coeff_diff(mourre.g_skew(skew_sin(eps)), expected) < 1e-12


def test_limit_constant_value():
    assert LIMIT == pytest.approx(15.079413702802341092, abs=1e-13)


def test_g_skew_degenerate():
    with pytest.raises(DegenerateSpec):
        mourre.g_skew(degenerate_spec())


def test_g_furstenberg_closed_form():
    assert max_coeff_diff(mourre.g_furstenberg(furstenberg_d2(), 2), TrigPoly.from_harmonics(1, 1.0, [([1], 1.5, 0.0)])) < 1e-15


def test_g_timechange_closed_form():
    # ln f = 0.2 cos(2 pi x2), so g = 1/2 + 0.2 pi sin(2 pi x2)
    g, res = mourre.g_timechange(timechange_d2())
    expected = TrigPoly.from_harmonics(2, 0.5, [([0, 1], 0.0, 0.2 * math.pi)])
    assert max_coeff_diff(g, expected) < 1e-13
    assert res < 1e-10


def test_certify_positive_g_at_first_step():
    # inf g = LIMIT / 2 sits just under the default ratio, so accept any positive bound
    cert = mourre.certify(skew_sin(0.5), n_max=64, min_ratio=0.0)
    assert cert.certified and cert.n_star == 1
    assert cert.a == pytest.approx(certified_infimum(mourre.g_skew(skew_sin(0.5)))[0])
    assert cert.residuals["commutator_n1"] <= cert.tolerances["commutator_n1"]
    assert [r["n"] for r in cert.table] == [1, 2, 4, 8, 16, 32, 64]


def test_certify_scale_is_linear():
    a1 = mourre.certify(skew_sin(1.5), n_max=64, check_window=None)
    a2 = mourre.certify(skew_sin(1.5), n_max=64, scale=2.0, check_window=None)
    assert a2.a == pytest.approx(2 * a1.a, rel=1e-12)
    assert a2.n_star == a1.n_star


def test_certify_failure_status():
    cert = mourre.certify(skew_sin(1.5), n_max=2, check_window=None)
    assert cert.status == "failed" and cert.n_star is None


def test_certify_rejects_bad_arguments():
    with pytest.raises(InvalidArgument):
        mourre.certify(skew_sin(0.5), min_ratio=1.0)
    with pytest.raises(InvalidArgument):
        mourre.certify(skew_sin(0.5), scale=0.0)


def test_certify_timechange_d1():
    cert = mourre.certify(timechange_d1(), n_max=64)
    assert cert.certified and cert.limit == 0.5
    assert cert.a >= 0.25


def test_report_is_json_ready():
    import json

    rep = mourre.certify(skew_sin(0.5), n_max=8).report()
    assert json.loads(json.dumps(rep))["status"] == "certified"


def test_describe_records_diophantine_note():
    assert "heuristic" in mourre.describe(skew_sin(0.5))["diophantine_note"]


@pytest.mark.parametrize("n", [1, 2, 3])
def test_commutator_residual_small_window(n):
    res, contract = mourre.commutator_residual(skew_sin(0.5), opcalc.FreqWindow(1, 64), n, trials=10,
                                               return_contract=True)
    assert res <= contract


def test_commutator_residual_furstenberg():
    res = mourre.commutator_residual(furstenberg_d2(), opcalc.FreqWindow(1, 96), 2, trials=10)
    assert res < 1e-9


def test_commutator_margin_guard():
    with pytest.raises(InvalidArgument):
        mourre.commutator_residual(skew_sin(0.5), opcalc.FreqWindow(1, 64), 2, margin=3)


def test_commutator_wrong_g_is_detected():
    # a conjugate operator scaled by 2 against g scaled by 1 must break the identity
    spec = skew_sin(0.5)
    W = opcalc.FreqWindow(1, 48)
    U, _ = opcalc.assemble_koopman(spec, W)
    A = opcalc.conjugate_diagonal(spec, W, scale=2.0)
    G = opcalc.multiplication_matrix(mourre.g_skew(spec), W)
    D = A.entries @ U.entries - U.entries @ A.entries - G.entries @ U.entries
    assert np.linalg.norm(D[:, W.interior_mask(U.band + 1)], 2) > 1.0


def test_bridge_commuting_case_vanishes():
    assert mourre.bridge_check(commuting=True) < 1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bridge_converges_with_order(seed):
    assert mourre.bridge_check(6, 32, seed) < 1e-10
    assert mourre.bridge_check(6, 2, seed) > mourre.bridge_check(6, 32, seed)


def test_bridge_validation():
    with pytest.raises(InvalidArgument):
        mourre.bridge_check(dim=0)


@pytest.mark.parametrize("c", [0.5, 2.0])
def test_quadratic_form_constant_g(c):
    W = opcalc.FreqWindow(1, 20)
    h = mourre.generator_diagonal((GOLDEN,), W)
    J = (1.0, 50.0)
    lam = mourre.quadratic_form_diagnostic(h, TrigPoly.constant(c, 1), W, J)
    sel = (h**2 >= J[0]) & (h**2 <= J[1])
    # diagonal form 4 c h^2 - 2 inf(J) c
    assert lam == pytest.approx(4 * c * np.min(h[sel] ** 2) - 2 * J[0] * c, rel=1e-12)


def test_quadratic_form_empty_selection():
    W = opcalc.FreqWindow(1, 2)
    with pytest.raises(EmptySelection):
        mourre.quadratic_form_diagnostic(mourre.generator_diagonal((GOLDEN,), W), TrigPoly.constant(1.0), W,
                                         (1e6, 2e6))


def test_conjugate_field_d1():
    cf = mourre.conjugate_field(timechange_d1(), 10.0, (64,), tol=1e-6)
    assert cf.residual < 5e-5
    assert cf.field.shape == (64, 1)
