from fractions import Fraction

import pytest
import sympy as sp

from src.logic import verification
from src.logic.formal_weyl import (
    ChartMismatchError, ComplexCoeff, DifferentialOperator, TruncationConfig, TruncationError, apply_connection, delta,
    delta_inv, fedosov_star, graded_product, is_flat_section, observable_coeff, project_P, sigma_inv,
    star_left_operator, star_right_operator, symbol, weyl_element,
)
from src.logic.moyal_reference import moyal_differential
from src.logic.symbolic_core import RationalCoeff
from src.logic.symplectic_charts import SYMBOLS, get_chart

HBAR = SYMBOLS["hbar"]
T, H, L = SYMBOLS["T"], SYMBOLS["H"], SYMBOLS["L"]


def test_canonical_pair_star_product():
    assert str(fedosov_star("x", "px", TruncationConfig(6, 2))) == "x*px + (i/2)*hbar"


def test_star_commutator_of_conjugate_pair():
    trunc = TruncationConfig(6, 2)
    commutator = fedosov_star("x", "px", trunc).to_sympy() - fedosov_star("px", "x", trunc).to_sympy()
    assert sp.simplify(commutator - sp.I * HBAR) == 0


def test_star_with_a_constant_is_multiplication():
    series = fedosov_star("3", "x^2*py", TruncationConfig(8, 3))
    assert sp.expand(series.to_sympy() - 3 * SYMBOLS["x"] ** 2 * SYMBOLS["py"]) == 0


def test_quadratic_star_product_terminates():
    # x^2 * px^2 = x^2 px^2 + 2 i hbar x px - hbar^2/2
    x, px = SYMBOLS["x"], SYMBOLS["px"]
    series = fedosov_star("x^2", "px^2", TruncationConfig(8, 3))
    assert sp.expand(series.to_sympy() - (x ** 2 * px ** 2 + 2 * sp.I * HBAR * x * px - HBAR ** 2 / 2)) == 0


@pytest.mark.parametrize("grade, order", [(3, 2), (1, 1), (-2, -1)])
def test_truncation_needs_room_for_the_hbar_order(grade, order):
    with pytest.raises(ValueError):
        TruncationConfig(max_grade=grade, max_hbar=order)


def test_fiber_cap_below_hbar_order_is_rejected():
    with pytest.raises(TruncationError):
        star_left_operator("H", TruncationConfig(8, 3, max_fiber_degree=1))


def test_cartesian_lift_is_flat():
    trunc = TruncationConfig(8, 3)
    assert is_flat_section(sigma_inv("x*py - y*px", trunc, "cartesian"))


def test_reference_operator_applied_to_T():
    op = verification.reference_operator("H", "left")
    result = op.apply("T").to_sympy()
    assert sp.expand(result - (H * T - sp.I * HBAR / 2)) == 0


def test_apply_sympy_matches_exact_apply():
    op = verification.reference_operator("L", "left")
    g = "T*chi*L^2"
    exact = op.apply(g).to_sympy()
    symbolic = op.apply_sympy(T * SYMBOLS["chi"] * L ** 2)
    assert sp.simplify(exact - symbolic) == 0


def test_json_form_goes_through_the_parser(golden):
    entries = golden("star_left_L.json")
    op = DifferentialOperator.from_json("action-angle", entries)
    assert DifferentialOperator.from_json("action-angle", op.to_json()) == op
    assert op.hbar_order == 2
    assert len(op.hbar_part(2).terms) == 5


@pytest.mark.slow
@pytest.mark.parametrize("name", ["H", "L"])
def test_left_operators_match_golden_files(golden, name):
    expected = DifferentialOperator.from_json("action-angle", golden(f"star_left_{name}.json"))
    assert star_left_operator(name, TruncationConfig(6, 2)) == expected


@pytest.mark.slow
@pytest.mark.parametrize("name", ["H", "L"])
def test_right_operators_flip_odd_orders(name):
    assert star_right_operator(name, TruncationConfig(6, 2)) == verification.reference_operator(name, "right")


@pytest.mark.slow
def test_third_order_parts_vanish():
    op = star_left_operator("L", TruncationConfig(8, 3))
    assert op.hbar_part(3).is_zero()


@pytest.mark.slow
def test_energy_and_angular_momentum_commute():
    trunc = TruncationConfig(6, 2)
    assert sp.simplify(fedosov_star("H", "L", trunc, "action-angle").to_sympy()
                       - fedosov_star("L", "H", trunc, "action-angle").to_sympy()) == 0


@pytest.mark.slow
def test_action_angle_lift_is_flat():
    assert is_flat_section(sigma_inv("H", TruncationConfig(4, 1), "action-angle"))


def test_angular_momentum_operator_agrees_with_cartesian_moyal(rng):
    cart = get_chart("cartesian")
    x, y, px, py, mass = (SYMBOLS[n] for n in ("x", "y", "px", "py", "M"))
    moyal = moyal_differential("L", "T*chi", order=2)
    # the only second-order contribution is -hbar^2 M / (4 p^2)
    assert sp.simplify(moyal.coeff(HBAR, 2) + mass / (4 * (px ** 2 + py ** 2))) == 0

    series = verification.reference_operator("L", "left").apply("T*chi").to_sympy()
    in_cartesian = series.subs({SYMBOLS[k]: v for k, v in cart.substitutions.items()}, simultaneous=True)
    difference = sp.lambdify((x, y, px, py, mass, HBAR), in_cartesian - moyal, "numpy")
    for _ in range(20):
        pt = rng.uniform(-2.0, 2.0, size=4)
        if pt[2] ** 2 + pt[3] ** 2 < 0.1:
            continue
        assert abs(complex(difference(*pt, 1.0, 0.7))) < 1e-9


CART = "cartesian"
G6 = TruncationConfig(6, 3)
ZERO = (0, 0, 0, 0)
COEFF_TEXTS = ("1", "x", "px*y", "2*py - x", "x^2")


def monomial(mu, s=(), k=0, coeff=1, trunc=G6):
    return weyl_element(CART, {(k, mu, s): coeff}, trunc)


def random_element(rng, trunc=G6, forms=True, terms=3, with_scalar=True):
    ring = get_chart(CART).ring_variables
    data = {}
    while len(data) < terms:
        mu = tuple(int(e) for e in rng.multinomial(int(rng.integers(0, 3)), [0.25] * 4))
        s = tuple(sorted(int(i) for i in rng.choice(4, size=int(rng.integers(0, 3)) if forms else 0, replace=False)))
        if not with_scalar and not any(mu) and not s:
            continue
        re = observable_coeff(COEFF_TEXTS[int(rng.integers(len(COEFF_TEXTS)))], CART) * Fraction(int(rng.integers(1, 4)), 2)
        im = RationalCoeff.constant(ring, Fraction(int(rng.integers(-2, 3)), 3))
        data[(int(rng.integers(0, 2)), mu, s)] = ComplexCoeff(re, im)
    return weyl_element(CART, data, trunc)


def test_fiber_product_of_a_conjugate_pair():
    half_i = ComplexCoeff.constant(get_chart(CART).ring_variables, 0, Fraction(1, 2))
    y1, y3 = monomial((1, 0, 0, 0)), monomial((0, 0, 1, 0))
    assert graded_product(y1, y3) == weyl_element(CART, {(0, (1, 0, 1, 0), ()): 1, (1, ZERO, ()): half_i}, G6)
    assert graded_product(y3, y1) == weyl_element(CART, {(0, (1, 0, 1, 0), ()): 1, (1, ZERO, ()): -half_i}, G6)


def test_fiber_product_with_the_unit(rng):
    one = monomial(ZERO)
    for _ in range(20):
        a = random_element(rng)
        assert graded_product(a, one) == a
        assert graded_product(one, a) == a


def test_product_of_forms_is_exterior():
    a, b = monomial(ZERO, (0,)), monomial(ZERO, (2,))
    assert graded_product(a, b) == monomial(ZERO, (0, 2))
    assert graded_product(b, a) == -monomial(ZERO, (0, 2))
    assert graded_product(a, a).is_zero()


def test_unknown_product_mode_is_rejected():
    with pytest.raises(ValueError):
        graded_product(monomial(ZERO), monomial(ZERO), mode="bracket")


def test_elements_over_different_charts_do_not_mix():
    with pytest.raises(ChartMismatchError):
        graded_product(monomial(ZERO), weyl_element("action-angle", {(0, ZERO, ()): 1}, G6))


@pytest.mark.slow
def test_fiber_product_is_associative(rng):
    for _ in range(200):
        a, b, c = (random_element(rng) for _ in range(3))
        assert graded_product(graded_product(a, b), c) == graded_product(a, graded_product(b, c))


def test_projection_keeps_the_fiber_free_part(rng):
    a = weyl_element(CART, {(0, (1, 1, 0, 0), ()): 1, (0, ZERO, ()): 3, (1, (0, 0, 1, 0), ()): 1}, G6)
    assert project_P(a) == monomial(ZERO, coeff=3)
    for _ in range(20):
        b = random_element(rng)
        assert project_P(project_P(b)) == project_P(b)


def test_delta_inverse_examples():
    assert delta_inv(monomial(ZERO, (0,))) == monomial((1, 0, 0, 0))
    assert delta_inv(monomial((0, 1, 0, 0), (0,))) == monomial((1, 1, 0, 0), coeff=Fraction(1, 2))
    assert delta_inv(monomial((1, 1, 0, 0))).is_zero()


def test_delta_inverse_is_nilpotent_and_adds_a_fiber_factor(rng):
    wide = TruncationConfig(10, 3)
    for _ in range(30):
        a = random_element(rng, wide)
        assert delta_inv(delta_inv(a)).is_zero()
        assert project_P(delta_inv(a)).is_zero()


def test_delta_and_its_inverse_split_the_identity(rng):
    wide = TruncationConfig(10, 3)
    for _ in range(30):
        a = random_element(rng, wide, with_scalar=False)
        assert delta(delta_inv(a)) + delta_inv(delta(a)) == a


def test_cartesian_connection_is_the_exterior_derivative():
    result = apply_connection(weyl_element(CART, {(0, ZERO, ()): "x^2*px"}, G6))
    assert result == weyl_element(CART, {(0, ZERO, (0,)): "2*x*px", (0, ZERO, (2,)): "x^2"}, G6)


def test_abelian_connection_squares_to_zero(rng):
    for _ in range(20):
        a = random_element(rng)
        assert apply_connection(apply_connection(a, "abelian"), "abelian").is_zero()


def test_unknown_connection_mode_is_rejected():
    with pytest.raises(ValueError):
        apply_connection(monomial(ZERO), "curved")


@pytest.mark.parametrize("f", ["x^2*px", "x*py - y*px", "H", "7"])
def test_symbol_of_a_lift_is_the_observable(f):
    series = symbol(sigma_inv(f, G6, CART))
    assert series.terms == ((0, ComplexCoeff.real(observable_coeff(f, CART))),)


@pytest.mark.slow
def test_symbol_of_an_action_angle_lift_is_the_observable():
    series = symbol(sigma_inv("H", TruncationConfig(4, 1), "action-angle"))
    assert series.terms == ((0, ComplexCoeff.real(observable_coeff("H", "action-angle"))),)


def test_cartesian_lift_is_the_taylor_series():
    # sum over mu of d^mu f / mu! y^mu for f = x^2 px
    expected = weyl_element(CART, {
        (0, ZERO, ()): "x^2*px",
        (0, (1, 0, 0, 0), ()): "2*x*px",
        (0, (0, 0, 1, 0), ()): "x^2",
        (0, (2, 0, 0, 0), ()): "px",
        (0, (1, 0, 1, 0), ()): "2*x",
        (0, (2, 0, 1, 0), ()): 1,
    }, G6)
    assert sigma_inv("x^2*px", G6, CART) == expected


def test_constant_lift_is_the_constant():
    assert sigma_inv("7", G6, CART) == monomial(ZERO, coeff=7)
