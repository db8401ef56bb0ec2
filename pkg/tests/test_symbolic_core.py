from fractions import Fraction

import pytest

from src.logic.symbolic_core import (
    BinOp, ExpressionSyntaxError, Neg, Num, Pow, RationalCoeff, UnknownIdentifierError, Var,
    parse_observable, partial_derivative, print_observable, ratfun_arith, substitute,
)

XY = ("x", "y")


def coeff(text, variables=XY):
    return parse_observable(text).to_coeff(variables)


@pytest.mark.parametrize("text, printed", [
    ("x*px", "x*px"),
    ("(x+y)*px", "(x + y)*px"),
    ("x - (y - px)", "x - (y - px)"),
    ("0.5*x", "0.5*x"),
    ("-x^2", "-x^2"),
    ("(-x)^2", "(-x)^2"),
    ("-(x^2)", "-x^2"),
    ("x*-y", "x*-y"),
    ("H^-1*L", "H^-1*L"),
])
def test_print_is_canonical(text, printed):
    assert print_observable(parse_observable(text)) == printed


def test_printed_text_parses_back_to_the_same_tree():
    for text in ("x*px + y*py", "(px^2 + py^2)/(2*M)", "-(x^2) + 3/4*hbar", "M*(x*px + y*py)/(px^2 + py^2)"):
        expr = parse_observable(text)
        assert parse_observable(str(expr)) == expr


def test_unary_minus_binds_looser_than_powers():
    assert parse_observable("-x^2").root == Neg(Pow(Var("x"), 2))
    assert parse_observable("(-x)^2").root == Pow(Neg(Var("x")), 2)
    assert parse_observable("-x*y").root == BinOp("*", Neg(Var("x")), Var("y"))
    assert parse_observable("-x^2").evaluate({"x": 3.0}) == pytest.approx(-9.0)


def test_derivative_keeps_the_sign_of_negative_powers():
    derivative = partial_derivative(parse_observable("0 - x^3/3"), "x")
    assert derivative.evaluate({"x": 2.0}) == pytest.approx(-4.0)
    assert derivative.to_coeff(("x",)) == coeff("-x^2", ("x",))


def test_decimals_are_exact():
    assert parse_observable("0.1").root == Num(Fraction(1, 10))
    assert coeff("0.1*x + 0.2*x") == coeff("3*x/10")


def test_operator_precedence():
    assert parse_observable("x + y*px").root == BinOp("+", Var("x"), BinOp("*", Var("y"), Var("px")))


def test_unknown_identifier_is_rejected():
    with pytest.raises(UnknownIdentifierError, match="'z' at offset 2"):
        parse_observable("x*z")


@pytest.mark.parametrize("text, position", [("x +", 3), ("x $ y", 2), ("x^0.5", 2), ("(x + y", 6), ("x y", 2)])
def test_syntax_errors_report_the_offset(text, position):
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_observable(text)
    assert info.value.position == position


def test_rational_functions_are_kept_in_lowest_terms():
    assert coeff("(x^2 - y^2)/(x - y)") == coeff("x + y")
    assert str(coeff("(x^2 - y^2)/(x - y)")) == "x + y"
    assert coeff("x/(2*x)") == Fraction(1, 2)


def test_arithmetic_matches_the_operators():
    a, b = coeff("x + 1"), coeff("y")
    assert ratfun_arith(a, b, "add") == coeff("x + y + 1")
    assert ratfun_arith(a, b, "sub") == coeff("x - y + 1")
    assert ratfun_arith(a, b, "mul") == coeff("x*y + y")
    assert ratfun_arith(a, b, "div") == coeff("(x + 1)/y")


def test_division_by_zero_raises():
    with pytest.raises(ZeroDivisionError):
        ratfun_arith(coeff("x"), RationalCoeff.zero(XY), "div")
    with pytest.raises(ZeroDivisionError):
        coeff("x/(y - y)")


def test_rings_do_not_mix():
    with pytest.raises(ValueError, match="Ring mismatch"):
        coeff("x") + coeff("x", ("x", "y", "px"))


def test_partial_derivative_of_expressions_and_coefficients():
    expr = parse_observable("x^2*y + y/x")
    derivative = partial_derivative(expr, "x")
    assert derivative.to_coeff(XY) == coeff("2*x*y - y/x^2")
    assert partial_derivative(coeff("x^3"), "x") == coeff("3*x^2")
    assert partial_derivative(parse_observable("x"), "px").to_coeff(("x", "px")) == 0


def test_evaluate():
    assert coeff("(x + y)/2").evaluate({"x": 1.0, "y": 2.0}) == pytest.approx(1.5)
    assert parse_observable("x^-2").evaluate({"x": 2.0}) == pytest.approx(0.25)
    with pytest.raises(UnknownIdentifierError):
        coeff("x + y").evaluate({"x": 1.0})


def test_substitute_expands_definitions():
    H = substitute(parse_observable("2*M*H"), {"H": "(px^2 + py^2)/(2*M)"})
    assert H.to_coeff(("px", "py", "M")) == coeff("px^2 + py^2", ("px", "py", "M"))


def random_tree(rng, depth=3, names=("x", "y", "px", "hbar")):
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.6:
            return Var(str(rng.choice(names)))
        return Num(Fraction(int(rng.integers(1, 20)), int(rng.choice([1, 2, 4, 5]))))
    kind = int(rng.integers(0, 6))
    if kind < 3:
        return BinOp("+-*"[kind], random_tree(rng, depth - 1, names), random_tree(rng, depth - 1, names))
    if kind == 3:
        # denominators stay nonzero
        return BinOp("/", random_tree(rng, depth - 1, names), Var(str(rng.choice(names))))
    if kind == 4:
        return Neg(random_tree(rng, depth - 1, names))
    if rng.random() < 0.3:
        return Pow(Var(str(rng.choice(names))), -int(rng.integers(1, 3)))
    return Pow(random_tree(rng, depth - 1, names), int(rng.integers(0, 4)))


def test_random_trees_survive_printing(rng):
    for _ in range(1000):
        tree = random_tree(rng)
        text = print_observable(tree)
        assert parse_observable(text).root == tree, text


def test_printed_coefficients_parse_back(rng):
    variables = ("x", "y", "px", "hbar")
    for _ in range(200):
        value = parse_observable(print_observable(random_tree(rng))).to_coeff(variables)
        assert parse_observable(str(value)).to_coeff(variables) == value, str(value)


def random_coeff(rng, variables=XY):
    return parse_observable(print_observable(random_tree(rng, 2, variables))).to_coeff(variables)


def test_ring_laws_on_random_elements(rng):
    for _ in range(100):
        a, b, c = (random_coeff(rng) for _ in range(3))
        assert (a * b) * c == a * (b * c)
        assert (a + b) + c == a + (b + c)
        assert a * (b + c) == a * b + a * c
        assert a - a == RationalCoeff.zero(XY)
        if not b.is_zero():
            assert (a / b) * b == a


def test_leibniz_rule_on_random_elements(rng):
    for _ in range(100):
        a, b = random_coeff(rng), random_coeff(rng)
        for var in XY:
            lhs = partial_derivative(a * b, var)
            assert lhs == partial_derivative(a, var) * b + a * partial_derivative(b, var)
