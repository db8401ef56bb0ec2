"""
Exact coefficient algebra and the observable expression language.

RationalCoeff wraps an element of a sympy rational function field over QQ with a
graded lexicographic monomial order.  sympy cancels every element into
numerator/denominator with no common factor and a positive leading denominator
coefficient, so equality of canonical forms is equality of functions.

ObservableExpr is a small syntax tree produced by parse_observable.  It is what
users type (CLI flags, tool arguments) and what golden files store.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from sympy import Rational, Symbol
from sympy.polys.domains import QQ
from sympy.polys.fields import FracField
from sympy.polys.orderings import grlex

# Every identifier the grammar knows, in the documented order.
IDENTIFIERS = ("x", "y", "px", "py", "T", "chi", "H", "L", "M", "hbar")


class ExpressionSyntaxError(ValueError):
    def __init__(self, message, position, expected=()):
        self.position = position
        self.expected = tuple(expected)
        expected_text = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at offset {position}{expected_text}")


class UnknownIdentifierError(ValueError):
    pass


@lru_cache(maxsize=None)
def coefficient_field(variables):
    """Rational function field over QQ in `variables` (a tuple), grlex order."""
    return FracField(tuple(variables), QQ, grlex)


def _to_fraction(q):
    return Fraction(int(q.numerator), int(q.denominator))


def _ground(field, number):
    number = Fraction(number)
    return field.ground_new(QQ(number.numerator, number.denominator))


def _format_rational(value):
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def _format_poly(poly, names):
    """Grammar-compatible text for a sympy PolyElement, grlex-descending terms."""
    if not poly:
        return "0"
    pieces = []
    for monom, coeff in poly.terms():
        coeff = _to_fraction(coeff)
        factors = []
        for name, exp in zip(names, monom):
            if exp == 1:
                factors.append(name)
            elif exp > 1:
                factors.append(f"{name}^{exp}")
        sign = "-" if coeff < 0 else "+"
        magnitude = abs(coeff)
        if not factors:
            body = _format_rational(magnitude)
        elif magnitude == 1:
            body = "*".join(factors)
        elif magnitude.denominator == 1:
            body = f"{magnitude.numerator}*" + "*".join(factors)
        else:
            body = f"{magnitude.numerator}*" + "*".join(factors) + f"/{magnitude.denominator}"
        pieces.append((sign, body))
    text = ("-" if pieces[0][0] == "-" else "") + pieces[0][1]
    for sign, body in pieces[1:]:
        text += f" {sign} {body}"
    return text


def _eval_poly(poly, point):
    total = 0.0
    for monom, coeff in poly.terms():
        term = float(coeff)
        for value, exp in zip(point, monom):
            if exp:
                term *= value ** exp
        total += term
    return total


@dataclass(frozen=True, eq=False)
class RationalCoeff:
    """An exact rational function in a fixed, ordered variable tuple."""

    value: object  # sympy FracElement

    @classmethod
    def zero(cls, variables):
        return cls(coefficient_field(tuple(variables)).zero)

    @classmethod
    def one(cls, variables):
        return cls(coefficient_field(tuple(variables)).one)

    @classmethod
    def constant(cls, variables, number):
        return cls(_ground(coefficient_field(tuple(variables)), number))

    @classmethod
    def variable(cls, variables, name):
        variables = tuple(variables)
        if name not in variables:
            raise UnknownIdentifierError(f"Unknown variable '{name}' for ring {variables}")
        field = coefficient_field(variables)
        return cls(field.gens[variables.index(name)])

    @property
    def variables(self):
        return tuple(str(s) for s in self.value.field.symbols)

    @property
    def numerator(self):
        return self.value.numer

    @property
    def denominator(self):
        return self.value.denom

    def is_zero(self):
        return not self.value

    def is_constant(self):
        return self.value.numer.is_ground and self.value.denom.is_ground

    def as_fraction(self):
        if not self.is_constant():
            raise ValueError(f"Coefficient '{self}' is not a constant")
        return _to_fraction(self.value.numer.LC) / _to_fraction(self.value.denom.LC)

    def _coerce(self, other):
        if isinstance(other, RationalCoeff):
            if other.value.field != self.value.field:
                raise ValueError(f"Ring mismatch: {self.variables} vs {other.variables}")
            return other.value
        if isinstance(other, (int, Fraction)):
            return _ground(self.value.field, other)
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return RationalCoeff(self.value + o)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return RationalCoeff(self.value - o)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return RationalCoeff(o - self.value)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return RationalCoeff(self.value * o)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        if not o:
            raise ZeroDivisionError("Division by the zero rational function")
        return RationalCoeff(self.value / o)

    def __neg__(self):
        return RationalCoeff(-self.value)

    def __pow__(self, exponent):
        if not isinstance(exponent, int):
            return NotImplemented
        if exponent < 0:
            if not self.value:
                raise ZeroDivisionError("Negative power of the zero rational function")
            return RationalCoeff(self.value.field.one / self.value ** (-exponent))
        return RationalCoeff(self.value ** exponent)

    def __eq__(self, other):
        if isinstance(other, RationalCoeff):
            return self.value.field == other.value.field and self.value == other.value
        if isinstance(other, (int, Fraction)):
            return self.value == self._coerce(other)
        return NotImplemented

    def __hash__(self):
        return hash(self.value)

    def diff(self, name):
        variables = self.variables
        if name not in variables:
            raise UnknownIdentifierError(f"Unknown variable '{name}' for ring {variables}")
        gen = self.value.field.gens[variables.index(name)]
        return RationalCoeff(self.value.diff(gen))

    def evaluate(self, env):
        """Float value at `env` (mapping name -> number); names absent from the ring are ignored."""
        point = []
        for name in self.variables:
            if name not in env:
                raise UnknownIdentifierError(f"No value given for '{name}'")
            point.append(float(env[name]))
        den = _eval_poly(self.value.denom, point)
        if den == 0.0:
            raise ZeroDivisionError(f"Denominator of '{self}' vanishes at {env}")
        return _eval_poly(self.value.numer, point) / den

    def to_sympy(self, symbols=None):
        """sympy expression; `symbols` optionally maps names to sympy symbols."""
        expr = self.value.as_expr()
        if symbols:
            expr = expr.xreplace({Symbol(n): s for n, s in symbols.items() if Symbol(n) in expr.free_symbols})
        return expr

    def __str__(self):
        names = self.variables
        num = _format_poly(self.value.numer, names)
        den = self.value.denom
        if den == self.value.field.ring.one:
            return num
        den_text = _format_poly(den, names)
        if len(self.value.numer.terms()) > 1:
            num = f"({num})"
        if len(den.terms()) > 1 or "*" in den_text or "/" in den_text:
            den_text = f"({den_text})"
        return f"{num}/{den_text}"

    def __repr__(self):
        return f"RationalCoeff({self})"


def ratfun_arith(a, b, op):
    """Exact add/sub/mul/div of two RationalCoeff in canonical form."""
    logging.debug(f"ratfun_arith called for op '{op}'")
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        if b.is_zero():
            logging.debug("ratfun_arith returning error 'Division by the zero element.'")
            raise ZeroDivisionError("Division by the zero element.")
        return a / b
    raise ValueError(f"Unknown operation '{op}'")


# --- Observable expressions ---

@dataclass(frozen=True)
class Num:
    value: Fraction


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


@dataclass(frozen=True)
class ObservableExpr:
    """A parsed observable; `root` is a tree of Num/Var/Neg/BinOp/Pow nodes."""

    root: object

    @property
    def identifiers(self):
        found = set()
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Var):
                found.add(node.name)
            elif isinstance(node, Neg):
                stack.append(node.operand)
            elif isinstance(node, BinOp):
                stack.extend((node.left, node.right))
            elif isinstance(node, Pow):
                stack.append(node.base)
        return frozenset(found)

    def __str__(self):
        return print_observable(self)

    def evaluate(self, env):
        return _evaluate_node(self.root, env)

    def to_coeff(self, variables):
        return _node_to_coeff(self.root, tuple(variables))

    def to_sympy(self, symbols=None):
        return _node_to_sympy(self.root, symbols or {})


def _tokenize(text):
    tokens = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < len(text) and text[i + 1].isdigit()):
            start = i
            while i < len(text) and text[i].isdigit():
                i += 1
            if i < len(text) and text[i] == ".":
                i += 1
                while i < len(text) and text[i].isdigit():
                    i += 1
            tokens.append(("number", text[start:i], start))
            continue
        if c.isalpha() or c == "_":
            start = i
            while i < len(text) and (text[i].isalnum() or text[i] == "_"):
                i += 1
            tokens.append(("ident", text[start:i], start))
            continue
        if c in "+-*/^()":
            tokens.append((c, c, i))
            i += 1
            continue
        raise ExpressionSyntaxError(f"Unexpected character '{c}'", i)
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    """Recursive descent over the documented grammar, plus unary minus between term and factor."""

    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.index = 0

    def peek(self):
        return self.tokens[self.index]

    def advance(self):
        tok = self.tokens[self.index]
        self.index += 1
        return tok

    def expect(self, kind, expected):
        tok = self.peek()
        if tok[0] != kind:
            raise ExpressionSyntaxError(f"Unexpected '{tok[1] or 'end of input'}'", tok[2], expected)
        return self.advance()

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExpressionSyntaxError(f"Unexpected '{tok[1]}'", tok[2], ("+", "-", "*", "/", "^", "end of input"))
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.advance()[0]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.advance()[0]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        # binds looser than "^": -x^2 is -(x^2)
        if self.peek()[0] == "-":
            self.advance()
            return Neg(self.unary())
        return self.factor()

    def factor(self):
        node = self.base()
        if self.peek()[0] == "^":
            self.advance()
            sign = 1
            if self.peek()[0] == "-":
                self.advance()
                sign = -1
            tok = self.expect("number", ("integer",))
            if "." in tok[1]:
                raise ExpressionSyntaxError("Exponent must be an integer", tok[2], ("integer",))
            node = Pow(node, sign * int(tok[1]))
        return node

    def base(self):
        tok = self.peek()
        if tok[0] == "ident":
            self.advance()
            if tok[1] not in IDENTIFIERS:
                raise UnknownIdentifierError(f"Unknown identifier '{tok[1]}' at offset {tok[2]}")
            return Var(tok[1])
        if tok[0] == "number":
            self.advance()
            return Num(Fraction(tok[1]))
        if tok[0] == "(":
            self.advance()
            node = self.expr()
            self.expect(")", (")",))
            return node
        raise ExpressionSyntaxError(f"Unexpected '{tok[1] or 'end of input'}'", tok[2], ("identifier", "number", "(", "-"))


def parse_observable(text):
    logging.debug(f"parse_observable called for text '{text}'")
    return ObservableExpr(_Parser(text).parse())


def _print_node(node, parent_prec=0, right_side=False):
    if isinstance(node, Num):
        value = node.value
        if value.denominator == 1:
            text = str(value.numerator)
        else:
            text = _decimal_text(value)
            if "/" in text and parent_prec:
                text = f"({text})"
        return text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        operand = node.operand
        return "-" + (_print_node(operand) if isinstance(operand, Pow) else _print_atom(operand))
    if isinstance(node, Pow):
        return f"{_print_atom(node.base)}^{node.exponent}"
    prec = _PRECEDENCE[node.op]
    text = f"{_print_node(node.left, prec)} {node.op} {_print_node(node.right, prec, True)}" if prec == 1 else \
        f"{_print_node(node.left, prec)}{node.op}{_print_node(node.right, prec, True)}"
    if prec < parent_prec or (right_side and prec == parent_prec):
        return f"({text})"
    return text


def _print_atom(node):
    if isinstance(node, Var) or (isinstance(node, Num) and node.value >= 0 and "/" not in _print_node(node)):
        return _print_node(node)
    return f"({_print_node(node)})"


def _decimal_text(value):
    # terminating decimals print as decimals, everything else as a quotient
    den = value.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{value.numerator}/{value.denominator}"
    digits = max(twos, fives)
    scaled = value * (10 ** digits)
    sign = "-" if scaled < 0 else ""
    whole = str(abs(scaled.numerator))
    whole = whole.rjust(digits + 1, "0")
    return f"{sign}{whole[:-digits]}.{whole[-digits:]}"


def print_observable(expr):
    root = expr.root if isinstance(expr, ObservableExpr) else expr
    return _print_node(root)


def _evaluate_node(node, env):
    if isinstance(node, Num):
        return float(node.value)
    if isinstance(node, Var):
        if node.name not in env:
            raise UnknownIdentifierError(f"No value given for '{node.name}'")
        return float(env[node.name])
    if isinstance(node, Neg):
        return -_evaluate_node(node.operand, env)
    if isinstance(node, Pow):
        return _evaluate_node(node.base, env) ** node.exponent
    left = _evaluate_node(node.left, env)
    right = _evaluate_node(node.right, env)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if right == 0.0:
        raise ZeroDivisionError("Division by zero while evaluating observable")
    return left / right


def _node_to_coeff(node, variables):
    if isinstance(node, Num):
        return RationalCoeff.constant(variables, node.value)
    if isinstance(node, Var):
        return RationalCoeff.variable(variables, node.name)
    if isinstance(node, Neg):
        return -_node_to_coeff(node.operand, variables)
    if isinstance(node, Pow):
        return _node_to_coeff(node.base, variables) ** node.exponent
    left = _node_to_coeff(node.left, variables)
    right = _node_to_coeff(node.right, variables)
    return ratfun_arith(left, right, {"+": "add", "-": "sub", "*": "mul", "/": "div"}[node.op])


def _node_to_sympy(node, symbols):
    if isinstance(node, Num):
        return Rational(node.value.numerator, node.value.denominator)
    if isinstance(node, Var):
        return symbols.get(node.name, Symbol(node.name))
    if isinstance(node, Neg):
        return -_node_to_sympy(node.operand, symbols)
    if isinstance(node, Pow):
        return _node_to_sympy(node.base, symbols) ** node.exponent
    left = _node_to_sympy(node.left, symbols)
    right = _node_to_sympy(node.right, symbols)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    return left / right


def observable_ring(expr):
    """The ordered variable tuple spanning the identifiers of `expr`."""
    names = expr.identifiers
    return tuple(n for n in IDENTIFIERS if n in names) or ("x",)


def coeff_to_observable(coeff):
    return parse_observable(str(coeff))


def partial_derivative(f, var):
    """Exact derivative of a RationalCoeff or ObservableExpr; the result has the same kind."""
    logging.debug(f"partial_derivative called for '{f}' and var '{var}'")
    if isinstance(f, RationalCoeff):
        return f.diff(var)
    if var not in IDENTIFIERS:
        raise UnknownIdentifierError(f"Unknown variable '{var}'")
    variables = observable_ring(f)
    if var not in variables:
        variables = tuple(n for n in IDENTIFIERS if n in set(variables) | {var})
    res = coeff_to_observable(f.to_coeff(variables).diff(var))
    logging.debug(f"partial_derivative returning result '{res}'")
    return res


def _substitute_node(node, mapping):
    if isinstance(node, Var):
        return mapping.get(node.name, node)
    if isinstance(node, Neg):
        return Neg(_substitute_node(node.operand, mapping))
    if isinstance(node, Pow):
        return Pow(_substitute_node(node.base, mapping), node.exponent)
    if isinstance(node, BinOp):
        return BinOp(node.op, _substitute_node(node.left, mapping), _substitute_node(node.right, mapping))
    return node


def substitute(expr, definitions):
    """Replace identifiers by other observables, e.g. {"H": "(px^2+py^2)/(2*M)"}."""
    mapping = {}
    for name, value in definitions.items():
        value = parse_observable(value) if isinstance(value, str) else value
        mapping[name] = value.root
    return ObservableExpr(_substitute_node(expr.root, mapping))
