"""
The expression mini-language used in job documents and reports.

    3/2*x^2*y          polynomial function
    x*dx^dy            differential form (dx = differential of x)
    h*Dx^Dy            multivector (Dx = coordinate vector field, h = hbar)
    2*L                period unit L = 2*pi*sqrt(-1); I is sqrt(-1)

``^`` followed by an integer is a power, otherwise it is the graded product,
which is also what ``*`` means. The printer emits a canonical form that the
parser reads back to the same field.
"""
import logging
import re

from sympy.polys.domains import QQ, QQ_I

from .algebra import (
    Chart, DiffForm, Field, Multivector, PolyFunc, Scalar, _wrap,
    basis_form, basis_vector, function, wedge,
)
from .exceptions import ChartError, ExpressionError, GradeError

logger = logging.getLogger(__name__)

TOKEN_RE = re.compile(r'\s*(?:(\d+)|([A-Za-z_][A-Za-z0-9_]*)|(.))')

_SCRATCH_CHART = Chart(('x',))


def tokenize(text):
    tokens = []
    position = 0
    text = text.rstrip()
    while position < len(text):
        match = TOKEN_RE.match(text, position)
        number, name, symbol = match.groups()
        if number is not None:
            tokens.append(('num', int(number)))
        elif name is not None:
            tokens.append(('name', name))
        elif symbol in '+-*/^()':
            tokens.append(('op', symbol))
        else:
            raise ExpressionError(f"Unexpected character {symbol!r} in {text!r}", witness=text)
        position = match.end()
    return tokens


class _Parser:
    def __init__(self, text, chart, order):
        self.text = text
        self.chart = chart
        self.order = order
        self.tokens = tokenize(text)
        self.position = 0

    def peek(self, offset=0):
        index = self.position + offset
        return self.tokens[index] if index < len(self.tokens) else (None, None)

    def take(self):
        token = self.peek()
        self.position += 1
        return token

    def expect(self, value):
        kind, found = self.take()
        if found != value:
            raise ExpressionError(f"Expected {value!r} in {self.text!r}", witness=self.text)

    def parse(self):
        if not self.tokens:
            raise ExpressionError("Empty expression", witness=self.text)
        result = self.expression()
        if self.position != len(self.tokens):
            raise ExpressionError(
                f"Unexpected {self.peek()[1]!r} in {self.text!r}", witness=self.text
            )
        return result

    def expression(self):
        result = self.term()
        while self.peek() in (('op', '+'), ('op', '-')):
            _, op = self.take()
            right = self.term()
            result = result + right if op == '+' else result - right
        return result

    def term(self):
        result = self.unary()
        while True:
            kind, op = self.peek()
            if op == '*' or (op == '^' and self.peek(1)[0] != 'num'):
                self.take()
                result = wedge(result, self.unary())
            elif op == '/':
                self.take()
                result = self._divide(result, self.unary())
            else:
                return result

    def unary(self):
        if self.peek() == ('op', '-'):
            self.take()
            return -self.unary()
        if self.peek() == ('op', '+'):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        while self.peek() == ('op', '^') and self.peek(1)[0] == 'num':
            self.take()
            _, exponent = self.take()
            result = function(self.chart, 1, self.order)
            for _ in range(exponent):
                result = wedge(result, base)
            base = result
        return base

    def atom(self):
        kind, value = self.take()
        if kind == 'num':
            return function(self.chart, value, self.order)
        if kind == 'name':
            return self._name(value)
        if value == '(':
            result = self.expression()
            self.expect(')')
            return result
        raise ExpressionError(f"Unexpected {value!r} in {self.text!r}", witness=self.text)

    def _name(self, name):
        chart = self.chart
        if name in chart.coordinates:
            return function(chart, chart.gen(chart.index(name)), self.order)
        if name == 'h':
            return function(chart, chart.h, self.order)
        if name == 'L':
            return function(chart, chart.L, self.order)
        if name == 'I':
            return function(chart, QQ_I(0, 1), self.order)
        if name[0] in 'dD' and name[1:] in chart.coordinates:
            index = chart.index(name[1:])
            if name[0] == 'd':
                return basis_form(chart, (index,), self.order)
            return basis_vector(chart, (index,), self.order)
        raise ExpressionError(f"Unknown symbol {name!r} on {chart}", witness=self.text)

    def _divide(self, numerator, denominator):
        constant = denominator.coefficient() if isinstance(denominator, PolyFunc) else None
        if constant is None or not constant.is_ground or not constant or len(denominator.terms) != 1:
            raise ExpressionError(f"Only division by nonzero numbers is supported: {self.text!r}", witness=self.text)
        ring = self.chart.ring
        return numerator * ring.ground_new(ring.domain.quo(ring.domain.one, constant.LC))


def parse_field(text, chart, order=None, kind=None):
    """Parse ``text`` on ``chart``; ``kind`` optionally forces the field class."""
    if isinstance(text, (int,)) and not isinstance(text, bool):
        text = str(text)
    if not isinstance(text, str):
        raise ExpressionError(f"Expected an expression string, got {type(text).__name__}", witness=repr(text))
    try:
        field = _Parser(text, chart, order).parse()
    except (GradeError, ChartError) as exc:
        raise ExpressionError(f"Malformed expression {text!r}: {exc}", witness=text) from exc
    if kind is None or isinstance(field, kind) and type(field) is kind:
        return field
    try:
        return kind(chart, field.terms, field.order)
    except (GradeError, ChartError) as exc:
        raise ExpressionError(f"{text!r} is not a {kind.__name__}: {exc}", witness=text) from exc


def parse_function(text, chart, order=None):
    return parse_field(text, chart, order, PolyFunc)


def parse_form(text, chart, order=None):
    return parse_field(text, chart, order, DiffForm)


def parse_multivector(text, chart, order=None):
    return parse_field(text, chart, order, Multivector)


def parse_scalar(text):
    """Parse a constant such as ``-1/6*L`` or ``1/2 + I``."""
    if isinstance(text, Scalar):
        return text
    field = parse_field(str(text), _SCRATCH_CHART, order=0)
    if any(key != ((), ()) for key in field.terms):
        raise ExpressionError(f"{text!r} is not a constant", witness=str(text))
    try:
        return Scalar.from_poly(field.coefficient())
    except Exception as exc:
        raise ExpressionError(f"{text!r} is not a constant: {exc}", witness=str(text)) from exc


# ---------------------------------------------------------------------------
# Canonical printer
# ---------------------------------------------------------------------------

def format_rational(value):
    value = QQ.convert(value)
    numerator, denominator = QQ.numer(value), QQ.denom(value)
    if denominator == 1:
        return str(numerator)
    return f"{numerator}/{denominator}"


def _monomial_factors(names, monom):
    factors = []
    for name, exponent in zip(names, monom):
        if exponent == 1:
            factors.append(name)
        elif exponent:
            factors.append(f"{name}^{exponent}")
    return factors


def _signed_terms(coeff, factors, basis):
    """Split a Gaussian rational coefficient into printable (sign, body) pairs."""
    out = []
    for part, unit in ((coeff.x, None), (coeff.y, 'I')):
        if not part:
            continue
        magnitude = abs(part)
        pieces = []
        if magnitude != 1 or (not factors and not basis and unit is None):
            pieces.append(format_rational(magnitude))
        if unit:
            pieces.append(unit)
        pieces.extend(factors)
        body = '*'.join(pieces)
        if basis:
            body = f"{body}*{basis}" if body else basis
        out.append((part < 0, body))
    return out


def _join(terms):
    if not terms:
        return '0'
    text = ''
    for index, (negative, body) in enumerate(terms):
        if index == 0:
            text = f"-{body}" if negative else body
        else:
            text += f" - {body}" if negative else f" + {body}"
    return text


def _basis_label(chart, key):
    forms, vectors = key
    names = [f"d{chart.coordinates[i]}" for i in forms]
    names += [f"D{chart.coordinates[i]}" for i in vectors]
    return '^'.join(names)


def _term_sort_key(key, monom):
    forms, vectors = key
    return (len(forms) + len(vectors), len(vectors), forms, vectors, tuple(-e for e in monom))


def format_field(field):
    chart = field.chart
    names = list(chart.coordinates) + ['h', 'L']
    entries = []
    for key, coeff in field.terms.items():
        for monom, c in coeff.iterterms():
            entries.append((_term_sort_key(key, monom), key, monom, c))
    entries.sort(key=lambda entry: entry[0])
    terms = []
    for _, key, monom, c in entries:
        terms.extend(_signed_terms(c, _monomial_factors(names, monom), _basis_label(chart, key)))
    return _join(terms)


def format_poly(poly):
    names = [str(s) for s in poly.ring.symbols]
    terms = []
    for monom, c in sorted(poly.iterterms(), key=lambda item: tuple(-e for e in item[0])):
        terms.extend(_signed_terms(c, _monomial_factors(names, monom), ''))
    return _join(terms)


def format_scalar(scalar):
    terms = _signed_terms(scalar.rational, [], '') + _signed_terms(scalar.period, ['L'], '')
    return _join(terms)


def format_series(series):
    """Print a series of Scalars (or h-free polynomials) as one expression in h."""
    terms = []
    for k, coefficient in enumerate(series.coefficients):
        power = [] if k == 0 else (['h'] if k == 1 else [f"h^{k}"])
        if isinstance(coefficient, Scalar):
            parts = ((coefficient.rational, []), (coefficient.period, ['L']))
            for value, unit in parts:
                terms.extend(_signed_terms(value, unit + power, ''))
        else:
            names = [str(s) for s in coefficient.ring.symbols]
            for monom, c in sorted(coefficient.iterterms(), key=lambda item: tuple(-e for e in item[0])):
                terms.extend(_signed_terms(c, _monomial_factors(names, monom) + power, ''))
    return _join(terms)


def as_kind(field, kind):
    """Re-read a field as ``kind`` when its terms allow it."""
    if type(field) is kind:
        return field
    return _wrap(field.chart, field.terms, field.order, kind)


def is_field(value):
    return isinstance(value, Field)
