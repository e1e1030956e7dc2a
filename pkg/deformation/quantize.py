"""
Star products up to second order and quantization of tight Poisson families.

Operators act on polynomial functions of the fibre coordinates; their
coefficients may also depend on the base coordinates of a product chart.
A star family consists of

    gamma0   a star product f * g = fg + h B1(f, g) + h^2 B2(f, g)
    gamma1   a differential operator D_a for every base direction, O(h)
    gamma2   a 2-form on the base with function coefficients
    chi      the closed twisting 3-form

and is tight when, modulo h**(N+1),

    associativity       (f * g) * k = f * (g * k)
    parallel            (d_a m)(f, g) + D_a(f * g) - D_a f * g - f * D_a g = 0
    curvature           d_a D_b - d_b D_a + [D_a, D_b] + (f * g_ab - g_ab * f) = 0
    twist               d gamma2 + sum_a dt_a ^ D_a(gamma2) = chi
"""
import logging
from dataclasses import dataclass
from itertools import combinations, product
from math import comb

from sympy.polys.domains import QQ, QQ_I
from sympy.polys.ring_series import rs_mul, rs_trunc

from .algebra import (
    DiffForm, Field, Multivector, _accumulate, _merge, base_differential, de_rham_d,
    basis_form, bivector_matrix, coerce_poly, derivative, lift, monomials,
    multi_indices, schouten_bracket, solve_polynomial_system, to_rational,
    wedge,
)
from .conf import get_setting
from .exceptions import (
    ChartError, FamilyError, GradeError, NotInvertibleError, QuantizationError,
)
from .expressions import as_kind, format_poly
from .family import InnerParam, base_pullback, inner_transform_infinitesimal
from .reports import Report

logger = logging.getLogger(__name__)

# Second-order candidates, in the order their weights are reported
ANSATZ_LABELS = ('PP d2f d2g', 'P dP (d2f dg - df d2g)', 'P dP (d2f dg + df d2g)')


def effective_order(order):
    """Star products are built up to h^2; larger orders are clamped."""
    limit = get_setting('STAR_ORDER')
    if order > limit:
        logger.warning(f"Truncation order {order} exceeds the star product order; using {limit}")
        return limit
    return order


def _fibre_gens(chart):
    return [chart.gen(i) for i in chart.fibre_indices]


def _unit(position, width):
    return tuple(1 if a == position else 0 for a in range(width))


def _plus(*indices):
    return tuple(map(sum, zip(*indices)))


class DiffOp:
    """A differential operator sum_alpha c_alpha d^alpha in the fibre coordinates."""

    __slots__ = ('chart', 'terms', 'order')

    def __init__(self, chart, terms=None, order=None):
        if order is None:
            order = get_setting('TRUNCATION_ORDER')
        ring, h, prec = chart.ring, chart.h, order + 1
        width = len(chart.fibre_indices)
        cleaned = {}
        for alpha, coeff in (terms or {}).items():
            alpha = tuple(alpha)
            if len(alpha) != width or any(a < 0 for a in alpha):
                raise ChartError(f"Multi-index {alpha} does not match {chart}")
            _accumulate(cleaned, alpha, rs_trunc(coerce_poly(ring, coeff), h, prec))
        self.chart = chart
        self.order = order
        self.terms = {alpha: c for alpha, c in cleaned.items() if c}

    @classmethod
    def zero(cls, chart, order=None):
        return cls(chart, {}, order)

    @classmethod
    def identity(cls, chart, order=None):
        return cls(chart, {(0,) * len(chart.fibre_indices): 1}, order)

    @classmethod
    def from_vector(cls, vector, order=None):
        """The derivation f -> X(f) of a fibre vector field."""
        chart = vector.chart
        width = len(chart.fibre_indices)
        terms = {}
        for (forms, vectors), coeff in vector.terms.items():
            if forms or len(vectors) != 1 or vectors[0] >= width:
                raise GradeError(f"{vector} is not a fibre vector field")
            terms[_unit(vectors[0], width)] = coeff
        return cls(chart, terms, vector.order if order is None else order)

    def _new(self, terms, order=None):
        return type(self)(self.chart, terms, self.order if order is None else order)

    def apply(self, f):
        ring, h, prec = self.chart.ring, self.chart.h, self.order + 1
        f = coerce_poly(ring, f)
        gens = _fibre_gens(self.chart)
        result = ring.zero
        for alpha, coeff in self.terms.items():
            df = derivative(f, gens, alpha)
            if df:
                result += rs_mul(coeff, df, h, prec)
        return result

    __call__ = apply

    def compose(self, other):
        """self o other, by the Leibniz rule."""
        self._same_chart(other)
        order = min(self.order, other.order)
        h, prec = self.chart.h, order + 1
        gens = _fibre_gens(self.chart)
        terms = {}
        for alpha, a in self.terms.items():
            for beta, b in other.terms.items():
                for gamma in product(*(range(k + 1) for k in alpha)):
                    db = derivative(b, gens, gamma)
                    if not db:
                        continue
                    weight = 1
                    for k, j in zip(alpha, gamma):
                        weight *= comb(k, j)
                    key = tuple(k - j + m for k, j, m in zip(alpha, gamma, beta))
                    _accumulate(terms, key, rs_mul(a, db, h, prec) * weight)
        return self._new(terms, order)

    def commutator(self, other):
        return self.compose(other) - other.compose(self)

    def _same_chart(self, other):
        if self.chart != other.chart:
            raise ChartError(f"Operators on {self.chart} and {other.chart}")

    def __add__(self, other):
        self._same_chart(other)
        terms = dict(self.terms)
        for alpha, coeff in other.terms.items():
            _accumulate(terms, alpha, coeff)
        return self._new(terms, min(self.order, other.order))

    def __neg__(self):
        return self._new({alpha: -c for alpha, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, value):
        """Left multiplication by a function or a constant."""
        h, prec = self.chart.h, self.order + 1
        value = coerce_poly(self.chart.ring, value)
        return self._new({alpha: rs_mul(value, c, h, prec) for alpha, c in self.terms.items()})

    def base_derivative(self, index):
        """Differentiate the coefficients along coordinate ``index``."""
        gen = self.chart.gen(index)
        return self._new({alpha: c.diff(gen) for alpha, c in self.terms.items()})

    def subs(self, values):
        replacements = [(self.chart.gen(i), to_rational(v)) for i, v in sorted(values.items())]
        if not replacements:
            return self
        return self._new({alpha: c.subs(replacements) for alpha, c in self.terms.items()})

    def restrict(self, chart):
        """Move to a chart with the same fibre coordinates; coefficients must not use the others."""
        if chart.fibre.coordinates != self.chart.fibre.coordinates:
            raise ChartError(f"{chart} and {self.chart} have different fibres")
        try:
            terms = {alpha: c.set_ring(chart.ring) for alpha, c in self.terms.items()}
        except Exception as exc:
            raise ChartError(f"Operator depends on coordinates outside {chart}", witness=str(self)) from exc
        return type(self)(chart, terms, self.order)

    def h_part(self, k):
        h = self.chart.h
        return self._new({alpha: c.coeff_wrt(h, k) for alpha, c in self.terms.items()})

    def truncate(self, order):
        return self._new(self.terms, min(order, self.order))

    def is_formal(self):
        return not self.h_part(0).terms

    def annihilates_constants(self):
        return all(any(alpha) for alpha in self.terms)

    def inverse(self):
        """Formal inverse of 1 + N with N = O(h)."""
        identity = type(self).identity(self.chart, self.order)
        nilpotent = self - identity
        if not nilpotent.is_formal():
            raise NotInvertibleError("Operator is not the identity at order zero", witness=str(self))
        result, power = identity, identity
        for _ in range(self.order):
            power = -(nilpotent.compose(power))
            if not power:
                break
            result = result + power
        return result

    def is_zero(self):
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def __eq__(self, other):
        if not isinstance(other, DiffOp):
            return NotImplemented
        return self.chart == other.chart and not (self - other).terms

    __hash__ = None

    def as_dict(self):
        return {
            'order': self.order,
            'terms': [
                {'derivative': list(alpha), 'coefficient': format_poly(c)}
                for alpha, c in sorted(self.terms.items())
            ],
        }

    def __str__(self):
        names = self.chart.fibre.coordinates
        parts = []
        for alpha, coeff in sorted(self.terms.items()):
            label = '*'.join(f"D{n}" if e == 1 else f"D{n}^{e}" for n, e in zip(names, alpha) if e)
            parts.append(f"({format_poly(coeff)})*{label}" if label else f"({format_poly(coeff)})")
        return ' + '.join(parts) or '0'

    __repr__ = __str__


class BiDiffOp:
    """A bidifferential operator (f, g) -> sum c * d^alpha f * d^beta g."""

    __slots__ = ('chart', 'terms', 'order')

    def __init__(self, chart, terms=None, order=None):
        if order is None:
            order = get_setting('TRUNCATION_ORDER')
        ring, h, prec = chart.ring, chart.h, order + 1
        width = len(chart.fibre_indices)
        cleaned = {}
        for (alpha, beta), coeff in (terms or {}).items():
            alpha, beta = tuple(alpha), tuple(beta)
            if len(alpha) != width or len(beta) != width:
                raise ChartError(f"Multi-indices {alpha}, {beta} do not match {chart}")
            _accumulate(cleaned, (alpha, beta), rs_trunc(coerce_poly(ring, coeff), h, prec))
        self.chart = chart
        self.order = order
        self.terms = {key: c for key, c in cleaned.items() if c}

    @classmethod
    def zero(cls, chart, order=None):
        return cls(chart, {}, order)

    def _new(self, terms, order=None):
        return BiDiffOp(self.chart, terms, self.order if order is None else order)

    def apply(self, f, g):
        ring, h, prec = self.chart.ring, self.chart.h, self.order + 1
        f, g = coerce_poly(ring, f), coerce_poly(ring, g)
        gens = _fibre_gens(self.chart)
        left, right = {}, {}
        result = ring.zero
        for (alpha, beta), coeff in self.terms.items():
            if alpha not in left:
                left[alpha] = derivative(f, gens, alpha)
            if not left[alpha]:
                continue
            if beta not in right:
                right[beta] = derivative(g, gens, beta)
            if not right[beta]:
                continue
            result += rs_mul(coeff, rs_mul(left[alpha], right[beta], h, prec), h, prec)
        return result

    __call__ = apply

    def __add__(self, other):
        if self.chart != other.chart:
            raise ChartError(f"Operators on {self.chart} and {other.chart}")
        terms = dict(self.terms)
        for key, coeff in other.terms.items():
            _accumulate(terms, key, coeff)
        return self._new(terms, min(self.order, other.order))

    def __neg__(self):
        return self._new({key: -c for key, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scaled(self, weight):
        weight = QQ_I.convert(weight)
        return self._new({key: c.mul_ground(weight) for key, c in self.terms.items()})

    def swapped(self):
        return self._new({(beta, alpha): c for (alpha, beta), c in self.terms.items()})

    def base_derivative(self, index):
        gen = self.chart.gen(index)
        return self._new({key: c.diff(gen) for key, c in self.terms.items()})

    def subs(self, values):
        replacements = [(self.chart.gen(i), to_rational(v)) for i, v in sorted(values.items())]
        if not replacements:
            return self
        return self._new({key: c.subs(replacements) for key, c in self.terms.items()})

    def restrict(self, chart):
        if chart.fibre.coordinates != self.chart.fibre.coordinates:
            raise ChartError(f"{chart} and {self.chart} have different fibres")
        try:
            terms = {key: c.set_ring(chart.ring) for key, c in self.terms.items()}
        except Exception as exc:
            raise ChartError(f"Operator depends on coordinates outside {chart}") from exc
        return BiDiffOp(chart, terms, self.order)

    def annihilates_constants(self):
        return all(any(alpha) and any(beta) for alpha, beta in self.terms)

    def is_zero(self):
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def __eq__(self, other):
        if not isinstance(other, BiDiffOp):
            return NotImplemented
        return self.chart == other.chart and not (self - other).terms

    __hash__ = None

    def as_dict(self):
        return [
            {'left': list(alpha), 'right': list(beta), 'coefficient': format_poly(c)}
            for (alpha, beta), c in sorted(self.terms.items())
        ]


def bracket_operator(pi, order=None):
    """B1(f, g) = pi(df, dg) for a fibre bivector pi."""
    chart = pi.chart
    width = len(chart.fibre_indices)
    terms = {}
    for (forms, vectors), coeff in pi.terms.items():
        if forms or len(vectors) != 2 or max(vectors) >= width:
            raise GradeError(f"{pi} is not a fibre bivector")
        i, j = vectors
        terms[(_unit(i, width), _unit(j, width))] = coeff
        terms[(_unit(j, width), _unit(i, width))] = -coeff
    return BiDiffOp(chart, terms, pi.order if order is None else order)


def _ansatz(matrix, chart):
    """The three second-order candidates built from P and its first derivatives."""
    fibre = chart.fibre_indices
    width = len(fibre)
    gens = _fibre_gens(chart)
    quadratic, left, right = {}, {}, {}
    for i, j in product(fibre, repeat=2):
        p_ij = matrix[i][j]
        if not p_ij:
            continue
        for k, l in product(fibre, repeat=2):
            p_kl = matrix[k][l]
            if not p_kl:
                continue
            _accumulate(quadratic, (_plus(_unit(i, width), _unit(k, width)),
                                    _plus(_unit(j, width), _unit(l, width))), p_ij * p_kl)
            d_kl = p_kl.diff(gens[j])
            if not d_kl:
                continue
            weight = p_ij * d_kl
            _accumulate(left, (_plus(_unit(i, width), _unit(k, width)), _unit(l, width)), weight)
            _accumulate(right, (_unit(k, width), _plus(_unit(i, width), _unit(l, width))), weight)
    t1 = BiDiffOp(chart, quadratic, 0)
    t2 = BiDiffOp(chart, left, 0)
    t3 = BiDiffOp(chart, right, 0)
    return [t1, t2 - t3, t2 + t3]


def _hochschild(op, f, g, k):
    return op(f, g) * k + op(f * g, k) - f * op(g, k) - op(f, g * k)


@dataclass(frozen=True, eq=False)
class StarProduct:
    """
    f * g = fg + h B1(f, g) + h^2 B2(f, g) modulo h**(order + 1).

    ``weights`` records the solved second-order weights of ANSATZ_LABELS.
    """

    chart: object
    operators: tuple
    order: int
    weights: tuple = None

    def multiply(self, f, g):
        ring, h, prec = self.chart.ring, self.chart.h, self.order + 1
        f, g = coerce_poly(ring, f), coerce_poly(ring, g)
        result = rs_mul(f, g, h, prec)
        for k, op in enumerate(self.operators, start=1):
            if k >= prec:
                break
            term = op.apply(f, g)
            if term:
                result += rs_trunc(term * h ** k, h, prec)
        return result

    __call__ = multiply

    def commutator(self, f, g):
        return self.multiply(f, g) - self.multiply(g, f)

    def associator(self, f, g, k):
        return self.multiply(self.multiply(f, g), k) - self.multiply(f, self.multiply(g, k))

    def derived_product(self, index, f, g):
        """(d_index m)(f, g): the product with differentiated coefficients."""
        ring, h, prec = self.chart.ring, self.chart.h, self.order + 1
        result = ring.zero
        for k, op in enumerate(self.operators, start=1):
            if k >= prec:
                break
            term = op.base_derivative(index).apply(f, g)
            if term:
                result += rs_trunc(term * h ** k, h, prec)
        return result

    def at(self, point):
        """The fibre product at a base point given as {base index: value}."""
        chart = self.chart.fibre
        operators = tuple(op.subs(point).restrict(chart) for op in self.operators)
        return StarProduct(chart, operators, self.order, self.weights)

    def annihilates_constants(self):
        return all(op.annihilates_constants() for op in self.operators)

    def __eq__(self, other):
        if not isinstance(other, StarProduct):
            return NotImplemented
        if self.chart != other.chart or self.order != other.order:
            return False
        length = max(len(self.operators), len(other.operators))
        mine = list(self.operators) + [BiDiffOp.zero(self.chart, 0)] * (length - len(self.operators))
        theirs = list(other.operators) + [BiDiffOp.zero(self.chart, 0)] * (length - len(other.operators))
        return all(a == b for a, b in zip(mine, theirs))

    __hash__ = None

    def as_dict(self):
        data = {
            'order': self.order,
            'operators': {f"B{k}": op.as_dict() for k, op in enumerate(self.operators, start=1)},
        }
        if self.weights is not None:
            data['weights'] = {
                label: _format_weight(w) for label, w in zip(ANSATZ_LABELS, self.weights)
            }
        return data


def _format_weight(value):
    from .expressions import format_rational
    value = QQ_I.convert(value)
    if value.y:
        return f"{format_rational(value.x)} + {format_rational(value.y)}*I"
    return format_rational(value.x)


def _solve_second_order(pi0):
    chart = pi0.chart
    candidates = _ansatz(bivector_matrix(pi0), chart)
    if not any(candidates):
        return BiDiffOp.zero(chart, 0), (QQ_I.zero,) * len(candidates)
    first = bracket_operator(pi0, 0)
    samples = monomials(_fibre_gens(chart), get_setting('ASSOCIATIVITY_SOLVE_DEGREE'))
    equations = []
    for f, g, k in product(samples, repeat=3):
        columns = [_hochschild(op, f, g, k) for op in candidates]
        inhomogeneous = first(first(f, g), k) - first(f, first(g, k))
        equations.append((columns, -inhomogeneous))
    weights = solve_polynomial_system(equations, len(candidates))
    if weights is None:
        logger.error(f"Second-order associativity has no solution for {pi0}")
        raise QuantizationError(
            "The second-order ansatz cannot make the product associative",
            witness={'bivector': str(pi0), 'ansatz': list(ANSATZ_LABELS)},
        )
    total = BiDiffOp.zero(chart, 0)
    for weight, op in zip(weights, candidates):
        if weight:
            total = total + op.scaled(weight)
    logger.debug(f"Second-order weights {[_format_weight(w) for w in weights]}")
    return total, tuple(weights)


def _verify_associativity(star, pi):
    """Associators of nonconstant fibre monomials up to ASSOCIATIVITY_CHECK_DEGREE vanish."""
    functions = monomials(_fibre_gens(star.chart), get_setting('ASSOCIATIVITY_CHECK_DEGREE'))
    for f, g, k in product(functions, repeat=3):
        residual = star.associator(f, g, k)
        if residual:
            logger.error(f"Solved star product of {pi} is not associative on {format_poly(f)}, {format_poly(g)}, {format_poly(k)}")
            raise QuantizationError(
                "The solved star product is not associative",
                witness={'f': format_poly(f), 'g': format_poly(g), 'k': format_poly(k), 'associator': format_poly(residual)},
            )


def star_order2(pi, order=None):
    """Star product of a Poisson bivector, associative modulo h^3."""
    if not isinstance(pi, Multivector) or not pi.is_homogeneous(0, 2):
        raise GradeError(f"{pi} is not a bivector")
    order = effective_order(pi.order if order is None else order)
    defect = schouten_bracket(pi, pi)
    if defect:
        raise QuantizationError("Bivector is not Poisson", witness=str(defect))
    chart = pi.chart
    operators = [bracket_operator(pi, order)]
    weights = None
    if order >= 2:
        second, weights = _solve_second_order(pi.h_part(0).with_order(0))
        operators.append(BiDiffOp(chart, second.terms, order))
    star = StarProduct(chart, tuple(operators), order, weights)
    if order >= 2:
        _verify_associativity(star, pi)
    logger.info(f"Star product on {chart} at order {order}")
    return star


# ---------------------------------------------------------------------------
# Star families
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StarFamily:
    """gamma0, gamma1 = {base index: D_a}, gamma2 and chi on a product chart."""

    gamma0: StarProduct
    gamma1: dict
    gamma2: DiffForm
    chi: DiffForm

    def __post_init__(self):
        chart = self.gamma0.chart
        if not chart.is_product:
            raise FamilyError("Star families live on product charts")
        base = set(chart.base_indices)
        connection = {}
        for index, op in self.gamma1.items():
            if index not in base:
                raise FamilyError(f"Connection component along non-base index {index}")
            if op.chart != chart:
                raise ChartError(f"Connection component on {op.chart}, expected {chart}")
            if not op.is_formal():
                raise FamilyError("The connection must be O(h)", witness=str(op))
            if not op.annihilates_constants():
                raise FamilyError("The connection must annihilate constants", witness=str(op))
            connection[index] = op
        gamma2 = lift(as_kind(self.gamma2, DiffForm), chart)
        if not gamma2.is_homogeneous(2, 0):
            raise FamilyError(f"{gamma2} is not a 2-form", witness=str(gamma2))
        for forms, _ in gamma2.terms:
            if not set(forms) <= base:
                raise FamilyError("gamma2 has components along the fibre", witness=str(gamma2))
        chi = base_pullback(as_kind(self.chi, DiffForm), chart)
        object.__setattr__(self, 'gamma1', dict(sorted(connection.items())))
        object.__setattr__(self, 'gamma2', gamma2)
        object.__setattr__(self, 'chi', chi)

    @property
    def chart(self):
        return self.gamma0.chart

    @property
    def order(self):
        return self.gamma0.order

    def connection(self, index):
        return self.gamma1.get(index) or DiffOp.zero(self.chart, self.order)

    def curvature(self, a, b):
        """The coefficient g_ab of dt_a ^ dt_b."""
        if a > b:
            return -self.gamma2.coefficient((b, a))
        return self.gamma2.coefficient((a, b))

    def star_at(self, point):
        return self.gamma0.at(point)

    def __eq__(self, other):
        if not isinstance(other, StarFamily):
            return NotImplemented
        indices = set(self.gamma1) | set(other.gamma1)
        return (
            self.gamma0 == other.gamma0
            and all(self.connection(a) == other.connection(a) for a in indices)
            and self.gamma2 == other.gamma2
            and self.chi == other.chi
        )

    __hash__ = None

    def as_dict(self):
        names = self.chart.coordinates
        return {
            'chart': list(names),
            'split': self.chart.split,
            'order': self.order,
            'gamma0': self.gamma0.as_dict(),
            'gamma1': {names[a]: op.as_dict() for a, op in self.gamma1.items()},
            'gamma2': str(self.gamma2),
            'chi': str(self.chi),
        }


def parallel_residual(family, index, f, g):
    star, op = family.gamma0, family.connection(index)
    return (
        star.derived_product(index, f, g) + op(star(f, g))
        - star(op(f), g) - star(f, op(g))
    )


def curvature_residual(family, a, b, f):
    star = family.gamma0
    op_a, op_b = family.connection(a), family.connection(b)
    g = family.curvature(a, b)
    return (
        op_b.base_derivative(a)(f) - op_a.base_derivative(b)(f)
        + op_a(op_b(f)) - op_b(op_a(f))
        + star(f, g) - star(g, f)
    )


def twist_residual(family):
    """d gamma2 + sum_a dt_a ^ D_a(gamma2) - chi as a 3-form."""
    chart, order = family.chart, family.order
    total = base_differential(family.gamma2.with_order(order))
    for index, op in family.gamma1.items():
        image = family.gamma2.map_coefficients(op.apply)
        if image:
            total = total + wedge(basis_form(chart, (index,), order), image)
    return as_kind((total - family.chi).with_order(order), DiffForm)


def default_test_functions(chart, degree=None):
    """Coordinate monomials of the fibre up to ``degree``, plus the constant 1."""
    degree = get_setting('TEST_MONOMIAL_DEGREE') if degree is None else degree
    return [chart.ring.one] + monomials(_fibre_gens(chart), degree)


def _test_polys(chart, testfns):
    polys = []
    for f in testfns:
        if isinstance(f, Field):
            f = lift(f, chart).coefficient() if f.chart != chart else f.coefficient()
        polys.append(coerce_poly(chart.ring, f))
    return polys


def check_star_family(family, testfns=None, report=None, degree=None):
    """
    Evaluate the unit axioms and the four tightness equations on test functions.

    Without ``testfns`` the fibre monomials up to ``degree`` are used.
    """
    report = report if report is not None else Report('check_star_family', family.order)
    if testfns is None:
        testfns = default_test_functions(family.chart, degree)
    functions = _test_polys(family.chart, testfns)
    if not functions:
        raise ValueError("check_star_family needs at least one test function")
    chart, star = family.chart, family.gamma0
    names = chart.coordinates

    failures = {}
    for k, op in enumerate(star.operators, start=1):
        if not op.annihilates_constants():
            failures[f"B{k}"] = op.as_dict()
    for index, op in family.gamma1.items():
        if not op.annihilates_constants():
            failures[f"D{names[index]}"] = str(op)
    for f in default_test_functions(chart, degree):
        if star(chart.ring.one, f) != f or star(f, chart.ring.one) != f:
            failures.setdefault('product', []).append(format_poly(f))
    report.add('unit', not failures, failures or None)

    for (i, f), (j, g), (k, u) in product(enumerate(functions), repeat=3):
        residual = star.associator(f, g, u)
        report.add(f"associativity/{i}-{j}-{k}", not residual, residual)
    for index in chart.base_indices:
        for (i, f), (j, g) in product(enumerate(functions), repeat=2):
            residual = parallel_residual(family, index, f, g)
            report.add(f"parallel/{names[index]}/{i}-{j}", not residual, residual)
    for a, b in combinations(chart.base_indices, 2):
        for i, f in enumerate(functions):
            residual = curvature_residual(family, a, b, f)
            report.add(f"curvature/{names[a]}-{names[b]}/{i}", not residual, residual)
    residual = twist_residual(family)
    report.add('twist', residual.is_zero(), str(residual))
    logger.info(f"Star family check on {chart}: passed={report.passed}")
    return report


# ---------------------------------------------------------------------------
# Quantization of tight Poisson families
# ---------------------------------------------------------------------------

def halve_by_h(sigma0, order):
    """sigma0 / (2h) for an O(h) fibre bivector, known modulo h**order."""
    chart = sigma0.chart
    h = chart.h
    half = QQ_I.convert(QQ(1, 2))
    terms = {key: c.exquo(h).mul_ground(half) for key, c in sigma0.truncate(order).terms.items()}
    return Multivector(chart, terms, max(order - 1, 0))


def quantize_tight_family(family):
    """A tight star family whose semiclassical data is the given Poisson family."""
    if not family.is_formal():
        raise QuantizationError(
            "Only families with sigma0 and sigma1 of order h can be quantized",
            witness=str(family.sigma0 + family.sigma1),
        )
    defect = family.defect()
    if defect:
        raise QuantizationError("Family is not tight", witness=str(defect))
    chart = family.chart
    order = effective_order(family.order)
    star = star_order2(halve_by_h(family.sigma0, order), order=order)
    connection = {
        index: DiffOp.from_vector(vector, order)
        for index, vector in family.connection().items()
    }
    gamma2 = DiffForm(chart, family.sigma2.terms, order)
    result = StarFamily(star, connection, gamma2, family.chi.with_order(order))
    result = _correct(result)
    logger.info(f"Quantized tight family on {chart} at order {order}")
    return result


def _order_residuals(family, samples, k):
    chart = family.chart
    h = chart.h
    residuals = {}
    for index in chart.base_indices:
        for (i, f), (j, g) in product(enumerate(samples), repeat=2):
            residuals[('parallel', index, i, j)] = parallel_residual(family, index, f, g).coeff_wrt(h, k)
    for a, b in combinations(chart.base_indices, 2):
        for i, f in enumerate(samples):
            residuals[('curvature', (a, b), i)] = curvature_residual(family, a, b, f).coeff_wrt(h, k)
    twist = twist_residual(family)
    for triple in combinations(chart.base_indices, 3):
        residuals[('twist', triple)] = twist.coefficient(triple).coeff_wrt(h, k)
    return residuals


def _connection_contribution(family, samples, index, op):
    """Leading effect of adding ``op`` to D_index on every residual."""
    ring = family.chart.ring
    h = family.chart.h
    out = {}
    for (i, f), (j, g) in product(enumerate(samples), repeat=2):
        out[('parallel', index, i, j)] = op(f * g) - op(f) * g - f * op(g)
    for a, b in combinations(family.chart.base_indices, 2):
        if index not in (a, b):
            continue
        for i, f in enumerate(samples):
            if index == b:
                out[('curvature', (a, b), i)] = op.base_derivative(a)(f)
            else:
                out[('curvature', (a, b), i)] = -op.base_derivative(b)(f)
    for (forms, _), coeff in family.gamma2.terms.items():
        sign, merged = _merge((index,), forms)
        if sign:
            value = op(coeff.coeff_wrt(h, 0))
            _accumulate(out, ('twist', merged), value if sign > 0 else -value)
    return {key: value for key, value in out.items() if value != ring.zero}


def _hamiltonian_contribution(family, samples, pair, function):
    """Leading effect of adding h**(k-1) * function * dt_a ^ dt_b to gamma2."""
    h = family.chart.h
    first = family.gamma0.operators[0] if family.gamma0.operators else None
    out = {}
    if first is not None:
        for i, f in enumerate(samples):
            value = (first(f, function) - first(function, f)).coeff_wrt(h, 0)
            if value:
                out[('curvature', pair, i)] = value
    for index, op in family.gamma1.items():
        sign, merged = _merge((index,), pair)
        if sign:
            value = op.h_part(1)(function)
            if value:
                _accumulate(out, ('twist', merged), value if sign > 0 else -value)
    return out


def _correct(family):
    """Solve for connection and curvature corrections wherever a residual survives."""
    chart = family.chart
    samples = monomials(_fibre_gens(chart), get_setting('ANSATZ_OPERATOR_ORDER'))
    for k in range(1, family.order + 1):
        residuals = _order_residuals(family, samples, k)
        failing = {key: value for key, value in residuals.items() if value}
        if not failing:
            continue
        logger.debug(f"Order {k}: {len(failing)} nonzero residuals, solving corrections")
        if 2 * k - 1 <= family.order:
            raise QuantizationError(
                f"Residual at order {k} cannot be corrected linearly",
                witness={'order': k, 'bidegrees': _failing_bidegrees(failing)},
            )
        family = _solve_corrections(family, samples, k, residuals)
    return family


def _failing_bidegrees(failing):
    labels = {'parallel': '(1,2)', 'curvature': '(2,1)', 'twist': '(3,0)'}
    return sorted({labels[key[0]] for key in failing})


def _solve_corrections(family, samples, k, residuals):
    chart, order = family.chart, family.order
    ring, h = chart.ring, chart.h
    all_gens = [chart.gen(i) for i in range(chart.dimension)]
    coefficient_monomials = monomials(all_gens, get_setting('ANSATZ_COEFFICIENT_DEGREE'), min_degree=0)
    derivatives = multi_indices(len(chart.fibre_indices), get_setting('ANSATZ_OPERATOR_ORDER'), min_order=1)
    hamiltonians = monomials(_fibre_gens(chart), get_setting('ANSATZ_COEFFICIENT_DEGREE') + 1)

    unknowns, contributions = [], []
    for index in chart.base_indices:
        for mu in coefficient_monomials:
            for alpha in derivatives:
                op = DiffOp(chart, {alpha: mu}, 0)
                unknowns.append(('connection', index, alpha, mu))
                contributions.append(_connection_contribution(family, samples, index, op))
    for pair in combinations(chart.base_indices, 2):
        for mu in hamiltonians:
            unknowns.append(('curvature', pair, None, mu))
            contributions.append(_hamiltonian_contribution(family, samples, pair, mu))

    equations = [
        ([contribution.get(label, ring.zero) for contribution in contributions], -target)
        for label, target in residuals.items()
    ]
    solution = solve_polynomial_system(equations, len(unknowns))
    if solution is None:
        failing = {key: value for key, value in residuals.items() if value}
        logger.error(f"No correction at order {k} within the ansatz")
        raise QuantizationError(
            f"No correction at order {k} within the ansatz",
            witness={'order': k, 'bidegrees': _failing_bidegrees(failing)},
        )

    connection = dict(family.gamma1)
    gamma2 = family.gamma2
    for weight, (kind, key, alpha, mu) in zip(solution, unknowns):
        if not weight:
            continue
        value = mu.mul_ground(weight)
        if kind == 'connection':
            step = DiffOp(chart, {alpha: value * h ** k}, order)
            connection[key] = connection[key] + step if key in connection else step
        else:
            gamma2 = gamma2 + basis_form(chart, key, order) * (value * h ** (k - 1))
    corrected = StarFamily(family.gamma0, connection, gamma2, family.chi)
    remaining = {key: v for key, v in _order_residuals(corrected, samples, k).items() if v}
    if remaining:
        raise QuantizationError(
            f"Correction at order {k} left residuals",
            witness={'order': k, 'bidegrees': _failing_bidegrees(remaining)},
        )
    return corrected


# ---------------------------------------------------------------------------
# Outer and inner transformations of star families
# ---------------------------------------------------------------------------

def outer_transform_star(family, beta):
    """(gamma2, chi) -> (gamma2 + beta, chi + d beta) for a 2-form beta on the base."""
    chart = family.chart
    beta = lift(as_kind(beta, DiffForm), chart)
    if not beta.is_homogeneous(2, 0):
        raise GradeError(f"{beta} is not a 2-form")
    base_pullback(beta, chart)
    return StarFamily(
        family.gamma0,
        dict(family.gamma1),
        (family.gamma2 + beta).with_order(family.order),
        (family.chi + de_rham_d(beta)).with_order(family.order),
    )


@dataclass(frozen=True, eq=False)
class StarVariation:
    """
    First-order change of a star family under an inner parameter made of a
    fibre vector field Y (O(h)) and a 1-form theta on the base.
    """

    family: StarFamily
    vector: DiffOp
    potential: DiffForm

    def product(self, f, g):
        star, op = self.family.gamma0, self.vector
        return op(star(f, g)) - star(op(f), g) - star(f, op(g))

    def connection(self, index, f):
        family, op = self.family, self.vector
        theta = self.potential.coefficient((index,))
        connection = family.connection(index)
        star = family.gamma0
        return (
            op.base_derivative(index)(f)
            + op(connection(f)) - connection(op(f))
            + star(f, theta) - star(theta, f)
        )

    def curvature(self):
        family, chart, order = self.family, self.family.chart, self.family.order
        total = base_differential(self.potential) + family.gamma2.map_coefficients(self.vector.apply)
        for index, op in family.gamma1.items():
            image = self.potential.map_coefficients(op.apply)
            if image:
                total = total - wedge(basis_form(chart, (index,), order), image)
        return as_kind(total.with_order(order), DiffForm)


def inner_variation_star(family, alpha):
    """The first-order variation d alpha + [alpha, gamma] of a star family."""
    if not isinstance(alpha, InnerParam):
        alpha = InnerParam(alpha)
    chart, order = family.chart, family.order
    param = alpha.alpha
    if param.chart != chart:
        raise ChartError(f"Inner parameter on {param.chart}, expected {chart}")
    vector = DiffOp.from_vector(as_kind(param.component(0, 1), Multivector), order)
    potential = DiffForm(chart, param.component(1, 0).terms, order)
    return StarVariation(family, vector, potential)


def compare_inner_variations(poisson_family, star_family, alpha, testfns, report=None):
    """
    Check that the inner variation of the quantized family agrees with the
    variation of the Poisson family to first order in h.
    """
    report = report if report is not None else Report('inner-variation', star_family.order)
    chart = star_family.chart
    h = chart.h
    functions = _test_polys(chart, testfns)
    variation = inner_variation_star(star_family, alpha)
    classical = inner_transform_infinitesimal(poisson_family, alpha)
    half = QQ_I.convert(QQ(1, 2))
    product_bracket = bracket_operator(Multivector(chart, classical.component(0, 2).terms, classical.order))
    for (i, f), (j, g) in product(enumerate(functions), repeat=2):
        residual = rs_trunc(variation.product(f, g) - product_bracket(f, g).mul_ground(half), h, 3)
        report.add(f"inner/product/{i}-{j}", not residual, residual)
    vectors = {}
    for ((index,), fibre), coeff in classical.component(1, 1).terms.items():
        vectors.setdefault(index, {})[((), fibre)] = coeff
    for index in chart.base_indices:
        classical_op = DiffOp.from_vector(Multivector(chart, vectors.get(index, {}), classical.order))
        for i, f in enumerate(functions):
            residual = rs_trunc(variation.connection(index, f) - classical_op(f), h, 2)
            report.add(f"inner/connection/{chart.coordinates[index]}/{i}", not residual, residual)
    residual = (variation.curvature() - DiffForm(chart, classical.component(2, 0).terms, classical.order)).truncate(1)
    report.add('inner/curvature', residual.is_zero(), str(residual))
    return report
