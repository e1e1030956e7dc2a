"""
Exact scalars, truncated series and polynomial exterior/multivector calculus.

A field on a chart is a finite sum of terms ``c * dx_A * d_I`` where ``dx_A``
is a wedge of coordinate differentials, ``d_I`` a wedge of coordinate vector
fields and ``c`` a polynomial in ``Q(i)[coordinates, h, L]``. Here ``h`` is
the formal deformation parameter and ``L`` the period unit 2*pi*sqrt(-1).
Coefficients are kept modulo ``h**(order + 1)``.

Sign conventions (shared by every module of the app):

* Form factors are written to the left of vector factors. Moving ``dx_B``
  past ``d_I`` costs ``(-1)**(|I| * |B|)``; both kinds of factors are odd.
* Schouten bracket:
  ``[P, Q] = sum_i (P <d_i)(D_i Q) - (-1)**((p-1)(q-1)) (Q <d_i)(D_i P)``
  where ``<d_i`` is the right derivative in the vector variable ``d_i``,
  ``D_i`` differentiates coefficients and ``p``, ``q`` are total degrees.
  This is the extension of the Lie bracket with ``[X, f] = X(f)`` and
  ``[a, b^c] = [a, b]^c + (-1)**((|a|-1)|b|) b^[a, c]``.
  On a product chart only the fibre coordinates are differentiated.
* ``pi~(xi) = pi(xi, .)``.
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache, reduce
from itertools import combinations

from sympy import symbols
from sympy.polys.domains import QQ, QQ_I
from sympy.polys.matrices import DomainMatrix
from sympy.polys.ring_series import rs_mul, rs_trunc
from sympy.polys.rings import PolyElement, PolyRing

from .conf import get_setting
from .exceptions import (
    ChartError, GradeError, NotInvertibleError, ScalarError,
)

logger = logging.getLogger(__name__)

RESERVED_NAMES = frozenset({'h', 'L', 'I'})


def to_rational(value):
    """Convert an int, a ``Fraction``-like or a ``"p/q"`` string to ``QQ``."""
    if isinstance(value, str):
        num, _, den = value.partition('/')
        return QQ(int(num), int(den) if den else 1)
    if hasattr(value, 'numerator') and hasattr(value, 'denominator'):
        return QQ(int(value.numerator), int(value.denominator))
    return QQ.convert(value)


# ---------------------------------------------------------------------------
# Scalars and series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scalar:
    """A Gaussian rational plus a Gaussian-rational multiple of ``L``."""

    rational: object = QQ_I.zero
    period: object = QQ_I.zero

    def __post_init__(self):
        object.__setattr__(self, 'rational', QQ_I.convert(self.rational))
        object.__setattr__(self, 'period', QQ_I.convert(self.period))

    @classmethod
    def coerce(cls, value):
        if isinstance(value, Scalar):
            return value
        return cls(QQ_I.convert(value))

    @classmethod
    def from_poly(cls, poly):
        """Read a polynomial that only involves ``L`` (degree at most one)."""
        names = [str(s) for s in poly.ring.symbols]
        position = names.index('L')
        rational, period = QQ_I.zero, QQ_I.zero
        for monom, coeff in poly.iterterms():
            others = monom[:position] + monom[position + 1:]
            if any(others):
                raise ScalarError(f"Not a scalar: {poly.as_expr()}", witness=str(poly.as_expr()))
            if monom[position] == 0:
                rational = coeff
            elif monom[position] == 1:
                period = coeff
            else:
                raise ScalarError("Products of periods are not supported", witness=str(poly.as_expr()))
        return cls(rational, period)

    def to_poly(self, ring):
        names = [str(s) for s in ring.symbols]
        return ring.ground_new(self.rational) + ring.gens[names.index('L')].mul_ground(self.period)

    def __add__(self, other):
        other = Scalar.coerce(other)
        return Scalar(self.rational + other.rational, self.period + other.period)

    __radd__ = __add__

    def __neg__(self):
        return Scalar(-self.rational, -self.period)

    def __sub__(self, other):
        return self + (-Scalar.coerce(other))

    def __rsub__(self, other):
        return Scalar.coerce(other) - self

    def __mul__(self, other):
        other = Scalar.coerce(other)
        if self.period and other.period:
            raise ScalarError("Products of periods are not supported", witness=f"{self} * {other}")
        return Scalar(
            self.rational * other.rational,
            self.rational * other.period + self.period * other.rational,
        )

    __rmul__ = __mul__

    def __bool__(self):
        return bool(self.rational) or bool(self.period)

    @property
    def is_rational(self):
        return not self.period

    def exp_is_one(self):
        """exp(self) == 1 exactly: no rational part and an integer period."""
        if self.rational or self.period.y:
            return False
        return QQ.denom(self.period.x) == 1

    def exp_equals(self, other):
        return (self - Scalar.coerce(other)).exp_is_one()

    def __str__(self):
        from .expressions import format_scalar
        return format_scalar(self)


@dataclass(frozen=True)
class FormalSeries:
    """Coefficients ``c_0 .. c_N`` of a series in ``h`` modulo ``h**(N+1)``."""

    coefficients: tuple
    order: int

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("Truncation order must be non-negative")
        object.__setattr__(self, 'coefficients', tuple(self.coefficients))
        if len(self.coefficients) != self.order + 1:
            raise ValueError(
                f"Expected {self.order + 1} coefficients, got {len(self.coefficients)}"
            )

    @classmethod
    def from_coefficients(cls, coefficients, order, zero):
        coefficients = list(coefficients)[:order + 1]
        coefficients += [zero] * (order + 1 - len(coefficients))
        return cls(tuple(coefficients), order)

    def truncate(self, order):
        order = min(order, self.order)
        return FormalSeries(self.coefficients[:order + 1], order)

    def __add__(self, other):
        order = min(self.order, other.order)
        return FormalSeries(
            tuple(a + b for a, b in zip(self.coefficients[:order + 1], other.coefficients)),
            order,
        )

    def __neg__(self):
        return FormalSeries(tuple(-c for c in self.coefficients), self.order)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, FormalSeries):
            return FormalSeries(tuple(c * other for c in self.coefficients), self.order)
        order = min(self.order, other.order)
        product = []
        for k in range(order + 1):
            terms = [self.coefficients[i] * other.coefficients[k - i] for i in range(k + 1)]
            product.append(reduce(lambda a, b: a + b, terms))
        return FormalSeries(tuple(product), order)

    def __rmul__(self, other):
        return FormalSeries(tuple(other * c for c in self.coefficients), self.order)

    def __getitem__(self, k):
        return self.coefficients[k]

    def is_formal(self):
        """True when the series is O(h)."""
        return not self.coefficients[0]

    def _unit(self):
        zero = self.coefficients[0] - self.coefficients[0]
        return FormalSeries.from_coefficients([zero + 1], self.order, zero)

    def exp(self):
        """exp of an O(h) series, truncated at the series order."""
        if not self.is_formal():
            raise ValueError("exp needs a series without constant term")
        total = term = self._unit()
        for k in range(1, self.order + 1):
            term = term * self * QQ(1, k)
            total = total + term
        return total

    def log(self):
        """log of a series with constant term one."""
        unit = self._unit()
        if self.coefficients[0] != unit.coefficients[0]:
            raise ValueError("log needs a series with constant term one")
        x = self - unit
        total, power = x * 0, x
        for k in range(1, self.order + 1):
            total = total + power * QQ((-1) ** (k + 1), k)
            power = power * x
        return total

    def is_zero(self):
        return not any(self.coefficients)

    def __str__(self):
        from .expressions import format_series
        return format_series(self)


def scalar_series(poly, order):
    """Split a polynomial in ``h`` and ``L`` into a series of Scalars."""
    names = [str(s) for s in poly.ring.symbols]
    h = poly.ring.gens[names.index('h')]
    coefficients = [Scalar.from_poly(poly.coeff_wrt(h, k)) for k in range(order + 1)]
    return FormalSeries(tuple(coefficients), order)


# ---------------------------------------------------------------------------
# Charts
# ---------------------------------------------------------------------------

def _check_name(name):
    if not name.isidentifier():
        raise ChartError(f"Coordinate name {name!r} is not an identifier")
    if name in RESERVED_NAMES or name.startswith('_'):
        raise ChartError(f"Coordinate name {name!r} is reserved")
    if name[0] in 'dD':
        raise ChartError(f"Coordinate name {name!r} clashes with the d/D basis prefixes")


@dataclass(frozen=True)
class Chart:
    """
    A coordinate chart: an axis-aligned box (possibly unbounded) in R^n.

    ``split`` marks a product chart M x B: the first ``split`` coordinates
    belong to the fibre M, the remaining ones to the base B.
    """

    coordinates: tuple
    box: tuple = None
    split: int = None

    def __post_init__(self):
        coordinates = tuple(str(c) for c in self.coordinates)
        if not coordinates:
            raise ChartError("A chart needs at least one coordinate")
        if len(set(coordinates)) != len(coordinates):
            raise ChartError(f"Coordinate names are not distinct: {coordinates}")
        for name in coordinates:
            _check_name(name)
        box = self.box
        if box is None:
            box = tuple((None, None) for _ in coordinates)
        box = tuple(
            (None if lo is None else to_rational(lo), None if hi is None else to_rational(hi))
            for lo, hi in box
        )
        if len(box) != len(coordinates):
            raise ChartError("Box and coordinates have different lengths")
        for lo, hi in box:
            if lo is not None and hi is not None and not lo < hi:
                raise ChartError(f"Empty box interval [{lo}, {hi}]")
        if self.split is not None and not 0 < self.split < len(coordinates):
            raise ChartError(f"Invalid product split {self.split}")
        object.__setattr__(self, 'coordinates', coordinates)
        object.__setattr__(self, 'box', box)

    @classmethod
    def product(cls, fibre, base):
        """The product chart M x B with M's coordinates first."""
        clash = set(fibre.coordinates) & set(base.coordinates)
        if clash:
            raise ChartError(f"Fibre and base share coordinate names: {sorted(clash)}")
        return cls(fibre.coordinates + base.coordinates, fibre.box + base.box, len(fibre.coordinates))

    def renamed(self, suffix):
        return Chart(tuple(f"{c}{suffix}" for c in self.coordinates), self.box)

    @property
    def dimension(self):
        return len(self.coordinates)

    @property
    def is_product(self):
        return self.split is not None

    @property
    def fibre(self):
        if not self.is_product:
            return self
        return Chart(self.coordinates[:self.split], self.box[:self.split])

    @property
    def base(self):
        if not self.is_product:
            raise ChartError("Not a product chart")
        return Chart(self.coordinates[self.split:], self.box[self.split:])

    @property
    def fibre_indices(self):
        return tuple(range(self.split if self.is_product else self.dimension))

    @property
    def base_indices(self):
        return tuple(range(self.split, self.dimension)) if self.is_product else ()

    @cached_property
    def ring(self):
        return PolyRing(symbols(list(self.coordinates) + ['h', 'L']), QQ_I)

    @property
    def h(self):
        return self.ring.gens[self.dimension]

    @property
    def L(self):
        return self.ring.gens[self.dimension + 1]

    def gen(self, i):
        return self.ring.gens[i]

    def index(self, name):
        try:
            return self.coordinates.index(name)
        except ValueError:
            raise ChartError(f"{name!r} is not a coordinate of {self}") from None

    def contains(self, point):
        point = tuple(to_rational(p) for p in point)
        if len(point) != self.dimension:
            return False
        for value, (lo, hi) in zip(point, self.box):
            if lo is not None and value < lo:
                return False
            if hi is not None and value > hi:
                return False
        return True

    @property
    def base_point(self):
        point = []
        for lo, hi in self.box:
            if lo is not None and hi is not None:
                point.append((lo + hi) / 2)
            elif lo is not None:
                point.append(lo)
            elif hi is not None:
                point.append(hi)
            else:
                point.append(QQ(0))
        return tuple(point)

    def __str__(self):
        return f"Chart({', '.join(self.coordinates)})"


@lru_cache(maxsize=None)
def extended_ring(ring, extra):
    """``ring`` with additional generators named in the tuple ``extra``."""
    names = [str(s) for s in ring.symbols] + list(extra)
    return PolyRing(symbols(names), ring.domain)


def coerce_poly(ring, value):
    if isinstance(value, PolyElement):
        return value if value.ring == ring else value.set_ring(ring)
    return ring.ring_new(value)


# ---------------------------------------------------------------------------
# Term algebra
# ---------------------------------------------------------------------------

def canonical_indices(indices):
    """Sort an index tuple, returning (sign, sorted) or (0, None) on repeats."""
    indices = tuple(indices)
    if len(set(indices)) != len(indices):
        return 0, None
    inversions = sum(1 for a, b in combinations(indices, 2) if a > b)
    return (-1) ** inversions, tuple(sorted(indices))


def _merge(left, right):
    if not left or not right:
        return 1, left + right
    for a in left:
        if a in right:
            return 0, None
    inversions = sum(1 for a in left for b in right if b < a)
    return (-1) ** inversions, tuple(sorted(left + right))


def _term_product(key1, key2):
    (forms1, vectors1), (forms2, vectors2) = key1, key2
    sign_forms, forms = _merge(forms1, forms2)
    if not sign_forms:
        return 0, None
    sign_vectors, vectors = _merge(vectors1, vectors2)
    if not sign_vectors:
        return 0, None
    sign = sign_forms * sign_vectors
    if len(vectors1) * len(forms2) % 2:
        sign = -sign
    return sign, (forms, vectors)


def _accumulate(terms, key, value):
    if key in terms:
        terms[key] = terms[key] + value
    else:
        terms[key] = value


def _multiply_terms(terms1, terms2, h, prec, out=None, sign=1):
    out = {} if out is None else out
    for key1, c1 in terms1.items():
        for key2, c2 in terms2.items():
            s, key = _term_product(key1, key2)
            if s:
                product = rs_mul(c1, c2, h, prec)
                _accumulate(out, key, product if s * sign > 0 else -product)
    return out


def _total_degree(key):
    return len(key[0]) + len(key[1])


class Field:
    """
    Polynomial section of the exterior algebra generated by dx_i and d_i.

    Use the subclasses; ``Field`` itself only appears for mixed objects on
    plain charts.
    """

    __slots__ = ('chart', 'terms', 'order')

    def __init__(self, chart, terms=None, order=None):
        if order is None:
            order = get_setting('TRUNCATION_ORDER')
        ring, h, prec = chart.ring, chart.h, order + 1
        cleaned = {}
        for key, coeff in (terms or {}).items():
            forms, vectors = (tuple(k) for k in key)
            sign_forms, forms = canonical_indices(forms)
            sign_vectors, vectors = canonical_indices(vectors)
            if not sign_forms or not sign_vectors:
                continue
            for i in forms + vectors:
                if not 0 <= i < chart.dimension:
                    raise ChartError(f"Index {i} out of range for {chart}")
            coeff = rs_trunc(coerce_poly(ring, coeff), h, prec)
            if sign_forms * sign_vectors < 0:
                coeff = -coeff
            _accumulate(cleaned, (forms, vectors), coeff)
        self.chart = chart
        self.order = order
        self.terms = {k: c for k, c in cleaned.items() if c}
        self._validate()

    def _validate(self):
        pass

    # construction helpers -------------------------------------------------

    @classmethod
    def zero(cls, chart, order=None):
        return cls(chart, {}, order)

    def _new(self, terms, order=None, cls=None):
        return (cls or type(self))(self.chart, terms, self.order if order is None else order)

    def _same_chart(self, other):
        if self.chart != other.chart:
            raise ChartError(f"Chart mismatch: {self.chart} vs {other.chart}")

    # arithmetic -----------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, Field):
            other = PolyFunc(self.chart, {((), ()): other}, self.order)
        self._same_chart(other)
        terms = dict(self.terms)
        for key, coeff in other.terms.items():
            _accumulate(terms, key, coeff)
        return _wrap(self.chart, terms, min(self.order, other.order), result_type(self, other))

    __radd__ = __add__

    def __neg__(self):
        return self._new({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        if not isinstance(other, Field):
            other = PolyFunc(self.chart, {((), ()): other}, self.order)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Field):
            return wedge(self, other)
        value = coerce_poly(self.chart.ring, other)
        h, prec = self.chart.h, self.order + 1
        return self._new({k: rs_mul(c, value, h, prec) for k, c in self.terms.items()})

    def __rmul__(self, other):
        if isinstance(other, Field):
            return wedge(other, self)
        return self * other

    def __eq__(self, other):
        if not isinstance(other, Field) or self.chart != other.chart:
            return NotImplemented if not isinstance(other, Field) else False
        return (self - other).is_zero()

    __hash__ = None

    def __bool__(self):
        return not self.is_zero()

    def is_zero(self):
        return not self.terms

    def __repr__(self):
        from .expressions import format_field
        return f"{type(self).__name__}({format_field(self)!r})"

    def __str__(self):
        from .expressions import format_field
        return format_field(self)

    # inspection -----------------------------------------------------------

    def coefficient(self, forms=(), vectors=()):
        return self.terms.get((tuple(forms), tuple(vectors)), self.chart.ring.zero)

    def bidegrees(self):
        return sorted({(len(f), len(v)) for f, v in self.terms})

    def component(self, form_degree, vector_degree):
        return self._new({
            k: c for k, c in self.terms.items()
            if len(k[0]) == form_degree and len(k[1]) == vector_degree
        })

    def homogeneous_parts(self):
        parts = {}
        for key, coeff in self.terms.items():
            parts.setdefault(_total_degree(key), {})[key] = coeff
        return {degree: self._new(terms) for degree, terms in parts.items()}

    def is_homogeneous(self, form_degree=None, vector_degree=None):
        for forms, vectors in self.terms:
            if form_degree is not None and len(forms) != form_degree:
                return False
            if vector_degree is not None and len(vectors) != vector_degree:
                return False
        return True

    def truncate(self, order):
        return self._new(self.terms, min(order, self.order))

    def with_order(self, order):
        return self._new(self.terms, order)

    def h_part(self, k):
        """The coefficient of h**k as a field of the same kind."""
        h = self.chart.h
        return self._new({key: c.coeff_wrt(h, k) for key, c in self.terms.items()})

    def is_formal(self):
        """True when every coefficient is O(h)."""
        return not self.h_part(0).terms

    def map_coefficients(self, func):
        return self._new({k: func(c) for k, c in self.terms.items()})

    def subs(self, values):
        """Substitute rational values for coordinates given as {index: value}."""
        replacements = [(self.chart.gen(i), to_rational(v)) for i, v in sorted(values.items())]
        if not replacements:
            return self
        return self.map_coefficients(lambda c: c.subs(replacements))

    def variables(self):
        """Indices of coordinates appearing in coefficients."""
        found = set()
        for coeff in self.terms.values():
            for monom in coeff.itermonoms():
                found.update(i for i in range(self.chart.dimension) if monom[i])
        return found


class PolyFunc(Field):
    """A polynomial function (0-form, 0-vector)."""

    __slots__ = ()

    def _validate(self):
        if any(key != ((), ()) for key in self.terms):
            raise GradeError("A PolyFunc carries no form or vector indices")

    @classmethod
    def from_poly(cls, chart, poly, order=None):
        return cls(chart, {((), ()): poly}, order)

    @property
    def poly(self):
        return self.coefficient()

    def series(self):
        """The h-expansion as a FormalSeries of h-free polynomials."""
        return FormalSeries(tuple(self.poly.coeff_wrt(self.chart.h, k) for k in range(self.order + 1)), self.order)


class DiffForm(Field):
    """A differential form with polynomial coefficients."""

    __slots__ = ()

    def _validate(self):
        if any(vectors for _, vectors in self.terms):
            raise GradeError("A DiffForm carries no vector indices")

    @property
    def degree(self):
        degrees = {len(forms) for forms, _ in self.terms}
        if len(degrees) > 1:
            raise GradeError(f"Inhomogeneous form with degrees {sorted(degrees)}")
        return degrees.pop() if degrees else None


class Multivector(Field):
    """A multivector field with polynomial coefficients."""

    __slots__ = ()

    def _validate(self):
        if any(forms for forms, _ in self.terms):
            raise GradeError("A Multivector carries no form indices")

    @property
    def grade(self):
        grades = {len(vectors) for _, vectors in self.terms}
        if len(grades) > 1:
            raise GradeError(f"Inhomogeneous multivector with grades {sorted(grades)}")
        return grades.pop() if grades else None


class BiGraded(Field):
    """Forms on the base B with values in multivectors on the fibre M."""

    __slots__ = ()

    def _validate(self):
        if not self.chart.is_product:
            raise ChartError("BiGraded elements live on product charts")
        base, fibre = set(self.chart.base_indices), set(self.chart.fibre_indices)
        for forms, vectors in self.terms:
            if not set(forms) <= base or not set(vectors) <= fibre:
                raise GradeError(
                    f"Term {forms}/{vectors} is not a base form with fibre vector values"
                )

    def bidegree(self, p, q):
        return self.component(p, q)


def result_type(*fields):
    kinds = {type(f) for f in fields}
    for candidate in (PolyFunc, DiffForm, Multivector, BiGraded):
        if kinds <= {PolyFunc, candidate}:
            return candidate
    if fields and fields[0].chart.is_product:
        return BiGraded
    return Field


def _wrap(chart, terms, order, preferred):
    try:
        return preferred(chart, terms, order)
    except (GradeError, ChartError):
        if preferred is Field:
            raise
        if chart.is_product and preferred is not BiGraded:
            try:
                return BiGraded(chart, terms, order)
            except (GradeError, ChartError):
                pass
        return Field(chart, terms, order)


def wedge(a, b):
    """Graded product of two fields."""
    a._same_chart(b)
    order = min(a.order, b.order)
    terms = _multiply_terms(a.terms, b.terms, a.chart.h, order + 1)
    kinds = {type(a), type(b)}
    if kinds <= {PolyFunc, DiffForm} or kinds <= {PolyFunc, Multivector} or kinds <= {PolyFunc, BiGraded}:
        preferred = result_type(a, b)
    else:
        preferred = BiGraded if a.chart.is_product else Field
    return _wrap(a.chart, terms, order, preferred)


def basis_form(chart, indices, order=None):
    return DiffForm(chart, {(tuple(indices), ()): 1}, order)


def basis_vector(chart, indices, order=None):
    return Multivector(chart, {((), tuple(indices)): 1}, order)


def function(chart, poly, order=None):
    return PolyFunc(chart, {((), ()): poly}, order)


# ---------------------------------------------------------------------------
# Calculus
# ---------------------------------------------------------------------------

def partial(field, i):
    """Differentiate every coefficient with respect to coordinate ``i``."""
    gen = field.chart.gen(i)
    return field.map_coefficients(lambda c: c.diff(gen))


def _partial_terms(terms, gen):
    out = {}
    for key, coeff in terms.items():
        derivative = coeff.diff(gen)
        if derivative:
            out[key] = derivative
    return out


def _exterior_derivative(field, indices):
    terms = {}
    chart = field.chart
    for (forms, vectors), coeff in field.terms.items():
        for i in indices:
            if i in forms:
                continue
            derivative = coeff.diff(chart.gen(i))
            if not derivative:
                continue
            sign, merged = _merge((i,), forms)
            _accumulate(terms, (merged, vectors), derivative if sign > 0 else -derivative)
    return terms


def de_rham_d(omega):
    """Exterior derivative in all coordinates of the chart."""
    terms = _exterior_derivative(omega, range(omega.chart.dimension))
    preferred = DiffForm if isinstance(omega, (PolyFunc, DiffForm)) else type(omega)
    return _wrap(omega.chart, terms, omega.order, preferred)


def base_differential(field):
    """The differential along the base B of a product chart."""
    if not field.chart.is_product:
        raise ChartError("The base differential needs a product chart")
    terms = _exterior_derivative(field, field.chart.base_indices)
    preferred = DiffForm if isinstance(field, (PolyFunc, DiffForm)) else BiGraded
    return _wrap(field.chart, terms, field.order, preferred)


def _right_derivative_terms(terms, i):
    out = {}
    for (forms, vectors), coeff in terms.items():
        if i not in vectors:
            continue
        position = vectors.index(i)
        reduced = vectors[:position] + vectors[position + 1:]
        sign = -1 if (len(vectors) - 1 - position) % 2 else 1
        out[(forms, reduced)] = coeff if sign > 0 else -coeff
    return out


def schouten_bracket(a, b):
    """Schouten-Nijenhuis bracket, fibrewise on product charts."""
    a._same_chart(b)
    chart = a.chart
    order = min(a.order, b.order)
    h, prec = chart.h, order + 1
    parts_a = {}
    for key, coeff in a.terms.items():
        parts_a.setdefault(_total_degree(key), {})[key] = coeff
    parts_b = {}
    for key, coeff in b.terms.items():
        parts_b.setdefault(_total_degree(key), {})[key] = coeff
    terms = {}
    for p, terms_a in parts_a.items():
        for q, terms_b in parts_b.items():
            sign = -1 if (p - 1) * (q - 1) % 2 else 1
            for i in chart.fibre_indices:
                gen = chart.gen(i)
                left = _right_derivative_terms(terms_a, i)
                if left:
                    _multiply_terms(left, _partial_terms(terms_b, gen), h, prec, terms)
                left = _right_derivative_terms(terms_b, i)
                if left:
                    _multiply_terms(left, _partial_terms(terms_a, gen), h, prec, terms, -sign)
    if isinstance(a, (PolyFunc, Multivector)) and isinstance(b, (PolyFunc, Multivector)):
        preferred = Multivector
    else:
        preferred = BiGraded if chart.is_product else Field
    return _wrap(chart, terms, order, preferred)


def interior(vector, omega):
    """Interior product i_X of a vector field X: the left derivative in dx."""
    vector._same_chart(omega)
    if not vector.is_homogeneous(0, 1):
        raise GradeError("Interior products take a vector field")
    order = min(vector.order, omega.order)
    h, prec = omega.chart.h, order + 1
    terms = {}
    for (_, (j,)), component in vector.terms.items():
        for (forms, vectors), coeff in omega.terms.items():
            if j not in forms:
                continue
            position = forms.index(j)
            product = rs_mul(component, coeff, h, prec)
            key = (forms[:position] + forms[position + 1:], vectors)
            _accumulate(terms, key, -product if position % 2 else product)
    return _wrap(omega.chart, terms, order, type(omega))


def bivector_matrix(pi):
    """Full antisymmetric coefficient matrix P with pi = sum_{i<j} P[i][j] d_i^d_j."""
    n, zero = pi.chart.dimension, pi.chart.ring.zero
    matrix = [[zero] * n for _ in range(n)]
    for (forms, vectors), coeff in pi.terms.items():
        if forms or len(vectors) != 2:
            raise GradeError("Expected a bivector")
        i, j = vectors
        matrix[i][j] = coeff
        matrix[j][i] = -coeff
    return matrix


def form_matrix(beta):
    """Full antisymmetric matrix Q with Q[a][b] = beta(d_a, d_b)."""
    n, zero = beta.chart.dimension, beta.chart.ring.zero
    matrix = [[zero] * n for _ in range(n)]
    for (forms, vectors), coeff in beta.terms.items():
        if vectors or len(forms) != 2:
            raise GradeError("Expected a 2-form")
        a, b = forms
        matrix[a][b] = coeff
        matrix[b][a] = -coeff
    return matrix


def bivector_from_matrix(chart, matrix, order, indices=None):
    indices = indices if indices is not None else range(chart.dimension)
    terms = {}
    for i, j in combinations(indices, 2):
        coeff = matrix[i][j]
        if coeff:
            terms[((), (i, j))] = coeff
    return Multivector(chart, terms, order)


def sharp(pi, xi):
    """pi~(xi) = pi(xi, .) for a bivector pi and a 1-form xi."""
    pi._same_chart(xi)
    order = min(pi.order, xi.order)
    h, prec = pi.chart.h, order + 1
    terms = {}
    for (_, (i, j)), p in pi.terms.items():
        xi_i = xi.coefficient((i,))
        xi_j = xi.coefficient((j,))
        if xi_i:
            _accumulate(terms, ((), (j,)), rs_mul(p, xi_i, h, prec))
        if xi_j:
            _accumulate(terms, ((), (i,)), -rs_mul(p, xi_j, h, prec))
    return Multivector(pi.chart, terms, order)


def wedge3_contraction(pi, phi):
    """The trivector obtained by applying pi~ to every slot of phi."""
    pi._same_chart(phi)
    if not isinstance(pi, Multivector) or not pi.is_homogeneous(0, 2):
        raise GradeError("wedge3_contraction expects a bivector")
    if not isinstance(phi, DiffForm) or not phi.is_homogeneous(3, 0):
        raise GradeError("wedge3_contraction expects a 3-form")
    chart, order = pi.chart, min(pi.order, phi.order)
    images = {k: sharp(pi, basis_form(chart, (k,), order)) for k in range(chart.dimension)}
    result = Multivector.zero(chart, order)
    for ((a, b, c), _), coeff in phi.terms.items():
        result = result + wedge(wedge(images[a], images[b]), images[c]) * coeff
    return result


# ---------------------------------------------------------------------------
# Integration and homotopy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineSimplex:
    """Ordered vertices of an affine simplex; the order fixes the orientation."""

    chart: Chart
    vertices: tuple

    def __post_init__(self):
        vertices = tuple(tuple(to_rational(x) for x in v) for v in self.vertices)
        if not vertices:
            raise ChartError("A simplex needs at least one vertex")
        for v in vertices:
            if len(v) != self.chart.dimension:
                raise ChartError(f"Vertex {v} does not match {self.chart}")
        object.__setattr__(self, 'vertices', vertices)
        k = len(vertices) - 1
        if k > self.chart.dimension:
            raise ChartError("Simplex dimension exceeds chart dimension")
        if k and _edge_rank(vertices) != k:
            raise ChartError("Simplex vertices are affinely dependent", witness=[str(v) for v in vertices])

    @property
    def dimension(self):
        return len(self.vertices) - 1

    def boundary(self):
        """Faces with their incidence signs, sum_i (-1)**i [v0 .. ^vi .. vk]."""
        return [
            ((-1) ** i, AffineSimplex(self.chart, self.vertices[:i] + self.vertices[i + 1:]))
            for i in range(len(self.vertices))
        ]

    def reversed(self):
        vertices = list(self.vertices)
        if len(vertices) > 1:
            vertices[0], vertices[1] = vertices[1], vertices[0]
        return AffineSimplex(self.chart, tuple(vertices))


def _edge_rank(vertices):
    origin = vertices[0]
    rows = [[v[a] - origin[a] for a in range(len(origin))] for v in vertices[1:]]
    return DomainMatrix(rows, (len(rows), len(origin)), QQ).rank()


def _simplex_moment(exponents):
    """Integral of prod u_j**e_j over the standard simplex of dimension len(e)."""
    k = len(exponents)
    numerator = 1
    for e in exponents:
        numerator *= math.factorial(e)
    return QQ(numerator, math.factorial(k + sum(exponents)))


def integrate_terms(field, vertices, indices):
    """
    Integrate the form part of ``field`` over the affine simplex spanned by
    ``vertices`` in the coordinates ``indices``; other coordinates stay symbolic.

    Returns a term dict keyed by ((), vectors).
    """
    chart = field.chart
    k = len(vertices) - 1
    origin = vertices[0]
    edges = [[v[a] - origin[a] for v in vertices[1:]] for a in range(len(indices))]
    position = {index: a for a, index in enumerate(indices)}
    extra = tuple(f'__u{j}' for j in range(k))
    ring = extended_ring(chart.ring, extra)
    params = ring.gens[-k:] if k else ()
    replacements = []
    for index in indices:
        a = position[index]
        image = ring.ground_new(QQ_I.convert(origin[a]))
        for j in range(k):
            if edges[a][j]:
                image += params[j].mul_ground(QQ_I.convert(edges[a][j]))
        replacements.append((ring.gens[index], image))
    n_original = len(chart.ring.gens)
    out = {}
    for (forms, vectors), coeff in field.terms.items():
        if len(forms) != k or not set(forms) <= set(indices):
            continue
        if k:
            rows = [[QQ_I.convert(edges[position[f]][j]) for j in range(k)] for f in forms]
            jacobian = DomainMatrix(rows, (k, k), QQ_I).det()
            if not jacobian:
                continue
        else:
            jacobian = QQ_I.one
        pulled = coeff.set_ring(ring).compose(replacements) if replacements else coeff.set_ring(ring)
        integral = ring.zero
        for monom, c in pulled.iterterms():
            weight = _simplex_moment(monom[n_original:]) if k else QQ(1)
            reduced = monom[:n_original] + (0,) * k
            integral += ring({reduced: c * QQ_I.convert(weight)})
        integral = integral.set_ring(chart.ring).mul_ground(jacobian)
        _accumulate(out, ((), vectors), integral)
    return {key: c for key, c in out.items() if c}


def integrate_over_simplex(omega, simplex):
    """Exact integral of a k-form over an oriented affine k-simplex."""
    if omega.chart != simplex.chart:
        raise ChartError("Form and simplex live on different charts")
    if not isinstance(omega, DiffForm) or not omega.is_homogeneous(simplex.dimension, 0):
        raise GradeError(
            f"Cannot integrate a form of degrees {omega.bidegrees()} over a "
            f"{simplex.dimension}-simplex"
        )
    terms = integrate_terms(omega, simplex.vertices, tuple(range(omega.chart.dimension)))
    value = terms.get(((), ()), omega.chart.ring.zero)
    return scalar_series(value, omega.order)


def poincare_homotopy(omega, center=None):
    """
    Radial homotopy operator K about ``center``: dK + Kd = id on forms of
    degree >= 1. The 0-form part of ``omega`` is dropped.
    """
    chart = omega.chart
    center = tuple(to_rational(c) for c in (center if center is not None else chart.base_point))
    if not chart.contains(center):
        raise ChartError(f"{chart} is not star-shaped about {center}", witness=[str(c) for c in center])
    ring = extended_ring(chart.ring, ('__u0',))
    u = ring.gens[-1]
    replacements = []
    for i in range(chart.dimension):
        x = ring.gens[i]
        c = ring.ground_new(QQ_I.convert(center[i]))
        replacements.append((x, c + u * (x - c)))
    n_original = len(chart.ring.gens)
    terms = {}
    for (forms, vectors), coeff in omega.terms.items():
        k = len(forms)
        if not k:
            continue
        pulled = coeff.set_ring(ring).compose(replacements) * u ** (k - 1)
        radial = ring.zero
        for monom, c in pulled.iterterms():
            reduced = monom[:n_original] + (0,)
            radial += ring({reduced: c * QQ_I.convert(QQ(1, monom[-1] + 1))})
        radial = radial.set_ring(chart.ring)
        for j, a in enumerate(forms):
            offset = chart.gen(a) - chart.ring.ground_new(QQ_I.convert(center[a]))
            value = radial * offset
            _accumulate(terms, (forms[:j] + forms[j + 1:], vectors), -value if j % 2 else value)
    return _wrap(chart, terms, omega.order, type(omega) if isinstance(omega, DiffForm) else Field)


# ---------------------------------------------------------------------------
# Lifts between factor charts and product charts
# ---------------------------------------------------------------------------

def lift(field, chart):
    """Embed a field from a factor chart into ``chart`` by coordinate names."""
    if field.chart == chart:
        return field
    mapping = [chart.index(name) for name in field.chart.coordinates]
    terms = {}
    for (forms, vectors), coeff in field.terms.items():
        sign_f, new_forms = canonical_indices(mapping[i] for i in forms)
        sign_v, new_vectors = canonical_indices(mapping[i] for i in vectors)
        value = coeff.set_ring(chart.ring)
        _accumulate(terms, (new_forms, new_vectors), value if sign_f * sign_v > 0 else -value)
    return _wrap(chart, terms, field.order, type(field))


def project(field, chart):
    """Inverse of ``lift``: restrict a field that only involves ``chart``'s coordinates."""
    if field.chart == chart:
        return field
    mapping = {}
    for i, name in enumerate(field.chart.coordinates):
        if name in chart.coordinates:
            mapping[i] = chart.index(name)
    terms = {}
    for (forms, vectors), coeff in field.terms.items():
        if not set(forms) | set(vectors) <= set(mapping):
            raise ChartError(f"Field has components outside {chart}", witness=str(field))
        try:
            value = coeff.set_ring(chart.ring)
        except Exception as exc:
            raise ChartError(f"Field depends on coordinates outside {chart}", witness=str(field)) from exc
        sign_f, new_forms = canonical_indices(mapping[i] for i in forms)
        sign_v, new_vectors = canonical_indices(mapping[i] for i in vectors)
        _accumulate(terms, (new_forms, new_vectors), value if sign_f * sign_v > 0 else -value)
    preferred = type(field) if type(field) is not BiGraded else Field
    return _wrap(chart, terms, field.order, preferred)


def transplant(field, chart):
    """Copy a field to a chart of the same dimension, matching coordinates by position."""
    if chart.dimension != field.chart.dimension:
        raise ChartError(f"Cannot transplant from {field.chart} to {chart}")
    ring = chart.ring
    terms = {key: ring.from_dict(dict(coeff)) for key, coeff in field.terms.items()}
    return _wrap(chart, terms, field.order, type(field))


# ---------------------------------------------------------------------------
# Linear algebra helpers
# ---------------------------------------------------------------------------

def matmul(a, b, h, order):
    """Product of two polynomial matrices modulo h**(order + 1)."""
    prec = order + 1
    rows, inner, cols = len(a), len(b), len(b[0]) if b else 0
    ring = h.ring
    out = []
    for i in range(rows):
        row = []
        for j in range(cols):
            total = ring.zero
            for k in range(inner):
                if a[i][k] and b[k][j]:
                    total += rs_mul(a[i][k], b[k][j], h, prec)
            row.append(total)
        out.append(row)
    return out


def formal_inverse(matrix, h, order):
    """
    Inverse of a square polynomial matrix as a series in h.

    The h**0 part must have a nonzero constant determinant; the rest is
    inverted by a Neumann series truncated at ``order``.
    """
    ring = h.ring
    n = len(matrix)
    if not n:
        return []
    leading = [[rs_trunc(entry, h, 1) for entry in row] for row in matrix]
    domain = ring.to_domain()
    leading_dm = DomainMatrix(leading, (n, n), domain)
    determinant = leading_dm.det()
    if not determinant or not determinant.is_ground:
        raise NotInvertibleError(
            "Matrix is not invertible at order zero", witness=str(determinant.as_expr())
        )
    scale = ring.domain.quo(ring.domain.one, determinant.LC)
    inverse0 = [[entry.mul_ground(scale) for entry in row] for row in leading_dm.adjugate().to_list()]
    perturbation = [[matrix[i][j] - leading[i][j] for j in range(n)] for i in range(n)]
    step = [[-entry for entry in row] for row in matmul(inverse0, perturbation, h, order)]
    total, term = inverse0, inverse0
    for _ in range(order):
        term = matmul(step, term, h, order)
        if not any(entry for row in term for entry in row):
            break
        total = [[total[i][j] + term[i][j] for j in range(n)] for i in range(n)]
    return total


def solve_linear_system(rows, rhs, domain=QQ_I):
    """
    Solve ``rows @ x = rhs`` exactly over ``domain``.

    ``rhs`` is a list of right-hand-side rows (several columns allowed).
    Returns one solution per right-hand-side column as lists, with every free
    variable set to zero, or None when the system is inconsistent.
    """
    n_unknowns = len(rows[0]) if rows else 0
    n_rhs = len(rhs[0]) if rhs else 0
    if not rows:
        return [[domain.zero] * n_unknowns for _ in range(n_rhs)]
    augmented = [list(r) + list(b) for r, b in zip(rows, rhs)]
    matrix = DomainMatrix(augmented, (len(augmented), n_unknowns + n_rhs), domain)
    reduced, pivots = matrix.rref()
    reduced = reduced.to_list()
    if any(p >= n_unknowns for p in pivots):
        return None
    solutions = []
    for c in range(n_rhs):
        values = [domain.zero] * n_unknowns
        for r, p in enumerate(pivots):
            values[p] = reduced[r][n_unknowns + c]
        solutions.append(values)
    return solutions


def solve_polynomial_combination(columns, target, domain=QQ_I):
    """
    Find scalars x with sum_u x_u * columns[u] == target as polynomial
    identities (all of the same ring). Returns the list or None.
    """
    monomials = set(target.itermonoms())
    for column in columns:
        monomials.update(column.itermonoms())
    monomials = sorted(monomials)
    rows = [[column.get(m, domain.zero) for column in columns] for m in monomials]
    rhs = [[target.get(m, domain.zero)] for m in monomials]
    if not columns:
        return [] if not target else None
    solution = solve_linear_system(rows, rhs, domain)
    return None if solution is None else solution[0]


def solve_polynomial_system(equations, n_unknowns, domain=QQ_I):
    """
    Scalars x with sum_u x_u * columns[u] == target for every
    ``(columns, target)`` pair, as polynomial identities. None if infeasible.
    """
    rows, rhs = [], []
    for columns, target in equations:
        monomials = set(target.itermonoms())
        for column in columns:
            monomials.update(column.itermonoms())
        for m in sorted(monomials):
            rows.append([column.get(m, domain.zero) for column in columns])
            rhs.append([target.get(m, domain.zero)])
    if not rows:
        return [domain.zero] * n_unknowns
    solution = solve_linear_system(rows, rhs, domain)
    return None if solution is None else solution[0]


def derivative(poly, gens, exponents):
    """Apply the partial derivative with the given multi-index."""
    for gen, count in zip(gens, exponents):
        for _ in range(count):
            if not poly:
                return poly
            poly = poly.diff(gen)
    return poly


def monomials(gens, max_degree, min_degree=1):
    """All monomials in ``gens`` with total degree in [min_degree, max_degree], graded order."""
    ring = gens[0].ring
    found = []
    for degree in range(min_degree, max_degree + 1):
        for powers in _compositions(degree, len(gens)):
            term = ring.one
            for gen, power in zip(gens, powers):
                term *= gen ** power
            found.append(term)
    return found


def multi_indices(count, max_order, min_order=0):
    return [
        powers for order in range(min_order, max_order + 1)
        for powers in _compositions(order, count)
    ]


def _compositions(total, parts):
    if parts == 1:
        return [(total,)]
    return [
        (first,) + rest
        for first in range(total, -1, -1)
        for rest in _compositions(total - first, parts - 1)
    ]
