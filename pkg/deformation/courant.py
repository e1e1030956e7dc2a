"""
The twisted Courant algebroid (TM + T*M)_phi on a chart.

Sections are pairs (X, xi); the bracket is

    [(X1, xi1), (X2, xi2)] = ([X1, X2], L_X1 xi2 - i_X2 d xi1 + phi(X1, X2, .))

with pairing ``xi1(X2) + xi2(X1)`` and anchor ``(X, xi) -> X``. The gauge
action of a 2-form is ``tau_beta(X, xi) = (X, xi - i_X beta)``: it intertwines
the phi-twisted bracket with the (phi + d beta)-twisted one.
"""
import logging
from dataclasses import dataclass
from itertools import combinations, combinations_with_replacement, product

from sympy.polys.domains import QQ_I
from sympy.polys.matrices import DomainMatrix

from .algebra import (
    DiffForm, Multivector, PolyFunc, basis_form, bivector_from_matrix,
    bivector_matrix, de_rham_d, form_matrix, formal_inverse, interior,
    matmul, schouten_bracket, sharp, wedge, wedge3_contraction,
)
from .exceptions import CourantError, DiracError, GaugeError, GradeError, NotInvertibleError, TwistError
from .expressions import as_kind
from .reports import Report

logger = logging.getLogger(__name__)

__all__ = [
    'GenSection', 'TwistData', 'DiracSpec', 'pairing', 'twisted_bracket',
    'tau_beta', 'check_dirac', 'check_twisted_poisson',
    'gauge_transform_bivector', 'check_courant_axioms', 'lie_derivative',
    'interior', 'sharp', 'apply_vector',
]


def apply_vector(vector, function):
    """X(f) = i_X df as a PolyFunc."""
    return as_kind(interior(vector, de_rham_d(function)), PolyFunc)


def lie_derivative(vector, form):
    """Cartan formula L_X w = i_X dw + d i_X w."""
    if isinstance(form, PolyFunc):
        return apply_vector(vector, form)
    inner = interior(vector, form)
    result = interior(vector, de_rham_d(form)) + de_rham_d(inner)
    return as_kind(result, DiffForm)


@dataclass(frozen=True)
class GenSection:
    """A section (X, xi) of TM + T*M."""

    X: Multivector
    xi: DiffForm

    def __post_init__(self):
        if self.X.chart != self.xi.chart:
            raise GradeError("Vector and form parts live on different charts")
        X = as_kind(self.X, Multivector)
        xi = as_kind(self.xi, DiffForm)
        if not X.is_homogeneous(0, 1):
            raise GradeError(f"Vector part {X} is not a vector field")
        if not xi.is_homogeneous(1, 0):
            raise GradeError(f"Form part {xi} is not a 1-form")
        object.__setattr__(self, 'X', X)
        object.__setattr__(self, 'xi', xi)

    @classmethod
    def zero(cls, chart, order=None):
        return cls(Multivector.zero(chart, order), DiffForm.zero(chart, order))

    @property
    def chart(self):
        return self.X.chart

    @property
    def order(self):
        return min(self.X.order, self.xi.order)

    @property
    def anchor(self):
        return self.X

    def __add__(self, other):
        return GenSection(self.X + other.X, self.xi + other.xi)

    def __sub__(self, other):
        return GenSection(self.X - other.X, self.xi - other.xi)

    def __neg__(self):
        return GenSection(-self.X, -self.xi)

    def scale(self, function):
        """Multiply both parts by a function (a PolyFunc or a polynomial)."""
        if isinstance(function, PolyFunc):
            return GenSection(wedge(function, self.X), wedge(function, self.xi))
        return GenSection(self.X * function, self.xi * function)

    def is_zero(self):
        return self.X.is_zero() and self.xi.is_zero()

    def __eq__(self, other):
        if not isinstance(other, GenSection):
            return NotImplemented
        return (self - other).is_zero()

    __hash__ = None

    def components(self):
        """Column of 2n coefficients: vector components then form components."""
        n = self.chart.dimension
        vector = [self.X.coefficient((), (i,)) for i in range(n)]
        covector = [self.xi.coefficient((i,), ()) for i in range(n)]
        return vector + covector

    def __str__(self):
        return f"({self.X}, {self.xi})"


@dataclass(frozen=True)
class TwistData:
    """A closed 3-form phi; closedness is checked on construction."""

    phi: DiffForm

    def __post_init__(self):
        phi = as_kind(self.phi, DiffForm)
        if not phi.is_homogeneous(3, 0):
            raise TwistError(f"Twist {phi} is not a 3-form", witness=str(phi))
        differential = de_rham_d(phi)
        if differential:
            raise TwistError("Twist is not closed", witness=str(differential))
        object.__setattr__(self, 'phi', phi)

    @classmethod
    def zero(cls, chart, order=None):
        return cls(DiffForm.zero(chart, order))

    @property
    def chart(self):
        return self.phi.chart

    def shifted(self, beta):
        """The twist phi + d beta."""
        return TwistData(self.phi + de_rham_d(beta))


def pairing(e1, e2):
    """((X1, xi1), (X2, xi2)) = xi1(X2) + xi2(X1)."""
    if e1.chart != e2.chart:
        raise GradeError("Sections live on different charts")
    return as_kind(interior(e2.X, e1.xi) + interior(e1.X, e2.xi), PolyFunc)


def twisted_bracket(e1, e2, tw):
    if e1.chart != e2.chart or e1.chart != tw.chart:
        raise GradeError("Sections and twist live on different charts")
    vector = schouten_bracket(e1.X, e2.X)
    form = (
        lie_derivative(e1.X, e2.xi)
        - interior(e2.X, de_rham_d(e1.xi))
        + interior(e2.X, interior(e1.X, tw.phi))
    )
    return GenSection(vector, form)


def tau_beta(e, beta):
    """(X, xi) -> (X, xi - i_X beta)."""
    beta = as_kind(beta, DiffForm)
    if not beta.is_homogeneous(2, 0):
        raise GradeError(f"{beta} is not a 2-form")
    return GenSection(e.X, e.xi - interior(e.X, beta))


@dataclass
class DiracSpec:
    """A Dirac candidate given by a frame of generators, or as the graph of a bivector."""

    generators: list = None
    graph_of: Multivector = None

    def __post_init__(self):
        if (self.generators is None) == (self.graph_of is None):
            raise DiracError("Give either generators or a bivector")
        if self.graph_of is not None:
            self.generators = graph_generators(self.graph_of)

    @property
    def chart(self):
        return self.generators[0].chart


def graph_generators(pi):
    """The frame (pi~(dx_i), dx_i) of graph(pi)."""
    chart = pi.chart
    return [
        GenSection(sharp(pi, basis_form(chart, (i,), pi.order)), basis_form(chart, (i,), pi.order))
        for i in range(chart.dimension)
    ]


def _frame_minor(matrix, chart, n):
    """Rows of an n x n minor with a nonzero constant determinant at h = 0."""
    h = chart.h
    ring = chart.ring
    domain = ring.to_domain()
    for rows in combinations(range(2 * n), n):
        block = [[matrix[r][c].coeff_wrt(h, 0) for c in range(n)] for r in rows]
        determinant = DomainMatrix(block, (n, n), domain).det()
        if determinant and determinant.is_ground:
            return rows
    return None


def _base_point_rank(matrix, chart, n):
    point = [(chart.gen(i), value) for i, value in enumerate(chart.base_point)]
    point += [(chart.h, 0), (chart.L, 0)]
    values = []
    for row in matrix:
        evaluated = [entry.subs(point) for entry in row]
        values.append([value.LC if value else QQ_I.zero for value in evaluated])
    return DomainMatrix(values, (len(values), n), QQ_I).rank()


def expand_in_frame(section, frame, rows, order):
    """Coefficients f with section = sum_k f_k frame_k, solved on the minor ``rows``."""
    chart = section.chart
    n = len(frame)
    columns = [generator.components() for generator in frame]
    block = [[columns[c][r] for c in range(n)] for r in rows]
    inverse = formal_inverse(block, chart.h, order)
    target = section.components()
    return [entry[0] for entry in matmul(inverse, [[target[r]] for r in rows], chart.h, order)]


def check_dirac(spec, tw, report=None):
    """
    Isotropy and bracket closure of the frame, both as polynomial identities.

    Closure expands every bracket in the frame over polynomial coefficients and
    reports the remainder.
    """
    generators = spec.generators
    chart = generators[0].chart
    n = chart.dimension
    order = min(min(g.order for g in generators), tw.phi.order)
    report = report or Report('check-dirac', order)
    if len(generators) != n:
        raise DiracError(f"Expected {n} generators, got {len(generators)}")
    matrix = [[g.components()[r] for g in generators] for r in range(2 * n)]
    rank = _base_point_rank(matrix, chart, n)
    if rank != n:
        raise DiracError(
            f"Generators are dependent at the base point (rank {rank} < {n})",
            witness=[str(g) for g in generators],
        )
    rows = _frame_minor(matrix, chart, n)
    if rows is None:
        raise DiracError(
            "Generators admit no minor with constant determinant; closure cannot be certified",
            witness=[str(g) for g in generators],
        )
    for i, j in combinations_with_replacement(range(n), 2):
        value = pairing(generators[i], generators[j])
        report.add(f"isotropy/{i}-{j}", value.is_zero(), residual=str(value))
    for i, j in combinations_with_replacement(range(n), 2):
        bracket = twisted_bracket(generators[i], generators[j], tw)
        coefficients = expand_in_frame(bracket, generators, rows, order)
        remainder = bracket
        for k, coefficient in enumerate(coefficients):
            remainder = remainder - generators[k].scale(coefficient)
        report.add(
            f"closure/{i}-{j}", remainder.is_zero(),
            residual=str(remainder), witness=str(bracket),
        )
    logger.info(f"Dirac check on {chart}: passed={report.passed}")
    return report


def twisted_poisson_residual(pi, tw):
    return schouten_bracket(pi, pi) - 2 * wedge3_contraction(pi, tw.phi)


def check_twisted_poisson(pi, tw, report=None):
    """[pi, pi] - 2 ^3 pi~(phi) must vanish identically."""
    if pi.chart != tw.chart:
        raise GradeError("Bivector and twist live on different charts")
    report = report or Report('check-twisted-poisson', min(pi.order, tw.phi.order))
    residual = twisted_poisson_residual(pi, tw)
    report.add('twisted-poisson', residual.is_zero(), residual=str(residual))
    return report


def gauge_transform_bivector(pi, beta):
    """
    The bivector whose graph is tau_beta(graph(pi)).

    With P and Q the antisymmetric matrices of pi and beta this is
    (1 - P Q)^(-1) P, inverted as a series in h.
    """
    pi = as_kind(pi, Multivector)
    beta = as_kind(beta, DiffForm)
    if not pi.is_homogeneous(0, 2) or not beta.is_homogeneous(2, 0):
        raise GradeError("Expected a bivector and a 2-form")
    if pi.chart != beta.chart:
        raise GradeError("Bivector and 2-form live on different charts")
    chart = pi.chart
    order = min(pi.order, beta.order)
    if not pi.is_formal():
        raise CourantError("Only bivectors of order h can be gauge transformed", witness=str(pi))
    P = bivector_matrix(pi)
    Q = form_matrix(beta)
    n, ring = chart.dimension, chart.ring
    PQ = matmul(P, Q, chart.h, order)
    shifted = [[(ring.one if i == j else ring.zero) - PQ[i][j] for j in range(n)] for i in range(n)]
    try:
        inverse = formal_inverse(shifted, chart.h, order)
    except NotInvertibleError as exc:
        raise GaugeError("1 - pi~ beta~ is not invertible at order zero", witness=exc.witness) from exc
    result = bivector_from_matrix(chart, matmul(inverse, P, chart.h, order), order)
    logger.debug(f"Gauge transformed {pi} by {beta}: {result}")
    return result


def _default_functions(chart, order):
    coordinates = [PolyFunc.from_poly(chart, chart.gen(i), order) for i in range(chart.dimension)]
    return coordinates + [wedge(coordinates[0], coordinates[-1])]


def check_courant_axioms(sections, tw, functions=None, report=None):
    """Evaluate the five algebroid axioms on every triple of ``sections``."""
    chart = tw.chart
    order = min([tw.phi.order] + [s.order for s in sections])
    report = report or Report('check-courant', order)
    functions = functions or _default_functions(chart, order)
    bracket = lambda a, b: twisted_bracket(a, b, tw)
    count = len(sections)
    for i, j, k in product(range(count), repeat=3):
        e1, e2, e3 = sections[i], sections[j], sections[k]
        label = f"{i}-{j}-{k}"
        jacobi = bracket(e1, bracket(e2, e3)) - bracket(bracket(e1, e2), e3) - bracket(e2, bracket(e1, e3))
        report.add(f"axiom1/{label}", jacobi.is_zero(), residual=str(jacobi))
        invariance = (
            apply_vector(e1.X, pairing(e2, e3))
            - pairing(bracket(e1, e2), e3)
            - pairing(e2, bracket(e1, e3))
        )
        report.add(f"axiom4/{label}", invariance.is_zero(), residual=str(invariance))
    for i, j in product(range(count), repeat=2):
        e1, e2 = sections[i], sections[j]
        label = f"{i}-{j}"
        anchor = bracket(e1, e2).X - schouten_bracket(e1.X, e2.X)
        report.add(f"axiom2/{label}", anchor.is_zero(), residual=str(anchor))
        square = pairing(e1, bracket(e2, e2)) - pairing(bracket(e1, e2), e2)
        report.add(f"axiom5/{label}", square.is_zero(), residual=str(square))
        for m, function in enumerate(functions):
            leibniz = (
                bracket(e1, e2.scale(function))
                - bracket(e1, e2).scale(function)
                - e2.scale(apply_vector(e1.X, function))
            )
            report.add(f"axiom3/{label}/f{m}", leibniz.is_zero(), residual=str(leibniz))
    logger.info(f"Courant axioms on {count} sections: passed={report.passed}")
    return report
