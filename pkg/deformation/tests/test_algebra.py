from functools import reduce

from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st
from sympy.polys.domains import QQ

from deformation.algebra import (
    AffineSimplex, Chart, FormalSeries, Scalar, de_rham_d, integrate_over_simplex, interior, poincare_homotopy,
    schouten_bracket, sharp, wedge3_contraction,
)
from deformation.exceptions import ChartError, ExpressionError, ScalarError
from deformation.expressions import (
    parse_field, parse_form, parse_function, parse_multivector, parse_scalar,
)

from .strategies import forms, multivectors, polynomials

CHART = Chart(('x', 'y', 'z'))
NAMES = CHART.coordinates
STANDARD_TETRAHEDRON = ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1))
TRIANGLE = ((0, 0, 0), (2, 0, 1), (0, 1, 3))
TETRAHEDRON = ((0, 0, 0), (2, 1, 0), (0, 1, 1), (1, 0, 3))
SPACETIME = Chart(('x', 'y', 'z', 'w'))
COEFFICIENTS = st.lists(
    st.fractions(max_denominator=5).map(lambda q: QQ(q.numerator, q.denominator)), min_size=3, max_size=3,
)


def boundary_integral(omega, simplex):
    return reduce(
        lambda total, face: total + face[0] * integrate_over_simplex(omega, face[1]),
        simplex.boundary()[1:],
        simplex.boundary()[0][0] * integrate_over_simplex(omega, simplex.boundary()[0][1]),
    )


def series(coefficients, constant=0):
    return FormalSeries(tuple(Scalar(c) for c in [constant] + coefficients), len(coefficients))


class ScalarTests(SimpleTestCase):

    def test_integer_periods_exponentiate_to_one(self):
        self.assertTrue(Scalar(0, 3).exp_is_one())
        self.assertTrue(Scalar(0, -1).exp_is_one())
        self.assertTrue(Scalar().exp_is_one())

    def test_fractional_periods_and_rationals_do_not(self):
        self.assertFalse(Scalar(0, QQ(1, 2)).exp_is_one())
        self.assertFalse(Scalar(1, 0).exp_is_one())

    def test_products_of_periods_are_rejected(self):
        with self.assertRaises(ScalarError):
            Scalar(0, 1) * Scalar(0, 1)

    def test_parse_scalar(self):
        self.assertEqual(parse_scalar('-1/6*L'), Scalar(0, QQ(-1, 6)))
        with self.assertRaises(ExpressionError):
            parse_scalar('x + 1')


class ChartTests(SimpleTestCase):

    def test_reserved_and_clashing_names(self):
        for names in (('h',), ('L', 'x'), ('dx',), ('x', 'x')):
            with self.assertRaises(ChartError):
                Chart(names)

    def test_product_keeps_fibre_first(self):
        chart = Chart.product(Chart(('x', 'y')), Chart(('t',)))
        self.assertEqual(chart.fibre.coordinates, ('x', 'y'))
        self.assertEqual(chart.base.coordinates, ('t',))
        self.assertEqual(chart.base_indices, (2,))

    def test_box_membership(self):
        chart = Chart(('t',), ((0, 1),))
        self.assertTrue(chart.contains((QQ(1, 2),)))
        self.assertFalse(chart.contains((2,)))


class CalculusTests(SimpleTestCase):

    def test_schouten_bracket_of_vector_fields_is_the_lie_bracket(self):
        bracket = schouten_bracket(parse_multivector('Dx', CHART), parse_multivector('x*Dy', CHART))
        self.assertEqual(bracket, parse_multivector('Dy', CHART))

    def test_constant_bivector_is_poisson(self):
        pi = parse_multivector('Dx^Dy + 3*Dy^Dz', CHART)
        self.assertTrue(schouten_bracket(pi, pi).is_zero())

    def test_exterior_derivative_of_a_function(self):
        self.assertEqual(
            de_rham_d(parse_function('x^2*y', CHART)),
            parse_form('2*x*y*dx + x^2*dy', CHART),
        )

    @given(forms(NAMES, 1))
    @settings(max_examples=25, deadline=None)
    def test_d_squared_vanishes(self, text):
        omega = parse_form(text, CHART)
        self.assertTrue(de_rham_d(de_rham_d(omega)).is_zero())

    @given(forms(SPACETIME.coordinates, 2))
    @settings(max_examples=25, deadline=None)
    def test_d_squared_vanishes_on_two_forms(self, text):
        omega = parse_form(text, SPACETIME)
        self.assertTrue(de_rham_d(de_rham_d(omega)).is_zero())

    @given(multivectors(NAMES, 1), multivectors(NAMES, 1), multivectors(NAMES, 2, 1))
    @settings(max_examples=25, deadline=None)
    def test_schouten_bracket_satisfies_graded_jacobi(self, first, second, third):
        X, Y = parse_multivector(first, CHART), parse_multivector(second, CHART)
        pi = parse_multivector(third, CHART)
        self.assertEqual(
            schouten_bracket(X, schouten_bracket(Y, pi)),
            schouten_bracket(schouten_bracket(X, Y), pi) + schouten_bracket(Y, schouten_bracket(X, pi)),
        )
        self.assertEqual(
            schouten_bracket(pi, schouten_bracket(X, Y)),
            schouten_bracket(schouten_bracket(pi, X), Y) + schouten_bracket(X, schouten_bracket(pi, Y)),
        )

    @given(forms(NAMES, 1))
    @settings(max_examples=25, deadline=None)
    def test_homotopy_formula(self, text):
        omega = parse_form(text, CHART)
        restored = de_rham_d(poincare_homotopy(omega)) + poincare_homotopy(de_rham_d(omega))
        self.assertEqual(restored, omega)

    def test_interior_product(self):
        area = parse_form('dx^dy', CHART)
        self.assertEqual(interior(parse_multivector('Dx', CHART), area), parse_form('dy', CHART))
        self.assertEqual(interior(parse_multivector('Dy', CHART), area), parse_form('-dx', CHART))

    def test_sharp(self):
        pi = parse_multivector('x*Dx^Dy', CHART)
        self.assertEqual(sharp(pi, parse_form('dx', CHART)), parse_multivector('x*Dy', CHART))
        self.assertEqual(sharp(pi, parse_form('dy', CHART)), parse_multivector('-x*Dx', CHART))

    def test_wedge3_contraction(self):
        chart = Chart(('x', 'y', 'z', 'w'))
        pi = parse_multivector('Dx^Dy + Dz^Dw', chart)
        trivector = wedge3_contraction(pi, parse_form('dx^dy^dz', chart))
        self.assertEqual(trivector, parse_multivector('Dx^Dy^Dw', chart))
        planar = wedge3_contraction(parse_multivector('Dx^Dy', CHART), parse_form('dx^dy^dz', CHART))
        self.assertTrue(planar.is_zero())


class IntegrationTests(SimpleTestCase):

    def test_standard_tetrahedron_volume(self):
        value = integrate_over_simplex(
            parse_form('6*L*dx^dy^dz', CHART), AffineSimplex(CHART, STANDARD_TETRAHEDRON),
        )
        self.assertEqual(value[0], Scalar(0, 1))

    def test_orientation_flips_the_sign(self):
        phi = parse_form('dx^dy^dz', CHART)
        simplex = AffineSimplex(CHART, STANDARD_TETRAHEDRON)
        self.assertEqual(integrate_over_simplex(phi, simplex.reversed())[0], Scalar(QQ(-1, 6)))

    def test_triangle_area(self):
        triangle = AffineSimplex(CHART, ((0, 0, 0), (1, 0, 0), (0, 1, 0)))
        self.assertEqual(integrate_over_simplex(parse_form('dx^dy', CHART), triangle)[0], Scalar(QQ(1, 2)))

    def test_degenerate_simplex_is_rejected(self):
        with self.assertRaises(ChartError):
            AffineSimplex(CHART, ((0, 0, 0), (1, 1, 1), (2, 2, 2)))

    @given(forms(NAMES, 1))
    @settings(max_examples=25, deadline=None)
    def test_stokes_on_a_triangle(self, text):
        omega = parse_form(text, CHART)
        triangle = AffineSimplex(CHART, TRIANGLE)
        self.assertEqual(boundary_integral(omega, triangle), integrate_over_simplex(de_rham_d(omega), triangle))

    @given(forms(NAMES, 2))
    @settings(max_examples=25, deadline=None)
    def test_stokes_on_a_tetrahedron(self, text):
        omega = parse_form(text, CHART)
        tetrahedron = AffineSimplex(CHART, TETRAHEDRON)
        self.assertEqual(
            boundary_integral(omega, tetrahedron), integrate_over_simplex(de_rham_d(omega), tetrahedron),
        )


class SeriesTests(SimpleTestCase):

    @given(COEFFICIENTS, COEFFICIENTS)
    @settings(max_examples=25, deadline=None)
    def test_exp_turns_sums_into_products(self, first, second):
        a, b = series(first), series(second)
        self.assertEqual((a + b).exp(), a.exp() * b.exp())

    @given(COEFFICIENTS, COEFFICIENTS)
    @settings(max_examples=25, deadline=None)
    def test_log_turns_products_into_sums(self, first, second):
        a, b = series(first, 1), series(second, 1)
        self.assertEqual((a * b).log(), a.log() + b.log())

    @given(COEFFICIENTS)
    @settings(max_examples=25, deadline=None)
    def test_log_inverts_exp(self, first):
        a = series(first)
        self.assertEqual(a.exp().log(), a)

    def test_exp_of_h(self):
        self.assertEqual(series([1, 0, 0]).exp(), series([1, QQ(1, 2), QQ(1, 6)], 1))

    def test_domains_are_checked(self):
        with self.assertRaises(ValueError):
            series([1, 0], 1).exp()
        with self.assertRaises(ValueError):
            series([1, 0], 2).log()


class ExpressionTests(SimpleTestCase):

    @given(polynomials(NAMES), forms(NAMES, 2))
    @settings(max_examples=25, deadline=None)
    def test_printer_and_parser_round_trip(self, function, form):
        for text in (function, form):
            field = parse_field(text, CHART)
            self.assertEqual(parse_field(str(field), CHART), field)

    def test_unknown_symbols_are_reported(self):
        with self.assertRaises(ExpressionError) as caught:
            parse_field('x + q', CHART)
        self.assertEqual(caught.exception.witness, 'x + q')

    def test_division_by_a_coordinate_is_rejected(self):
        with self.assertRaises(ExpressionError):
            parse_field('1/x', CHART)

    def test_power_and_wedge(self):
        self.assertEqual(parse_field('x^2', CHART), parse_field('x*x', CHART))
        self.assertEqual(parse_form('dx^dy', CHART), -parse_form('dy^dx', CHART))
