from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from deformation.algebra import Chart, de_rham_d
from deformation.courant import (
    DiracSpec, GenSection, TwistData, check_courant_axioms, check_dirac, check_twisted_poisson,
    gauge_transform_bivector, lie_derivative, pairing, tau_beta, twisted_bracket,
)
from deformation.exceptions import CourantError, TwistError
from deformation.expressions import parse_form, parse_function, parse_multivector

from .strategies import forms, multivectors

CHART = Chart(('x', 'y', 'z'))
NAMES = CHART.coordinates
TWISTS = ('0', 'dx^dy^dz', '(x + 2*y - z)*dx^dy^dz')
SPACETIME = Chart(('x', 'y', 'z', 'w'))
SPACETIME_TWISTS = (
    '0', 'dx^dy^dz', 'x*dx^dy^dz + y*dx^dy^dw', 'dx^dy^dz + z*dy^dz^dw', '(x*y + z)*dx^dy^dz + 2*dx^dz^dw',
)


def section(vector, form, chart=CHART):
    return GenSection(parse_multivector(vector, chart), parse_form(form, chart))


class TwistDataTests(SimpleTestCase):

    def test_open_forms_are_rejected_with_their_differential(self):
        chart = Chart(('x', 'y', 'z', 'w'))
        with self.assertRaises(TwistError) as caught:
            TwistData(parse_form('w*dx^dy^dz', chart))
        self.assertIn('dw', caught.exception.witness)

    def test_shift_adds_the_differential(self):
        tw = TwistData(parse_form('0', CHART)).shifted(parse_form('z*dx^dy', CHART))
        self.assertEqual(tw.phi, parse_form('dx^dy^dz', CHART))


class BracketTests(SimpleTestCase):

    def test_twist_enters_the_bracket(self):
        tw = TwistData(parse_form('dx^dy^dz', CHART))
        bracket = twisted_bracket(section('Dx', '0'), section('Dy', '0'), tw)
        self.assertTrue(bracket.X.is_zero())
        self.assertEqual(bracket.xi, parse_form('dz', CHART))

    def test_pairing(self):
        value = pairing(section('Dx', 'dy'), section('Dy', 'x*dx'))
        self.assertEqual(value, parse_function('1 + x', CHART))

    def test_gauge_action_examples(self):
        moved = tau_beta(section('Dx', '0'), parse_form('dx^dy', CHART))
        self.assertEqual(moved, section('Dx', '-dy'))
        moved = tau_beta(section('Dx', 'dz'), parse_form('2*dx^dy', CHART))
        self.assertEqual(moved, section('Dx', 'dz - 2*dy'))

    def test_fixture_sections_satisfy_the_axioms(self):
        sections = [section('Dx', 'y*dz'), section('x*Dy + h*Dz', 'dx'), section('y*z*Dx', 'x^2*dy - h*dz')]
        report = check_courant_axioms(sections, TwistData(parse_form('dx^dy^dz', CHART)))
        self.assertTrue(report.passed, report.failures())

    @given(
        st.lists(
            st.tuples(multivectors(SPACETIME.coordinates, 1, 3), forms(SPACETIME.coordinates, 1, 3)),
            min_size=3, max_size=3,
        ),
        st.sampled_from(SPACETIME_TWISTS),
    )
    @settings(max_examples=50, deadline=None)
    def test_axioms_hold_for_random_sections(self, triple, twist):
        sections = [section(vector, form, SPACETIME) for vector, form in triple]
        report = check_courant_axioms(sections, TwistData(parse_form(twist, SPACETIME)))
        self.assertTrue(report.passed, report.failures())

    @given(multivectors(NAMES, 1, 1), multivectors(NAMES, 1, 1), forms(NAMES, 2, 1))
    @settings(max_examples=25, deadline=None)
    def test_gauge_action_intertwines_the_twists(self, first, second, beta_text):
        tw = TwistData(parse_form('dx^dy^dz', CHART))
        beta = parse_form(beta_text, CHART)
        e1, e2 = section(first, 'x*dy'), section(second, 'dz')
        shifted = tw.shifted(beta)
        left = tau_beta(twisted_bracket(e1, e2, tw), beta)
        right = twisted_bracket(tau_beta(e1, beta), tau_beta(e2, beta), shifted)
        self.assertEqual(left, right)


class TwistedPoissonTests(SimpleTestCase):

    def test_zero_bivector_passes_for_any_twist(self):
        tw = TwistData(parse_form('x*dx^dy^dz', CHART))
        self.assertTrue(check_twisted_poisson(parse_multivector('0', CHART), tw).passed)

    def test_non_poisson_bivector_fails_with_a_residual(self):
        pi = parse_multivector('x*Dx^Dy + z*Dz^Dx', CHART)
        report = check_twisted_poisson(pi, TwistData.zero(CHART))
        self.assertFalse(report.passed)
        self.assertNotEqual(report.get('twisted-poisson').residual, '0')

    def test_graph_criterion(self):
        tw = TwistData.zero(CHART)
        for text in ('h*Dx^Dy', 'h*x*Dy^Dz', 'x*Dx^Dy + z*Dz^Dx'):
            pi = parse_multivector(text, CHART)
            self.assertEqual(
                check_dirac(DiracSpec(graph_of=pi), tw).passed,
                check_twisted_poisson(pi, tw).passed,
                text,
            )

    @given(multivectors(NAMES, 2, 1), st.booleans(), st.sampled_from(TWISTS))
    @settings(max_examples=25, deadline=None)
    def test_graph_criterion_for_random_bivectors(self, text, formal, twist):
        pi = parse_multivector(f"h*({text})" if formal else text, CHART)
        tw = TwistData(parse_form(twist, CHART))
        self.assertEqual(check_dirac(DiracSpec(graph_of=pi), tw).passed, check_twisted_poisson(pi, tw).passed)

    def test_gauge_transform_moves_the_twist(self):
        pi = parse_multivector('h*Dx^Dy', CHART)
        beta = parse_form('z*dx^dy', CHART)
        moved = gauge_transform_bivector(pi, beta)
        twist = TwistData(de_rham_d(beta))
        self.assertTrue(check_twisted_poisson(moved, twist).passed)

    def test_gauge_transform_needs_an_order_h_bivector(self):
        with self.assertRaises(CourantError):
            gauge_transform_bivector(parse_multivector('Dx^Dy', CHART), parse_form('z*dx^dy', CHART))

    def test_gauge_transforms_compose(self):
        pi = parse_multivector('h*(1 + z)*Dx^Dy + h*Dy^Dz', CHART)
        first, second = parse_form('z*dx^dy', CHART), parse_form('x*dy^dz + dx^dz', CHART)
        self.assertEqual(
            gauge_transform_bivector(gauge_transform_bivector(pi, first), second),
            gauge_transform_bivector(pi, first + second),
        )


class CartanCalculusTests(SimpleTestCase):

    def test_lie_derivative_of_forms(self):
        self.assertEqual(
            lie_derivative(parse_multivector('Dx', CHART), parse_form('x*dy', CHART)),
            parse_form('dy', CHART),
        )
        self.assertEqual(
            lie_derivative(parse_multivector('x*Dx', CHART), parse_form('dx', CHART)),
            parse_form('dx', CHART),
        )

    def test_lie_derivative_of_functions(self):
        self.assertEqual(
            lie_derivative(parse_multivector('y*Dx', CHART), parse_function('x^2', CHART)),
            parse_function('2*x*y', CHART),
        )
