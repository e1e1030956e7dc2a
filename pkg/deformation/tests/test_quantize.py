from itertools import product

from django.test import SimpleTestCase, override_settings
from sympy.polys.domains import QQ, QQ_I

from deformation.algebra import Chart, DiffForm, monomials
from deformation.courant import TwistData
from deformation.exceptions import FamilyError, GradeError, QuantizationError
from deformation.expressions import parse_field, parse_form, parse_function, parse_multivector
from deformation.family import InnerParam, TightFamily, constant_family_from_twisted, outer_transform
from deformation.quantize import (
    DiffOp, StarFamily, check_star_family, compare_inner_variations, default_test_functions,
    outer_transform_star, quantize_tight_family, star_order2,
)

PLANE = Chart(('x', 'y'))
CHART = Chart.product(PLANE, Chart(('t',)))


def tight_fixture():
    return TightFamily(parse_field('h*(x + h*t)*Dx^Dy - h*dt^Dx', CHART), parse_form('0', CHART))


class StarProductTests(SimpleTestCase):

    def setUp(self):
        self.star = star_order2(parse_multivector('Dx^Dy', PLANE))
        self.x, self.y = PLANE.gen(0), PLANE.gen(1)

    def test_moyal_commutator(self):
        self.assertEqual(self.star.commutator(self.x, self.y), 2 * PLANE.h)

    def test_moyal_second_order_weight(self):
        self.assertEqual(self.star.weights[0], QQ_I.convert(QQ(1, 2)))

    def test_moyal_is_associative_on_all_low_degree_monomials(self):
        functions = [PLANE.ring.one] + monomials([self.x, self.y], 4)
        for f, g, k in product(functions, repeat=3):
            self.assertFalse(self.star.associator(f, g, k), (f, g, k))

    def test_linear_bivector_is_associative(self):
        star = star_order2(parse_multivector('x*Dx^Dy', PLANE))
        functions = monomials([self.x, self.y], 3)
        for f, g, k in product(functions, repeat=3):
            self.assertFalse(star.associator(f, g, k), (f, g, k))

    def test_constants_are_units(self):
        for f in monomials([self.x, self.y], 3):
            self.assertEqual(self.star(1, f), f)
            self.assertEqual(self.star(f, 1), f)

    def test_non_poisson_bivectors_are_refused(self):
        chart = Chart(('x', 'y', 'z'))
        with self.assertRaises(QuantizationError):
            star_order2(parse_multivector('x*Dx^Dy + z*Dz^Dx', chart))

    def test_only_bivectors_are_quantized(self):
        with self.assertRaises(GradeError):
            star_order2(parse_multivector('Dx', PLANE))

    def test_orders_above_two_are_clamped(self):
        with self.assertLogs('deformation.quantize', 'WARNING'):
            star = star_order2(parse_multivector('Dx^Dy', PLANE), order=4)
        self.assertEqual(star.order, 2)

    @override_settings(DEFORMATION={'ASSOCIATIVITY_SOLVE_DEGREE': 0})
    def test_unsolved_second_order_is_caught_by_the_associativity_check(self):
        with self.assertRaises(QuantizationError) as caught:
            star_order2(parse_multivector('Dx^Dy', PLANE))
        self.assertIn('associator', caught.exception.witness)

    @override_settings(DEFORMATION={'ASSOCIATIVITY_CHECK_DEGREE': 4})
    def test_quartic_associativity_check_accepts_moyal(self):
        star = star_order2(parse_multivector('Dx^Dy', PLANE))
        self.assertEqual(star.order, 2)


class StarFamilyTests(SimpleTestCase):

    def test_quantized_tight_fixture_passes(self):
        family = quantize_tight_family(tight_fixture())
        report = check_star_family(family, default_test_functions(family.chart, 2), degree=2)
        self.assertTrue(report.passed, [c.check_id for c in report.failures()])
        self.assertEqual(family.connection(2), DiffOp.from_vector(parse_multivector('-h*Dx', CHART)))

    def test_default_test_functions_are_used_without_an_explicit_list(self):
        report = check_star_family(quantize_tight_family(tight_fixture()), degree=2)
        self.assertTrue(report.passed, [c.check_id for c in report.failures()])

    def test_parsed_and_polynomial_test_functions_mix(self):
        family = quantize_tight_family(tight_fixture())
        testfns = [parse_function('x*y + t', CHART)] + default_test_functions(CHART, 1)
        report = check_star_family(family, testfns, degree=2)
        self.assertTrue(report.passed, [c.check_id for c in report.failures()])

    def test_non_formal_families_are_refused(self):
        family = TightFamily(parse_field('Dx^Dy', CHART), parse_form('0', CHART))
        with self.assertRaises(QuantizationError):
            quantize_tight_family(family)

    def test_non_parallel_connection_fails_with_a_localized_witness(self):
        star = star_order2(parse_multivector('Dx^Dy', CHART))
        family = StarFamily(
            star, {2: DiffOp.from_vector(parse_multivector('h*x*Dx', CHART))},
            DiffForm.zero(CHART), DiffForm.zero(CHART),
        )
        report = check_star_family(family, default_test_functions(CHART, 2), degree=2)
        self.assertFalse(report.passed)
        self.assertTrue(all(c.check_id.startswith('parallel/t/') for c in report.failures()))

    def test_connection_must_be_order_h(self):
        star = star_order2(parse_multivector('Dx^Dy', CHART))
        with self.assertRaises(FamilyError):
            StarFamily(star, {2: DiffOp.from_vector(parse_multivector('Dx', CHART))},
                       DiffForm.zero(CHART), DiffForm.zero(CHART))

    def test_outer_transformation_commutes_with_quantization(self):
        family = constant_family_from_twisted(parse_multivector('h*Dx^Dy', PLANE), TwistData.zero(PLANE))
        beta = parse_form('x_b*dx_b^dy_b', family.chart)
        self.assertEqual(
            quantize_tight_family(outer_transform(family, beta)),
            outer_transform_star(quantize_tight_family(family), beta),
        )

    def test_inner_variation_agrees_with_the_poisson_family(self):
        poisson = tight_fixture()
        alpha = InnerParam.build(CHART, vector=parse_multivector('h*Dy', CHART), form=parse_form('t*dt', CHART))
        report = compare_inner_variations(
            poisson, quantize_tight_family(poisson), alpha, default_test_functions(CHART, 2),
        )
        self.assertTrue(report.passed, [c.check_id for c in report.failures()])
        self.assertTrue(report.get('inner/curvature').passed)
