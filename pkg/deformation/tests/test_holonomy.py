from django.test import SimpleTestCase
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from sympy.polys.domains import QQ, QQ_I

from deformation.algebra import Chart, DiffForm, Scalar
from deformation.exceptions import TilingError, TransportError
from deformation.expressions import parse_form, parse_multivector
from deformation.holonomy import (
    Disk2Chain, HolonomyElement, Path, Tile, base_values, check_disk_holonomy, disk_holonomy,
    exponent_poly, homotopy_factor, loop_transport, parallel_transport, tile_element,
)
from deformation.quantize import DiffOp, StarFamily, star_order2

PLANE = Chart(('x', 'y'))
LINE = Chart.product(PLANE, Chart(('t',)))
SQUARE = Chart.product(PLANE, Chart(('t1', 't2')))
CUBE = Chart.product(PLANE, Chart(('t1', 't2', 't3')))
ORIGIN, A, B, C = (0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)


def moyal(chart):
    return star_order2(parse_multivector('Dx^Dy', chart))


def drifting_family():
    """gamma1 = h dt (x) Dx over a line."""
    return StarFamily(
        moyal(LINE), {2: DiffOp.from_vector(parse_multivector('h*Dx', LINE))},
        DiffForm.zero(LINE), DiffForm.zero(LINE),
    )


def curved_family():
    """gamma1 = 2h t1 dt2 (x) Dy with curvature 2-form x dt1^dt2."""
    return StarFamily(
        moyal(SQUARE), {3: DiffOp.from_vector(parse_multivector('2*h*t1*Dy', SQUARE))},
        parse_form('x*dt1^dt2', SQUARE), DiffForm.zero(SQUARE),
    )


def twisted_family(weight='1'):
    """gamma2 = weight * t3 dt1^dt2, so chi = weight * dt1^dt2^dt3."""
    return StarFamily(
        moyal(CUBE), {}, parse_form(f"({weight})*t3*dt1^dt2", CUBE), parse_form(f"({weight})*dt1^dt2^dt3", CUBE),
    )


def cap():
    """The three upper faces of the standard tetrahedron, bounding the same loop as its bottom face."""
    tiles = [
        Tile((ORIGIN, A, C), Path((ORIGIN,))),
        Tile((ORIGIN, C, B), Path((ORIGIN,))),
        Tile((A, B, C), Path((ORIGIN, A))),
    ]
    return Disk2Chain(CUBE.base, ORIGIN, tiles, Path((ORIGIN, A, B, ORIGIN)))


class TransportTests(SimpleTestCase):

    def setUp(self):
        self.family = drifting_family()

    def test_constant_connection_exponentiates(self):
        transport = parallel_transport(self.family, Path(((0,), (1,))))
        h = PLANE.h
        expected = DiffOp(PLANE, {(0, 0): 1, (1, 0): -h, (2, 0): (h ** 2).mul_ground(QQ_I.convert(QQ(1, 2)))}, 2)
        self.assertEqual(transport, expected)

    def test_transport_is_an_algebra_map(self):
        transport = parallel_transport(self.family, Path(((0,), (1,))))
        functions = [PLANE.gen(0), PLANE.gen(1), PLANE.gen(0) * PLANE.gen(1)]
        source = self.family.star_at(base_values(LINE, (0,)))
        target = self.family.star_at(base_values(LINE, (1,)))
        self.assertTrue(transport.is_algebra_map(source, target, functions))

    def test_reversed_path_inverts(self):
        path = Path(((0,), (QQ(1, 3),), (1,)))
        roundtrip = parallel_transport(self.family, path.reversed()).compose(parallel_transport(self.family, path))
        self.assertEqual(roundtrip, DiffOp.identity(PLANE, 2))

    def test_paths_must_stay_in_the_region(self):
        region = Chart(('t',), ((0, QQ(1, 2)),))
        with self.assertRaises(TransportError):
            parallel_transport(self.family, Path(((0,), (1,))), region)

    def test_path_validation(self):
        with self.assertRaises(TransportError):
            Path(())
        with self.assertRaises(TransportError):
            Path(((0,), (1,))) + Path(((0,), (2,)))


class HolonomyElementTests(SimpleTestCase):

    def setUp(self):
        self.star = moyal(PLANE)

    def test_inverse(self):
        x, y, h = PLANE.gen(0), PLANE.gen(1), PLANE.h
        element = HolonomyElement(self.star, x, 1 + h * y)
        self.assertEqual(element * element.inverse(), HolonomyElement.unit(self.star))

    def test_integer_periods_are_invisible(self):
        self.assertEqual(HolonomyElement(self.star, PLANE.L, 1), HolonomyElement.unit(self.star))
        self.assertNotEqual(HolonomyElement(self.star, PLANE.gen(0), 1), HolonomyElement.unit(self.star))

    def test_exponentials_of_commuting_functions_multiply(self):
        x = PLANE.gen(0)
        half = x.mul_ground(QQ_I.convert(QQ(1, 2)))
        product = HolonomyElement(self.star, half, 1) * HolonomyElement(self.star, half, 1)
        self.assertEqual(product, HolonomyElement(self.star, x, 1))


class DiskHolonomyTests(SimpleTestCase):

    def setUp(self):
        self.family = curved_family()
        self.base = SQUARE.base
        self.disk = Disk2Chain.grid(self.base, (0, 0), (1, 0), (0, 1))

    def test_unit_square_holonomy(self):
        star = self.family.star_at(base_values(SQUARE, (0, 0)))
        expected = HolonomyElement(star, PLANE.gen(0), 1)
        self.assertEqual(disk_holonomy(self.family, self.disk), expected)
        self.assertEqual(disk_holonomy(self.family, self.disk.refined(2)), expected)

    def test_loop_transport_shifts_y(self):
        loop = loop_transport(self.family, self.disk)
        self.assertEqual(loop(PLANE.gen(1)), PLANE.gen(1) - 2 * PLANE.h)
        self.assertEqual(loop(PLANE.gen(0)), PLANE.gen(0))

    def test_loop_identity(self):
        report = check_disk_holonomy(self.family, self.disk.refined(1))
        self.assertTrue(report.passed, report.failures())
        self.assertEqual(report.data['holonomy'], {'exponent': 'x', 'tail': '1'})

    def test_triangle_holonomy_moves_with_its_base_point(self):
        first = Disk2Chain.triangle(self.base, (0, 0), (1, 0), (0, 1), level=1)
        second = Disk2Chain.triangle(self.base, (1, 0), (0, 1), (0, 0), level=1)
        transport = parallel_transport(self.family, Path(((0, 0), (1, 0))))
        target = self.family.star_at(base_values(SQUARE, (1, 0)))
        self.assertEqual(
            disk_holonomy(self.family, first).transported(transport, target),
            disk_holonomy(self.family, second),
        )

    def test_holonomy_of_a_union_is_the_product(self):
        lower = Disk2Chain.triangle(self.base, (0, 0), (1, 0), (1, 1))
        upper = Disk2Chain.triangle(self.base, (0, 0), (1, 1), (0, 1))
        union = disk_holonomy(self.family, lower + upper)
        self.assertEqual(union, disk_holonomy(self.family, lower) * disk_holonomy(self.family, upper))
        self.assertEqual(union, disk_holonomy(self.family, self.disk))

    @given(
        st.integers(1, 8),
        st.tuples(st.integers(-2, 2), st.integers(-2, 2)),
        st.tuples(st.integers(-2, 2), st.integers(-2, 2)),
    )
    @settings(max_examples=10, deadline=None)
    def test_grid_holonomy_is_the_enclosed_area(self, subdivisions, u, v):
        area = u[0] * v[1] - u[1] * v[0]
        assume(area != 0)
        disk = Disk2Chain.grid(self.base, (0, 1), u, v, subdivisions)
        star = self.family.star_at(base_values(SQUARE, (0, 1)))
        self.assertEqual(disk_holonomy(self.family, disk), HolonomyElement(star, area * PLANE.gen(0), 1))
        report = check_disk_holonomy(self.family, disk)
        self.assertTrue(report.passed, report.failures())

    def test_periods_in_the_curvature_are_invisible(self):
        family = StarFamily(
            moyal(SQUARE), {3: DiffOp.from_vector(parse_multivector('2*h*t1*Dy', SQUARE))},
            parse_form('(x + L)*dt1^dt2', SQUARE), DiffForm.zero(SQUARE),
        )
        self.assertEqual(disk_holonomy(family, self.disk), disk_holonomy(self.family, self.disk))
        half = StarFamily(moyal(SQUARE), {}, parse_form('1/2*L*dt1^dt2', SQUARE), DiffForm.zero(SQUARE))
        star = half.star_at(base_values(SQUARE, (0, 0)))
        self.assertNotEqual(disk_holonomy(half, self.disk), HolonomyElement.unit(star))

    def test_tile_elements_live_over_the_anchor(self):
        family = StarFamily(
            star_order2(parse_multivector('(1 + t1)*Dx^Dy', SQUARE)), {}, parse_form('x*dt1^dt2', SQUARE),
            DiffForm.zero(SQUARE),
        )
        tile = Tile(((1, 0), (2, 0), (1, 1)), Path(((0, 0), (1, 0))))
        element = tile_element(family, tile)
        self.assertEqual(element.star, family.star_at(base_values(SQUARE, (1, 0))))
        self.assertNotEqual(element.star, family.star_at(base_values(SQUARE, (QQ(4, 3), QQ(1, 3)))))
        self.assertEqual(element, HolonomyElement(element.star, PLANE.gen(0).mul_ground(QQ_I.convert(QQ(1, 2))), 1))

    def test_tiles_must_fill_the_boundary(self):
        with self.assertRaises(TilingError):
            Disk2Chain(self.base, (0, 0), self.disk.tiles, Path(((0, 0), (1, 0), (1, 1), (0, 0))))

    def test_tile_paths_end_at_the_anchor(self):
        with self.assertRaises(TilingError):
            Tile(((1, 0), (2, 0), (1, 1)), Path(((0, 0), (0, 1))))


class HomotopyFactorTests(SimpleTestCase):

    chart = Chart(('t1', 't2', 't3'))
    tetrahedron = [((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1))]

    def test_volume_factor(self):
        factor = homotopy_factor(parse_form('dt1^dt2^dt3', self.chart), self.tetrahedron)
        self.assertEqual(factor[0], Scalar(QQ(1, 6)))

    def test_period_factor_is_trivial(self):
        factor = homotopy_factor(parse_form('6*L*dt1^dt2^dt3', self.chart), self.tetrahedron)
        self.assertTrue(factor[0].exp_is_one())

    def test_disks_with_a_common_boundary_differ_by_the_factor(self):
        for weight in ('1', '1 + 6*L', '-3*L'):
            family = twisted_family(weight)
            bottom = Disk2Chain.triangle(CUBE.base, ORIGIN, A, B)
            factor = homotopy_factor(family.chi, self.tetrahedron, bottom, cap())
            star = family.star_at(base_values(CUBE, ORIGIN))
            self.assertEqual(
                disk_holonomy(family, cap()),
                disk_holonomy(family, bottom) * HolonomyElement(star, exponent_poly(factor, PLANE), 1),
                weight,
            )

    def test_periodic_twist_leaves_the_holonomy_unchanged(self):
        family = twisted_family('6*L')
        bottom = Disk2Chain.triangle(CUBE.base, ORIGIN, A, B)
        self.assertEqual(disk_holonomy(family, cap()), disk_holonomy(family, bottom))

    def test_region_must_bound_the_disks(self):
        disk = Disk2Chain.triangle(self.chart, (0, 0, 0), (1, 0, 0), (0, 1, 0))
        with self.assertRaises(TilingError):
            homotopy_factor(parse_form('dt1^dt2^dt3', self.chart), self.tetrahedron, disk, disk)
