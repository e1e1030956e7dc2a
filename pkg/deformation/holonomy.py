"""
Parallel transport, holonomies of tiled disks and homotopy factors.

Transport along a straight edge p -> q solves T' = -(d . D)(p + s d) T on
[0, 1] with d = q - p, by Picard iteration in a path parameter. Polylines
compose edge by edge.

Holonomy elements are kept as exp(u) * w with an h-free exponent u and a
tail w; the star product and differential operators act on such elements
through twisted derivatives (d + du)^alpha w.
"""
import logging
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations

from sympy.polys.domains import QQ, QQ_I
from sympy.polys.ring_series import rs_exp, rs_integrate, rs_mul, rs_trunc

from .algebra import (
    AffineSimplex, Chart, DiffForm, Scalar, _accumulate, coerce_poly, extended_ring,
    integrate_over_simplex, integrate_terms, monomials, project, to_rational,
)
from .exceptions import (
    ChartError, NotInvertibleError, ScalarError, TilingError, TransportError,
)
from .expressions import as_kind, format_poly
from .quantize import DiffOp, StarProduct
from .reports import Report

logger = logging.getLogger(__name__)

PATH_PARAMETER = 's'


def _point(point):
    return tuple(to_rational(x) for x in point)


def base_values(chart, point):
    """{base index: value} for a point of the base of ``chart``."""
    point = _point(point)
    if len(point) != len(chart.base_indices):
        raise ChartError(f"Point {point} does not match the base of {chart}")
    return dict(zip(chart.base_indices, point))


@dataclass(frozen=True)
class Path:
    """A polyline in the base, traversed from the first point to the last."""

    points: tuple

    def __post_init__(self):
        points = tuple(_point(p) for p in self.points)
        if not points:
            raise TransportError("A path needs at least one point")
        if len({len(p) for p in points}) != 1:
            raise TransportError("Path points have different dimensions", witness=[str(p) for p in points])
        object.__setattr__(self, 'points', points)

    @classmethod
    def segment(cls, start, end):
        return cls((start, end))

    @property
    def start(self):
        return self.points[0]

    @property
    def end(self):
        return self.points[-1]

    def is_closed(self):
        return self.start == self.end

    def edges(self):
        return [(p, q) for p, q in zip(self.points, self.points[1:]) if p != q]

    def reversed(self):
        return Path(tuple(reversed(self.points)))

    def __add__(self, other):
        if self.end != other.start:
            raise TransportError("Paths do not connect", witness=[str(self.end), str(other.start)])
        return Path(self.points + other.points[1:])

    def __str__(self):
        return ' -> '.join('(' + ', '.join(str(x) for x in p) + ')' for p in self.points)


class TransportOp(DiffOp):
    """A formal differential operator between the fibre algebras over two base points."""

    __slots__ = ()

    def is_algebra_map(self, source, target, functions):
        """T(f *_source g) == T f *_target T g on all pairs of ``functions``."""
        for f in functions:
            for g in functions:
                if self(source(f, g)) != target(self(f), self(g)):
                    return False
        return True


def _parameter_name(chart):
    name = PATH_PARAMETER
    while name in chart.coordinates:
        name += 's'
    return name


def _edge_transport(family, start, end):
    chart, order = family.chart, family.order
    fibre = chart.fibre
    name = _parameter_name(chart)
    path_chart = Chart.product(fibre, Chart((name,)))
    extended = extended_ring(chart.ring, (name,))
    s = extended.gens[-1]
    direction = [b - a for a, b in zip(start, end)]
    replacements = [
        (extended.gens[index], extended.ground_new(QQ_I.convert(start[a])) + s.mul_ground(QQ_I.convert(direction[a])))
        for a, index in enumerate(chart.base_indices)
    ]
    generator = {}
    for index, op in family.gamma1.items():
        step = direction[index - chart.split]
        if not step:
            continue
        for alpha, coeff in op.terms.items():
            pulled = coeff.set_ring(extended).compose(replacements).mul_ground(QQ_I.convert(-step))
            _accumulate(generator, alpha, pulled.set_ring(path_chart.ring))
    connection = DiffOp(path_chart, generator, order)
    identity = DiffOp.identity(path_chart, order)
    if not connection:
        return TransportOp.identity(fibre, order)
    parameter = path_chart.gen(path_chart.dimension - 1)
    current = identity
    for _ in range(order):
        integrand = connection.compose(current)
        current = identity + DiffOp(
            path_chart,
            {alpha: rs_integrate(c, parameter) for alpha, c in integrand.terms.items()},
            order,
        )
    evaluated = current.subs({path_chart.dimension - 1: 1}).restrict(fibre)
    return TransportOp(fibre, evaluated.terms, order)


def parallel_transport(family, path, region=None):
    """T = Pexp(-int gamma1) along a polyline of base points."""
    region = region if region is not None else family.chart.base
    if not isinstance(path, Path):
        path = Path(path)
    for point in path.points:
        if not region.contains(point):
            logger.error(f"Path point {point} leaves {region}")
            raise TransportError(f"Path leaves the validity region {region}", witness=str(path))
    fibre = family.chart.fibre
    result = TransportOp.identity(fibre, family.order)
    for start, end in path.edges():
        result = _edge_transport(family, start, end).compose(result)
    logger.debug(f"Transport along {path}: {result}")
    return result


# ---------------------------------------------------------------------------
# Holonomy elements
# ---------------------------------------------------------------------------

def _twisted_derivative(tail, gradient, gens, alpha, h, prec):
    for i, count in enumerate(alpha):
        for _ in range(count):
            tail = tail.diff(gens[i]) + rs_mul(gradient[i], tail, h, prec)
    return tail


@dataclass(frozen=True, eq=False)
class HolonomyElement:
    """exp(exponent) * tail in the fibre algebra of ``star``."""

    star: StarProduct
    exponent: object
    tail: object = 1

    def __post_init__(self):
        chart = self.star.chart
        ring, h, prec = chart.ring, chart.h, self.star.order + 1
        exponent = coerce_poly(ring, self.exponent)
        tail = coerce_poly(ring, self.tail)
        leading = exponent.coeff_wrt(h, 0)
        rest = exponent - leading
        if rest:
            tail = rs_mul(tail, rs_exp(rest, h, prec), h, prec)
        object.__setattr__(self, 'exponent', leading)
        object.__setattr__(self, 'tail', rs_trunc(tail, h, prec))

    @classmethod
    def unit(cls, star):
        return cls(star, 0, 1)

    @property
    def chart(self):
        return self.star.chart

    @property
    def order(self):
        return self.star.order

    def _gradient(self):
        return [self.exponent.diff(self.chart.gen(i)) for i in self.chart.fibre_indices]

    def __mul__(self, other):
        if not isinstance(other, HolonomyElement):
            other = HolonomyElement(self.star, 0, other)
        if other.chart != self.chart:
            raise ChartError(f"Elements over {self.chart} and {other.chart}")
        chart = self.chart
        h, prec = chart.h, self.order + 1
        gens = [chart.gen(i) for i in chart.fibre_indices]
        left_gradient, right_gradient = self._gradient(), other._gradient()
        tail = rs_mul(self.tail, other.tail, h, prec)
        left, right = {}, {}
        for k, op in enumerate(self.star.operators, start=1):
            if k >= prec:
                break
            for (alpha, beta), coeff in op.terms.items():
                if alpha not in left:
                    left[alpha] = _twisted_derivative(self.tail, left_gradient, gens, alpha, h, prec)
                if beta not in right:
                    right[beta] = _twisted_derivative(other.tail, right_gradient, gens, beta, h, prec)
                if left[alpha] and right[beta]:
                    term = rs_mul(coeff, rs_mul(left[alpha], right[beta], h, prec), h, prec)
                    tail += rs_trunc(term * h ** k, h, prec)
        return HolonomyElement(self.star, self.exponent + other.exponent, tail)

    def times_exp(self, value):
        """exp(value) * self for a central constant, e.g. a tetrahedral exponent."""
        return HolonomyElement(self.star, self.exponent + coerce_poly(self.chart.ring, value), self.tail)

    def inverse(self):
        chart = self.chart
        ring, h, prec = chart.ring, chart.h, self.order + 1
        leading = self.tail.coeff_wrt(h, 0)
        if not leading or not leading.is_ground:
            raise NotInvertibleError("Tail is not an invertible constant at order zero", witness=format_poly(self.tail))
        scale = ring.domain.quo(ring.domain.one, leading.LC)
        nilpotent = self.tail.mul_ground(scale) - ring.one
        approximate = ring.one
        power = ring.one
        for _ in range(self.order):
            power = -rs_mul(power, nilpotent, h, prec)
            approximate += power
        approximate = approximate.mul_ground(scale)
        candidate = approximate
        for _ in range(self.order + 1):
            product_tail = (self * HolonomyElement(self.star, -self.exponent, candidate)).tail
            error = ring.one - product_tail
            if not error:
                break
            candidate += rs_mul(approximate, error, h, prec)
        return HolonomyElement(self.star, -self.exponent, candidate)

    def adjoint(self, f):
        """Ad_a(f) = a * f * a^-1 for a function f."""
        result = self * HolonomyElement(self.star, 0, f) * self.inverse()
        if result.exponent:
            raise ScalarError("Conjugation left a nonzero exponent", witness=format_poly(result.exponent))
        return result.tail

    def transported(self, transport, star):
        """T(exp(u) w) = exp(u) sum_alpha t_alpha (d + du)^alpha w, landing in ``star``."""
        chart = self.chart
        if transport.chart != chart or star.chart != chart:
            raise ChartError("Transport, element and target live over different fibres")
        h, prec = chart.h, min(self.order, transport.order) + 1
        gens = [chart.gen(i) for i in chart.fibre_indices]
        gradient = self._gradient()
        tail = chart.ring.zero
        for alpha, coeff in transport.terms.items():
            derived = _twisted_derivative(self.tail, gradient, gens, alpha, h, prec)
            if derived:
                tail += rs_mul(coeff, derived, h, prec)
        return HolonomyElement(star, self.exponent, tail)

    def __eq__(self, other):
        """Equal up to an exponent difference exp(c) = 1."""
        if not isinstance(other, HolonomyElement):
            return NotImplemented
        if self.chart != other.chart:
            return False
        difference = self.exponent - other.exponent
        if difference:
            try:
                if not Scalar.from_poly(difference).exp_is_one():
                    return False
            except ScalarError:
                return False
        return self.tail == other.tail

    __hash__ = None

    def as_dict(self):
        return {'exponent': format_poly(self.exponent), 'tail': format_poly(self.tail)}

    def __str__(self):
        return f"exp({format_poly(self.exponent)}) * ({format_poly(self.tail)})"


# ---------------------------------------------------------------------------
# Tiled disks
# ---------------------------------------------------------------------------

def _midpoint(p, q):
    return tuple((a + b) / 2 for a, b in zip(p, q))


def _along(origin, u, v, a, b):
    return tuple(o + a * x + b * y for o, x, y in zip(origin, u, v))


@dataclass(frozen=True)
class Tile:
    """An oriented triangle or parallelogram reached from the base point along ``path``."""

    vertices: tuple
    path: Path

    def __post_init__(self):
        vertices = tuple(_point(v) for v in self.vertices)
        if len(vertices) not in (3, 4):
            raise TilingError("Tiles are triangles or parallelograms", witness=[str(v) for v in vertices])
        if self.path.end != vertices[0]:
            raise TilingError("Connecting path does not end at the tile anchor", witness=str(self.path))
        object.__setattr__(self, 'vertices', vertices)

    @property
    def anchor(self):
        return self.vertices[0]

    def triangles(self):
        if len(self.vertices) == 3:
            return [self.vertices]
        a, b, c, d = self.vertices
        return [(a, b, c), (a, c, d)]

    def edges(self):
        cycle = self.vertices + (self.vertices[0],)
        return list(zip(cycle, cycle[1:]))


@dataclass(frozen=True)
class Disk2Chain:
    """
    Tiles of a disk in the base, their connecting paths and the boundary loop.

    ``recipe`` remembers how a constructed tiling was made so it can be refined.
    """

    chart: Chart
    base_point: tuple
    tiles: tuple
    boundary: Path
    recipe: tuple = field(default=None, compare=False)

    def __post_init__(self):
        base_point = _point(self.base_point)
        object.__setattr__(self, 'base_point', base_point)
        object.__setattr__(self, 'tiles', tuple(self.tiles))
        if not self.tiles:
            raise TilingError("A disk needs at least one tile")
        if not self.boundary.is_closed() or self.boundary.start != base_point:
            raise TilingError("Boundary must be a loop at the base point", witness=str(self.boundary))
        for tile in self.tiles:
            if tile.path.start != base_point:
                raise TilingError("Connecting path does not start at the base point", witness=str(tile.path))
            for triangle in tile.triangles():
                try:
                    AffineSimplex(self.chart, triangle)
                except ChartError as exc:
                    raise TilingError("Degenerate tile", witness=[str(v) for v in triangle]) from exc
        self._check_boundary()

    def _check_boundary(self):
        """The tile boundaries add up to the boundary loop, tested on polynomial 1-forms."""
        tile_edges = [edge for tile in self.tiles for edge in tile.edges()]
        for form in _test_forms(self.chart, 1):
            inner = sum((_line_integral(form, edge) for edge in tile_edges), QQ_I.zero)
            outer = sum((_line_integral(form, edge) for edge in self.boundary.edges()), QQ_I.zero)
            if inner != outer:
                raise TilingError("Tiles do not fill the boundary loop", witness=str(self.boundary))

    @classmethod
    def grid(cls, chart, origin, u, v, subdivisions=1):
        """The parallelogram origin + [0,1]u + [0,1]v cut into subdivisions^2 tiles, row by row."""
        origin, u, v = _point(origin), _point(u), _point(v)
        n = int(subdivisions)
        if n < 1:
            raise TilingError("Grid needs at least one subdivision")
        step = QQ(1, n)
        tiles = []
        for row in range(n):
            for col in range(n):
                a, b = col * step, row * step
                corners = (
                    _along(origin, u, v, a, b), _along(origin, u, v, a + step, b),
                    _along(origin, u, v, a + step, b + step), _along(origin, u, v, a, b + step),
                )
                path = Path((origin, _along(origin, u, v, a, 0), corners[0]))
                tiles.append(Tile(corners, path))
        boundary = Path((
            origin, _along(origin, u, v, 1, 0), _along(origin, u, v, 1, 1),
            _along(origin, u, v, 0, 1), origin,
        ))
        return cls(chart, origin, tiles, boundary, ('grid', (origin, u, v), n))

    @classmethod
    def triangle(cls, chart, p0, p1, p2, level=0):
        """The triangle [p0, p1, p2] based at p0, split into 4**level similar triangles."""
        corners = tuple(_point(p) for p in (p0, p1, p2))
        triangles = [corners]
        for _ in range(int(level)):
            finer = []
            for a, b, c in triangles:
                ab, bc, ca = _midpoint(a, b), _midpoint(b, c), _midpoint(c, a)
                finer.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
            triangles = finer
        paths = _spanning_paths(corners[0], triangles)
        tiles = [Tile(t, paths[t[0]]) for t in triangles]
        boundary = Path(corners + (corners[0],))
        return cls(chart, corners[0], tiles, boundary, ('triangle', corners, int(level)))

    def refine(self):
        if self.recipe is None:
            raise TilingError("Only tilings built by grid() or triangle() can be refined")
        kind, corners, size = self.recipe
        if kind == 'grid':
            return Disk2Chain.grid(self.chart, *corners, subdivisions=2 * size)
        return Disk2Chain.triangle(self.chart, *corners, level=size + 1)

    def refined(self, times):
        disk = self
        for _ in range(times):
            disk = disk.refine()
        return disk

    def __add__(self, other):
        """The union of two tilings sharing a base point; the boundary is taken from the loops."""
        if self.base_point != other.base_point:
            raise TilingError("Disks must share their base point")
        return Disk2Chain(self.chart, self.base_point, self.tiles + other.tiles, self.boundary + other.boundary)

    def simplices(self):
        """Oriented 2-simplices covering the disk."""
        return [triangle for tile in self.tiles for triangle in tile.triangles()]


def _spanning_paths(root, triangles):
    """Breadth-first paths along triangle edges from ``root`` to every vertex."""
    neighbours = {}
    for triangle in triangles:
        for p, q in combinations(triangle, 2):
            neighbours.setdefault(p, set()).add(q)
            neighbours.setdefault(q, set()).add(p)
    paths = {root: Path((root,))}
    queue = deque([root])
    while queue:
        current = queue.popleft()
        for nxt in sorted(neighbours.get(current, ())):
            if nxt not in paths:
                paths[nxt] = Path(paths[current].points + (nxt,))
                queue.append(nxt)
    return paths


def _test_forms(chart, degree):
    gens = [chart.gen(i) for i in range(chart.dimension)]
    coefficients = [chart.ring.one] + monomials(gens, 2)
    forms = []
    for indices in combinations(range(chart.dimension), degree):
        for coeff in coefficients:
            forms.append(DiffForm(chart, {(indices, ()): coeff}, 0))
    return forms


def _line_integral(form, edge):
    terms = integrate_terms(form, edge, tuple(range(form.chart.dimension)))
    value = terms.get(((), ()), form.chart.ring.zero)
    return value.LC if value else QQ_I.zero


def _surface_integral(form, triangle):
    terms = integrate_terms(form, triangle, tuple(range(form.chart.dimension)))
    value = terms.get(((), ()), form.chart.ring.zero)
    return value.LC if value else QQ_I.zero


def tile_element(family, tile):
    """
    exp(int_tile gamma2) in the fibre over the tile anchor.

    The integral runs over the whole tile. The element is formed in the star
    algebra at the anchor, where the connecting path of the tile ends, so no
    midpoint evaluation enters a holonomy.
    """
    chart, fibre = family.chart, family.chart.fibre
    exponent = chart.ring.zero
    for triangle in tile.triangles():
        terms = integrate_terms(family.gamma2, triangle, chart.base_indices)
        exponent += terms.get(((), ()), chart.ring.zero)
    star = family.star_at(base_values(chart, tile.anchor))
    return HolonomyElement(star, exponent.set_ring(fibre.ring), 1)


def disk_holonomy(family, disk, region=None):
    """The product, in tile order, of the tile elements transported back to the base point."""
    chart = family.chart
    star = family.star_at(base_values(chart, disk.base_point))
    result = HolonomyElement.unit(star)
    for tile in disk.tiles:
        transport = parallel_transport(family, tile.path.reversed(), region)
        result = result * tile_element(family, tile).transported(transport, star)
    logger.info(f"Disk holonomy over {len(disk.tiles)} tiles: {result}")
    return result


def loop_transport(family, disk, region=None):
    return parallel_transport(family, disk.boundary, region)


def check_disk_holonomy(family, disk, functions=None, report=None, region=None):
    """Compare Ad(a^-1) with the transport around the boundary loop."""
    chart = family.chart
    fibre = chart.fibre
    report = report if report is not None else Report('holonomy', family.order)
    if functions is None:
        functions = monomials([fibre.gen(i) for i in range(fibre.dimension)], 2)
    element = disk_holonomy(family, disk, region)
    loop = loop_transport(family, disk, region)
    inverse = element.inverse()
    for i, f in enumerate(functions):
        f = coerce_poly(fibre.ring, f)
        residual = loop(f) - inverse.adjoint(f)
        report.add(f"loop/{i}", not residual, residual)
    report.data['holonomy'] = element.as_dict()
    report.data['loop_transport'] = loop.as_dict()
    return report


# ---------------------------------------------------------------------------
# Homotopies between disks
# ---------------------------------------------------------------------------

def _region_simplices(chart, region):
    simplices = []
    for entry in region:
        simplex = entry if isinstance(entry, AffineSimplex) else AffineSimplex(chart, entry)
        if simplex.dimension != 3:
            raise TilingError("Homotopy regions are made of 3-simplices", witness=[str(v) for v in simplex.vertices])
        simplices.append(simplex)
    if not simplices:
        raise TilingError("Empty homotopy region")
    return simplices


def _check_region_boundary(chart, simplices, disk, other):
    """The boundary of the region must be other - disk, tested on polynomial 2-forms."""
    for form in _test_forms(chart, 2):
        region_side = QQ_I.zero
        for simplex in simplices:
            for sign, face in simplex.boundary():
                value = _surface_integral(form, face.vertices)
                region_side += value if sign > 0 else -value
        disk_side = QQ_I.zero
        for triangle in other.simplices():
            disk_side += _surface_integral(form, triangle)
        for triangle in disk.simplices():
            disk_side -= _surface_integral(form, triangle)
        if region_side != disk_side:
            raise TilingError(
                "Region boundary does not match the two disks",
                witness={'form': str(form), 'region': str(region_side), 'disks': str(disk_side)},
            )


def homotopy_factor(chi, region, disk=None, other=None):
    """
    Exponent of the central factor exp(int_region chi) relating the holonomies
    of two disks with a common boundary: a_other = a_disk * exp(factor).
    """
    chi = as_kind(chi, DiffForm)
    base = chi.chart.base if chi.chart.is_product else chi.chart
    chi = project(chi, base)
    if not chi.is_homogeneous(3, 0):
        raise TilingError("The homotopy factor integrates a 3-form", witness=str(chi))
    simplices = _region_simplices(base, region)
    if disk is not None and other is not None:
        _check_region_boundary(base, simplices, disk, other)
    total = None
    for simplex in simplices:
        value = integrate_over_simplex(chi, simplex)
        total = value if total is None else total + value
    logger.info(f"Homotopy factor exponent {total}")
    return total


def exponent_poly(series, chart):
    """A series of Scalars as a polynomial on ``chart``."""
    ring = chart.ring
    return sum(
        (coefficient.to_poly(ring) * chart.h ** k for k, coefficient in enumerate(series.coefficients)),
        ring.zero,
    )
