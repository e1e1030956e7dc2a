"""
Descent data of a tight star family over a triangulated chart.

Vertices of a simplicial complex in the base carry the fibre star products,
edges carry parallel transports T_ij, triangles the holonomies a_ijk of the
triangle based at i and tetrahedra the exponents log c_ijkl = -int phi.
Simplices are oriented by their vertex order; stored keys are sorted tuples.
"""
import logging
from dataclasses import dataclass, field
from itertools import combinations, permutations

from sympy.polys.domains import QQ, QQ_I

from .algebra import (
    AffineSimplex, Chart, DiffForm, FormalSeries, Scalar, canonical_indices, integrate_over_simplex,
    monomials, solve_linear_system, to_rational, transplant,
)
from .conf import get_setting
from .exceptions import ChartError, CochainError, ExportError, TilingError
from .expressions import as_kind
from .holonomy import (
    Disk2Chain, HolonomyElement, base_values, disk_holonomy, exponent_poly, parallel_transport,
)
from .reports import Report, comparable, dumps

logger = logging.getLogger(__name__)


def _key(simplex):
    return '-'.join(str(v) for v in simplex)


@dataclass(frozen=True, eq=False)
class SimplicialComplex:
    """
    A geometric simplicial complex of dimension at most 3 in ``chart``.

    ``maximal`` lists the generating simplices; all faces are derived.
    """

    chart: Chart
    vertices: tuple
    maximal: tuple
    simplices: dict = field(init=False, repr=False)

    def __post_init__(self):
        vertices = tuple(tuple(to_rational(x) for x in v) for v in self.vertices)
        for v in vertices:
            if len(v) != self.chart.dimension:
                raise ChartError(f"Vertex {v} does not match {self.chart}")
        if len(set(vertices)) != len(vertices):
            raise TilingError("Repeated vertex coordinates")
        maximal = []
        for simplex in self.maximal:
            simplex = tuple(sorted(int(i) for i in simplex))
            if len(set(simplex)) != len(simplex):
                raise TilingError("Simplex repeats a vertex", witness=list(simplex))
            if not 1 <= len(simplex) <= 4:
                raise TilingError("Simplices have between one and four vertices", witness=list(simplex))
            if any(not 0 <= i < len(vertices) for i in simplex):
                raise TilingError("Simplex refers to a missing vertex", witness=list(simplex))
            try:
                AffineSimplex(self.chart, tuple(vertices[i] for i in simplex))
            except ChartError as exc:
                raise TilingError("Degenerate simplex", witness=list(simplex)) from exc
            maximal.append(simplex)
        faces = {k: set() for k in range(4)}
        faces[0].update((i,) for i in range(len(vertices)))
        for simplex in maximal:
            for size in range(1, len(simplex) + 1):
                faces[size - 1].update(combinations(simplex, size))
        object.__setattr__(self, 'vertices', vertices)
        object.__setattr__(self, 'maximal', tuple(sorted(set(maximal))))
        object.__setattr__(self, 'simplices', {k: sorted(faces[k]) for k in faces})

    @classmethod
    def from_dict(cls, data, chart):
        maximal = [tuple(s) for s in data.get('tets', [])]
        maximal += [tuple(s) for s in data.get('triangles', [])]
        maximal += [tuple(s) for s in data.get('edges', [])]
        return cls(chart, tuple(tuple(v) for v in data['vertices']), tuple(maximal))

    @property
    def dimension(self):
        return max(k for k, found in self.simplices.items() if found)

    def of_dimension(self, k):
        return self.simplices.get(k, [])

    @property
    def edges(self):
        return self.of_dimension(1)

    @property
    def triangles(self):
        return self.of_dimension(2)

    @property
    def tetrahedra(self):
        return self.of_dimension(3)

    def points(self, simplex):
        return tuple(self.vertices[i] for i in simplex)

    def geometric(self, simplex):
        return AffineSimplex(self.chart, self.points(simplex))

    def as_dict(self):
        return {
            'chart': list(self.chart.coordinates),
            'vertices': [[str(x) for x in v] for v in self.vertices],
            'simplices': [list(s) for s in self.maximal],
        }

    def __str__(self):
        counts = ', '.join(f"{len(self.of_dimension(k))} of dim {k}" for k in range(4) if self.of_dimension(k))
        return f"SimplicialComplex({counts})"


def cube_complex(k, chart=None, step=1):
    """Kuhn triangulation of a k x k x k block of cubes: six tetrahedra per cube."""
    k = int(k)
    if k < 1:
        raise TilingError("Need at least one cube per side")
    chart = chart or Chart(('x', 'y', 'z'))
    if chart.dimension != 3:
        raise ChartError(f"Cube complexes live in three dimensions, not {chart}")
    step = to_rational(step)
    side = k + 1

    def index(a, b, c):
        return (a * side + b) * side + c

    vertices = [
        (a * step, b * step, c * step)
        for a in range(side) for b in range(side) for c in range(side)
    ]
    tets = []
    for a in range(k):
        for b in range(k):
            for c in range(k):
                for axes in permutations(range(3)):
                    corner = [a, b, c]
                    chain = [index(*corner)]
                    for axis in axes:
                        corner[axis] += 1
                        chain.append(index(*corner))
                    tets.append(tuple(chain))
    logger.debug(f"Cube complex with {len(tets)} tetrahedra")
    return SimplicialComplex(chart, tuple(vertices), tuple(tets))


@dataclass(frozen=True)
class StarCover:
    """Open stars: S_s is the set of simplices having s as a face."""

    complex: SimplicialComplex
    stars: dict

    def star(self, simplex):
        return self.stars[tuple(sorted(simplex))]

    def vertex_star(self, i):
        return self.stars[(i,)]

    def as_dict(self):
        return {
            _key(v): [_key(s) for s in sorted(self.stars[v])]
            for v in self.complex.of_dimension(0)
        }


def _sup_distance(p, q):
    return max(abs(a - b) for a, b in zip(p, q))


def build_star_cover(complex, radius=None):
    """
    Combinatorial stars of every simplex. With a radius, U_x is the closed box of
    that half-width around x and every star S_s must lie in U_x for x in s.
    """
    everything = [s for k in range(4) for s in complex.of_dimension(k)]
    stars = {}
    for simplex in everything:
        members = set(simplex)
        stars[simplex] = frozenset(s for s in everything if members <= set(s))
    radius = get_setting('FINENESS_RADIUS') if radius is None else radius
    if radius is not None:
        radius = to_rational(radius)
        for simplex, star in stars.items():
            corners = {v for s in star for v in s}
            for x in simplex:
                for v in corners:
                    if _sup_distance(complex.vertices[x], complex.vertices[v]) > radius:
                        logger.error(f"Star of {_key(simplex)} leaves the region around vertex {x}")
                        raise TilingError(
                            "Triangulation is not fine enough for the region",
                            witness={'simplex': list(simplex), 'vertex': v},
                        )
    return StarCover(complex, stars)


# ---------------------------------------------------------------------------
# Cochains
# ---------------------------------------------------------------------------

def _zero_series(order):
    return FormalSeries.from_coefficients([], order, Scalar())


def _as_series(value, order):
    if isinstance(value, FormalSeries):
        if value.order >= order:
            return value.truncate(order)
        return FormalSeries.from_coefficients(value.coefficients, order, Scalar())
    return FormalSeries.from_coefficients([Scalar.coerce(value)], order, Scalar())


class CechCochain:
    """Scalar series attached to the oriented k-simplices of a complex."""

    def __init__(self, complex, degree, values=None, order=None):
        self.complex = complex
        self.degree = degree
        self.order = get_setting('TRUNCATION_ORDER') if order is None else order
        known = set(complex.of_dimension(degree))
        self.values = {}
        for simplex, value in (values or {}).items():
            sign, key = canonical_indices(simplex)
            if key not in known:
                raise CochainError(f"{_key(simplex)} is not a {degree}-simplex of the complex")
            series = _as_series(value, self.order)
            self.values[key] = series if sign > 0 else -series

    @classmethod
    def zero(cls, complex, degree, order=None):
        return cls(complex, degree, {}, order)

    def value(self, simplex):
        """The value on an oriented simplex; odd reorderings flip the sign."""
        sign, key = canonical_indices(simplex)
        if not sign:
            raise CochainError(f"Degenerate simplex {simplex}")
        series = self.values.get(key, _zero_series(self.order))
        return series if sign > 0 else -series

    def coboundary(self):
        """(d c)(v0 .. vk+1) = sum_i (-1)^i c(v0 .. ^vi .. vk+1)."""
        values = {}
        for simplex in self.complex.of_dimension(self.degree + 1):
            total = _zero_series(self.order)
            for i in range(len(simplex)):
                face = self.value(simplex[:i] + simplex[i + 1:])
                total = total + face if i % 2 == 0 else total - face
            if not total.is_zero():
                values[simplex] = total
        return CechCochain(self.complex, self.degree + 1, values, self.order)

    def _combine(self, other, sign):
        if other.complex is not self.complex or other.degree != self.degree:
            raise CochainError("Cochains on different complexes or degrees")
        order = min(self.order, other.order)
        keys = set(self.values) | set(other.values)
        values = {}
        for key in keys:
            value = self.value(key).truncate(order)
            theirs = other.value(key).truncate(order)
            values[key] = value + theirs if sign > 0 else value - theirs
        return CechCochain(self.complex, self.degree, values, order)

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __neg__(self):
        return CechCochain(self.complex, self.degree, {k: -v for k, v in self.values.items()}, self.order)

    def is_zero(self):
        return all(v.is_zero() for v in self.values.values())

    def __eq__(self, other):
        if not isinstance(other, CechCochain):
            return NotImplemented
        return (self - other).is_zero()

    __hash__ = None

    def as_dict(self):
        return {
            _key(k): str(v) for k, v in sorted(self.values.items()) if not v.is_zero()
        }

    def __str__(self):
        return f"CechCochain(degree={self.degree}, {len(self.values)} values)"


def integer_cochain(complex, values):
    """An integer 3-cochain Phi read from {simplex: int}; shifts log c by Phi * L."""
    cochain = {}
    for simplex, value in (values or {}).items():
        rational = to_rational(value)
        if QQ.denom(rational) != 1:
            raise CochainError("Class representatives take integer values", witness={_key(simplex): str(rational)})
        cochain[tuple(simplex)] = Scalar(QQ_I.zero, rational)
    return cochain


def solve_b_cochain(log_c, phi_class=None):
    """
    log b with d(log b) = log c - L * Phi, solved exactly over the cochain complex.

    ``phi_class`` maps tetrahedra to integers. The unknowns are the triangles in
    ``complex.triangles`` order; after reduction to row echelon form every
    non-pivot triangle is set to zero and each pivot triangle reads its value
    off its row. The result depends only on the complex and log c.
    """
    complex, order = log_c.complex, log_c.order
    if log_c.degree != 3:
        raise CochainError("log c is a 3-cochain")
    defect = log_c.coboundary()
    if not defect.is_zero():
        raise CochainError("log c is not a cocycle", witness=defect.as_dict())
    target = log_c - CechCochain(complex, 3, integer_cochain(complex, phi_class), order)
    triangles, tets = complex.triangles, complex.tetrahedra
    if not tets:
        return CechCochain.zero(complex, 2, order)
    column = {t: n for n, t in enumerate(triangles)}
    rows = []
    for tet in tets:
        row = [QQ_I.zero] * len(triangles)
        for i in range(4):
            row[column[tet[:i] + tet[i + 1:]]] += QQ_I.one if i % 2 == 0 else -QQ_I.one
        rows.append(row)
    rhs = []
    for tet in tets:
        series = target.value(tet)
        entries = []
        for k in range(order + 1):
            entries.extend([series[k].rational, series[k].period])
        rhs.append(entries)
    solution = solve_linear_system(rows, rhs)
    if solution is None:
        logger.error("The tetrahedral exponents are not a coboundary for this class")
        raise CochainError(
            "log c - L * Phi is not a coboundary; Phi does not match the class of phi",
            witness=target.as_dict(),
        )
    values = {}
    for n, triangle in enumerate(triangles):
        coefficients = [
            Scalar(solution[2 * k][n], solution[2 * k + 1][n]) for k in range(order + 1)
        ]
        series = FormalSeries(tuple(coefficients), order)
        if not series.is_zero():
            values[triangle] = series
    b = CechCochain(complex, 2, values, order)
    logger.info(f"Solved for the correction cochain on {len(values)} triangles")
    return b


# ---------------------------------------------------------------------------
# Descent data
# ---------------------------------------------------------------------------

class DescentData:
    """
    Transports, triangle holonomies and tetrahedral exponents of a family.

    Elements for every vertex ordering are computed on demand and cached so the
    identities can compare independently computed values.
    """

    def __init__(self, family, complex, cover, log_c, level=0, region=None, b=None, phi_class=None):
        self.family = family
        self.complex = complex
        self.cover = cover
        self.log_c = log_c
        self.level = level
        self.region = region
        self.b = b
        self.phi_class = dict(phi_class or {})
        self._transports = {}
        self._elements = {}
        self._stars = {}

    @property
    def order(self):
        return self.family.order

    @property
    def fibre(self):
        return self.family.chart.fibre

    def star(self, i):
        if i not in self._stars:
            self._stars[i] = self.family.star_at(base_values(self.family.chart, self.complex.vertices[i]))
        return self._stars[i]

    def transport(self, i, j):
        """T_ij from the fibre over vertex i to the fibre over vertex j."""
        if (i, j) not in self._transports:
            path = (self.complex.vertices[i], self.complex.vertices[j])
            self._transports[i, j] = parallel_transport(self.family, path, self.region)
        return self._transports[i, j]

    def raw_element(self, i, j, k):
        """a_ijk: holonomy of the triangle [i, j, k] based at i."""
        if (i, j, k) not in self._elements:
            disk = Disk2Chain.triangle(self.complex.chart, *self.complex.points((i, j, k)), level=self.level)
            self._elements[i, j, k] = disk_holonomy(self.family, disk, self.region)
        return self._elements[i, j, k]

    def element(self, i, j, k):
        """a_ijk, multiplied by exp(log b_ijk) once a correction is applied."""
        a = self.raw_element(i, j, k)
        if self.b is None:
            return a
        return a.times_exp(exponent_poly(self.b.value((i, j, k)), self.fibre))

    def c_exponent(self, simplex):
        return self.log_c.value(simplex)

    @property
    def transports(self):
        return {(i, j): self.transport(i, j) for i, j in self.complex.edges}

    @property
    def elements(self):
        return {t: self.element(*t) for t in self.complex.triangles}

    def corrected(self, b, phi_class=None):
        data = DescentData(
            self.family, self.complex, self.cover, self.log_c, self.level, self.region, b,
            phi_class if phi_class is not None else self.phi_class,
        )
        data._transports = self._transports
        data._elements = self._elements
        data._stars = self._stars
        return data

    def as_dict(self):
        return {
            'complex': self.complex.as_dict(),
            'cover': self.cover.as_dict(),
            'stars': {str(i): self.star(i).as_dict() for (i,) in self.complex.of_dimension(0)},
            'transports': {_key(e): op.as_dict() for e, op in sorted(self.transports.items())},
            'elements': {_key(t): a.as_dict() for t, a in sorted(self.elements.items())},
            'log_c': self.log_c.as_dict(),
            'b': self.b.as_dict() if self.b is not None else None,
            'phi_class': {_key(t): int(v) for t, v in sorted(self.phi_class.items())},
        }


def _phi_on(chart, phi):
    phi = as_kind(phi, DiffForm)
    if phi.chart == chart:
        return phi
    return transplant(phi, chart)


def assemble_descent_data(family, complex, tw, level=0, region=None, cover=None):
    """Transports along edges, triangle holonomies and log c = -int phi on tetrahedra."""
    base = family.chart.base
    if complex.chart.dimension != base.dimension:
        raise ChartError(f"{complex} does not live in the base {base}")
    cover = cover or build_star_cover(complex)
    phi = _phi_on(complex.chart, tw.phi)
    log_c = {}
    for tet in complex.tetrahedra:
        log_c[tet] = -integrate_over_simplex(phi, complex.geometric(tet)).truncate(family.order)
    data = DescentData(family, complex, cover, CechCochain(complex, 3, log_c, family.order), level, region)
    for i, j in complex.edges:
        data.transport(i, j)
    for triangle in complex.triangles:
        data.raw_element(*triangle)
    logger.info(f"Assembled descent data on {complex}")
    return data


def _residual(left, right):
    return {'exponent': left.exponent - right.exponent, 'tail': left.tail - right.tail}


def verify_identities(data, functions=None, report=None):
    """
    T_ij T_ji = 1, a_ijk a_ikj = 1, a_jki = T_ij(a_ijk), T_ki T_jk T_ij = Ad(a_ijk^-1)
    and the pentagon a_ikl a_ijk = c_ijkl a_ijl T_ji(a_jkl). Once b is applied the
    pentagon is checked without c.
    """
    report = report if report is not None else Report('stack-build', data.order)
    fibre = data.fibre
    if functions is None:
        functions = monomials([fibre.gen(i) for i in range(fibre.dimension)], 2)
    for i, j in data.complex.edges:
        roundtrip = data.transport(j, i).compose(data.transport(i, j))
        identity = type(roundtrip).identity(fibre, roundtrip.order)
        report.add(f"transport-inverse/{i}-{j}", roundtrip == identity, roundtrip - identity)
    for i, j, k in data.complex.triangles:
        a = data.element(i, j, k)
        product = a * data.element(i, k, j)
        unit = HolonomyElement.unit(data.star(i))
        report.add(f"element-inverse/{i}-{j}-{k}", product == unit, _residual(product, unit))
        moved = a.transported(data.transport(i, j), data.star(j))
        cyclic = data.element(j, k, i)
        report.add(f"cyclic/{i}-{j}-{k}", moved == cyclic, _residual(moved, cyclic))
        loop = data.transport(k, i).compose(data.transport(j, k)).compose(data.transport(i, j))
        inverse = a.inverse()
        residuals = [loop(f) - inverse.adjoint(f) for f in functions]
        report.add(f"loop/{i}-{j}-{k}", not any(residuals), [r for r in residuals if r])
    for i, j, k, l in data.complex.tetrahedra:
        left = data.element(i, k, l) * data.element(i, j, k)
        right = data.element(i, j, l) * data.element(j, k, l).transported(data.transport(j, i), data.star(i))
        if data.b is None:
            right = right.times_exp(exponent_poly(data.c_exponent((i, j, k, l)), fibre))
        report.add(f"pentagon/{i}-{j}-{k}-{l}", left == right, _residual(left, right))
    if not report.passed:
        logger.warning(f"{len(report.failures())} descent identities failed")
    return report


def export_stack(data, path=None, functions=None):
    """Deterministic JSON of the corrected descent data and its verification report."""
    if data.b is None:
        raise ExportError("Solve for the correction cochain before exporting")
    report = verify_identities(data, functions)
    if not report.passed:
        failed = [check.check_id for check in report.failures()]
        logger.error(f"Refusing to export: {len(failed)} identities fail")
        raise ExportError("Descent data does not satisfy the stack identities", witness=failed)
    family = data.family
    payload = {
        'schema': get_setting('EXPORT_SCHEMA_ID'),
        'order': data.order,
        'fibre': list(family.chart.fibre.coordinates),
        'base': list(family.chart.base.coordinates),
        'tile_level': data.level,
        **data.as_dict(),
        'verification': comparable(report.as_dict()),
    }
    text = dumps(payload)
    if path is not None:
        with open(path, 'w', encoding='utf-8') as handle:
            handle.write(text)
        logger.info(f"Exported descent data to {path}")
    return text
