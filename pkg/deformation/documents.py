"""
Loaders for the JSON job documents.

Every loader raises ``django.core.exceptions.ValidationError`` for malformed
input; the message carries the offending key and the parser's witness.
"""
import json
import logging
from contextlib import contextmanager

from django.core.exceptions import ValidationError

from .algebra import BiGraded, Chart, DiffForm
from .courant import GenSection, TwistData
from .exceptions import DeformationError
from .expressions import parse_field, parse_form, parse_multivector
from .family import TightFamily, constant_family_from_twisted
from .holonomy import Disk2Chain, Path, Tile
from .quantize import (
    DiffOp, StarFamily, effective_order, halve_by_h, quantize_tight_family, star_order2,
)
from .stack import SimplicialComplex, cube_complex

logger = logging.getLogger(__name__)


@contextmanager
def loading(key):
    """Turn library errors raised while reading ``key`` into ValidationError."""
    try:
        yield
    except ValidationError:
        raise
    except DeformationError as exc:
        raise ValidationError(
            f"Invalid {key}: {exc}", code='invalid', params={'witness': exc.witness},
        ) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"Invalid {key}: {exc}", code='invalid') from exc


def read_document(path):
    try:
        with open(path, encoding='utf-8') as handle:
            document = json.load(handle)
    except OSError as exc:
        raise ValidationError(f"Cannot read {path}: {exc}", code='unreadable') from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}", code='malformed') from exc
    if not isinstance(document, dict):
        raise ValidationError("A job document is a JSON object", code='malformed')
    return document


def require(document, *keys):
    missing = [key for key in keys if key not in document]
    if missing:
        raise ValidationError(f"Missing keys: {', '.join(missing)}", code='missing')


def load_chart(data, key='chart'):
    if isinstance(data, (list, tuple)):
        data = {'coordinates': data}
    with loading(key):
        require(data, 'coordinates')
        box = data.get('box')
        return Chart(tuple(data['coordinates']), tuple(tuple(b) for b in box) if box else None)


def load_product_chart(document):
    require(document, 'fibre', 'base')
    return Chart.product(load_chart(document['fibre'], 'fibre'), load_chart(document['base'], 'base'))


def load_region(data, chart):
    """A validity region: a box on the base chart, or None for the whole chart."""
    if data is None:
        return None
    with loading('region'):
        if len(data) != chart.dimension:
            raise ValueError(f"region needs {chart.dimension} intervals")
        return Chart(chart.coordinates, tuple(tuple(b) for b in data))


def document_order(document, order=None):
    return order if order is not None else document.get('order')


def load_twist(document, chart, order=None, key='phi'):
    with loading(key):
        return TwistData(parse_form(document.get(key, '0'), chart, order))


def check_twist_matches(tw, chi):
    """phi may differ from the family twist chi on B only by multiples of L."""
    chart = tw.chart
    difference = tw.phi - chi
    rational = {key: coeff.coeff_wrt(chart.L, 0) for key, coeff in difference.terms.items()}
    rational = DiffForm(chart, {key: coeff for key, coeff in rational.items() if coeff}, difference.order)
    if not rational.is_zero():
        logger.error(f"Twist {tw.phi} disagrees with the family twist {chi}")
        raise ValidationError(
            "Invalid phi: it differs from the family twist chi by more than periods",
            code='invalid', params={'witness': str(rational)},
        )


def load_courant(document, order=None):
    """{"chart", "phi", "sections": [{"X": ..., "xi": ...}]} for the axiom checks."""
    require(document, 'chart', 'sections')
    order = document_order(document, order)
    chart = load_chart(document['chart'])
    tw = load_twist(document, chart, order)
    sections = []
    for n, entry in enumerate(document['sections']):
        with loading(f"sections[{n}]"):
            sections.append(GenSection(
                parse_multivector(entry.get('X', '0'), chart, order),
                parse_form(entry.get('xi', '0'), chart, order),
            ))
    if not sections:
        raise ValidationError("At least one section is needed", code='missing')
    return sections, tw


def load_twisted_poisson(document, order=None):
    require(document, 'chart', 'pi')
    order = document_order(document, order)
    chart = load_chart(document['chart'])
    with loading('pi'):
        pi = parse_multivector(document['pi'], chart, order)
    return pi, load_twist(document, chart, order)


def load_tight_family(document, order=None):
    """
    A Poisson family, either explicit (``sigma`` or ``sigma0``/``sigma1``/``sigma2``
    with ``chi`` on the product chart) or ``twisted``: {"pi", "phi"} on M, which
    is turned into the constant family over B = M.
    """
    order = document_order(document, order)
    if 'twisted' in document:
        twisted = document['twisted']
        pi, tw = load_twisted_poisson(twisted, order)
        with loading('twisted'):
            return constant_family_from_twisted(pi, tw)
    chart = load_product_chart(document)
    with loading('sigma'):
        if 'sigma' in document:
            sigma = parse_field(document['sigma'], chart, order)
        else:
            sigma = BiGraded.zero(chart, order)
            for key in ('sigma0', 'sigma1', 'sigma2'):
                if key in document:
                    sigma = sigma + parse_field(document[key], chart, order)
    with loading('chi'):
        chi = parse_form(document.get('chi', '0'), chart, order)
        family = TightFamily(sigma, chi)
    if document.get('formal') and not family.is_formal():
        raise ValidationError(
            "A formal family needs sigma0 and sigma1 of order h",
            code='not-formal', params={'witness': str(family.sigma0 + family.sigma1)},
        )
    return family


def load_star_family(document, order=None):
    """
    A star family. ``sigma0`` (an O(h) fibre bivector) gives gamma0 = star of
    sigma0 / 2h; ``gamma1`` maps base coordinates to fibre vector fields.
    Documents describing a Poisson family instead are quantized.
    """
    order = document_order(document, order)
    if 'gamma1' not in document and 'gamma2' not in document:
        family = load_tight_family(document, order)
        with loading('family'):
            return quantize_tight_family(family)
    chart = load_product_chart(document)
    with loading('sigma0'):
        sigma0 = parse_multivector(document.get('sigma0', '0'), chart, order)
        star_order = effective_order(sigma0.order)
        star = star_order2(halve_by_h(sigma0, star_order), order=star_order)
    connection = {}
    for name, text in sorted(document.get('gamma1', {}).items()):
        with loading(f"gamma1.{name}"):
            index = chart.index(name)
            vector = parse_multivector(text, chart, order)
            connection[index] = DiffOp.from_vector(vector, star.order)
    with loading('gamma2'):
        gamma2 = DiffForm(chart, parse_form(document.get('gamma2', '0'), chart, order).terms, star.order)
        chi = parse_form(document.get('chi', '0'), chart, order).with_order(star.order)
        return StarFamily(star, connection, gamma2, chi)


def load_path(data, key='path'):
    with loading(key):
        return Path(tuple(tuple(p) for p in data))


def load_disk(data, chart, refinement=0, key='disk'):
    """A tiling of a disk in the base: ``grid``, ``triangle`` or explicit ``tiles``."""
    with loading(key):
        if 'grid' in data:
            grid = data['grid']
            disk = Disk2Chain.grid(
                chart, grid['origin'], grid['u'], grid['v'], grid.get('subdivisions', 1),
            )
        elif 'triangle' in data:
            triangle = data['triangle']
            disk = Disk2Chain.triangle(chart, *triangle['vertices'], level=triangle.get('level', 0))
        else:
            require(data, 'base_point', 'tiles', 'boundary')
            tiles = [
                Tile(tuple(tuple(v) for v in tile['vertices']), load_path(tile['path'], f"{key}.tiles"))
                for tile in data['tiles']
            ]
            return Disk2Chain(chart, tuple(data['base_point']), tiles, load_path(data['boundary']))
        return disk.refined(refinement)


def load_region_simplices(data):
    with loading('homotopy.region'):
        return [tuple(tuple(v) for v in simplex) for simplex in data]


def load_complex(data, chart):
    """{"vertices", "tets"} (faces derived) or {"cube": k, "step": s}."""
    with loading('complex'):
        if 'cube' in data:
            return cube_complex(data['cube'], chart, data.get('step', 1))
        return SimplicialComplex.from_dict(data, chart)


def load_phi_class(data):
    classes = {}
    for key, value in (data or {}).items():
        with loading('phi_class'):
            simplex = tuple(int(v) for v in key.split('-'))
            if len(simplex) != 4:
                raise ValueError(f"{key} is not a tetrahedron")
            classes[simplex] = int(value)
    return classes

