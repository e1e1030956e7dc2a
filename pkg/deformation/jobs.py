"""
Job dispatch for the command-line surface.

``run`` returns an exit code with the report: 0 when every check passes, 1
for a failed verification or a solver error, 2 for unreadable or malformed
input.
"""
import logging
import os
from dataclasses import dataclass

from django.core.exceptions import ValidationError

from . import documents
from .algebra import project
from .conf import get_setting
from .courant import TwistData, check_courant_axioms, check_twisted_poisson
from .exceptions import DeformationError
from .family import DEFECT_BIDEGREES
from .holonomy import (
    base_values, check_disk_holonomy, disk_holonomy, exponent_poly, homotopy_factor,
    parallel_transport,
)
from .quantize import check_star_family, default_test_functions, quantize_tight_family
from .reports import Report, digest
from .stack import assemble_descent_data, build_star_cover, export_stack, solve_b_cochain, verify_identities

logger = logging.getLogger(__name__)

COMMANDS = (
    'check-courant', 'check-twisted-poisson', 'check-mc', 'quantize',
    'transport', 'holonomy', 'stack-build',
)

EXIT_PASSED, EXIT_FAILED, EXIT_INVALID = 0, 1, 2


@dataclass
class JobSpec:
    command: str
    input: str
    order: int = None
    degree: int = None
    refinement: int = None
    region: list = None
    export: str = None


def _functions(chart, job):
    return default_test_functions(chart, job.degree if job.degree is not None else 2)


def check_courant(document, job, report):
    sections, tw = documents.load_courant(document, job.order)
    return check_courant_axioms(sections, tw, report=report)


def check_twisted(document, job, report):
    pi, tw = documents.load_twisted_poisson(document, job.order)
    return check_twisted_poisson(pi, tw, report=report)


def check_mc(document, job, report):
    family = documents.load_tight_family(document, job.order)
    defect = family.defect()
    for p, q in DEFECT_BIDEGREES:
        component = defect.component(p, q)
        report.add(f"mc/{p}-{q}", component.is_zero(), str(component))
    report.data['family'] = str(family.sigma)
    return report


def quantize(document, job, report):
    family = documents.load_tight_family(document, job.order)
    star_family = quantize_tight_family(family)
    degree = job.degree if job.degree is not None else get_setting('TEST_MONOMIAL_DEGREE')
    check_star_family(star_family, default_test_functions(star_family.chart, degree), report, degree)
    report.data['star_family'] = star_family.as_dict()
    return report


def transport(document, job, report):
    family = documents.load_star_family(document, job.order)
    documents.require(document, 'path')
    path = documents.load_path(document['path'])
    region = documents.load_region(job.region or document.get('region'), family.chart.base)
    forward = parallel_transport(family, path, region)
    backward = parallel_transport(family, path.reversed(), region)
    chart = family.chart
    source = family.star_at(base_values(chart, path.start))
    target = family.star_at(base_values(chart, path.end))
    functions = _functions(forward.chart, job)
    report.add('transport/algebra-map', forward.is_algebra_map(source, target, functions))
    roundtrip = backward.compose(forward)
    report.add('transport/inverse', roundtrip == type(roundtrip).identity(roundtrip.chart, roundtrip.order), roundtrip)
    report.data['transport'] = forward.as_dict()
    return report


def holonomy(document, job, report):
    family = documents.load_star_family(document, job.order)
    documents.require(document, 'disk')
    base = family.chart.base
    refinement = job.refinement if job.refinement is not None else 0
    disk = documents.load_disk(document['disk'], base, refinement)
    region = documents.load_region(job.region or document.get('region'), base)
    functions = _functions(family.chart.fibre, job)
    check_disk_holonomy(family, disk, functions, report, region)
    if 'homotopy' in document:
        homotopy = document['homotopy']
        documents.require(homotopy, 'region', 'other')
        other = documents.load_disk(homotopy['other'], base, refinement, key='homotopy.other')
        simplices = documents.load_region_simplices(homotopy['region'])
        factor = homotopy_factor(family.chi, simplices, disk, other)
        expected = disk_holonomy(family, disk, region).times_exp(exponent_poly(factor, family.chart.fibre))
        found = disk_holonomy(family, other, region)
        report.add('homotopy', found == expected, {'expected': str(expected), 'found': str(found)})
        report.data['homotopy_factor'] = str(factor)
    return report


def stack_build(document, job, report):
    family = documents.load_star_family(document, job.order)
    documents.require(document, 'complex')
    base = family.chart.base
    complex = documents.load_complex(document['complex'], base)
    chi = project(family.chi, base)
    if 'phi' in document:
        tw = documents.load_twist(document, base, family.order)
        documents.check_twist_matches(tw, chi)
    else:
        tw = TwistData(chi)
    region = documents.load_region(job.region or document.get('region'), base)
    cover = build_star_cover(complex, document.get('fineness_radius'))
    level = job.refinement if job.refinement is not None else document.get('level', 0)
    data = assemble_descent_data(family, complex, tw, level, region, cover)
    functions = _functions(family.chart.fibre, job)
    report.extend(verify_identities(data, functions), prefix='twisted/')
    phi_class = documents.load_phi_class(document.get('phi_class'))
    b = solve_b_cochain(data.log_c, phi_class)
    corrected = data.corrected(b, phi_class)
    verify_identities(corrected, functions, report)
    report.data['log_c'] = data.log_c.as_dict()
    report.data['b'] = b.as_dict()
    if job.export and report.passed:
        export_stack(corrected, job.export, functions)
        report.data['export'] = job.export
    return report


HANDLERS = {
    'check-courant': check_courant,
    'check-twisted-poisson': check_twisted,
    'check-mc': check_mc,
    'quantize': quantize,
    'transport': transport,
    'holonomy': holonomy,
    'stack-build': stack_build,
}

class DeformationInputError(DeformationError):
    """A ValidationError carried into a report with its message and witness."""

    def __init__(self, error):
        params = getattr(error, 'params', None) or {}
        super().__init__('; '.join(error.messages), witness=params.get('witness'))


def run(job):
    """Run one job; returns (exit code, report)."""
    report = Report(job.command, job.order)
    if job.command not in HANDLERS:
        report.fail('input', DeformationInputError(ValidationError(f"Unknown command {job.command!r}")))
        return EXIT_INVALID, report
    try:
        document = documents.read_document(job.input)
        report.data['input'] = os.path.basename(job.input)
        with open(job.input, encoding='utf-8') as handle:
            report.data['input_digest'] = digest(handle.read())
        HANDLERS[job.command](document, job, report)
    except ValidationError as exc:
        logger.error(f"Invalid input for {job.command}: {'; '.join(exc.messages)}")
        report.fail('input', DeformationInputError(exc))
        return EXIT_INVALID, report
    except DeformationError as exc:
        logger.error(f"{job.command} stopped: {exc}")
        report.fail('solver', exc)
        return EXIT_FAILED, report
    code = EXIT_PASSED if report.passed else EXIT_FAILED
    logger.info(f"{job.command} finished with exit code {code}")
    return code, report


def _require_formal(family):
    if not family.is_formal():
        raise ValidationError(
            "Quantization needs sigma0 and sigma1 of order h",
            code='not-formal', params={'witness': str(family.sigma0 + family.sigma1)},
        )


def validate(path, command=None):
    """
    Structural checks without running the main computation: parsing, closed
    twists, formal families, well-formed paths, tilings and complexes.

    Returns (exit code, report); rejected input exits with 2.
    """
    report = Report('validate')
    try:
        document = documents.read_document(path)
        command = command or document.get('command')
        if command not in HANDLERS:
            raise ValidationError(f"Cannot tell which command {os.path.basename(path)} is for", code='missing')
        report.data['command'] = command
        _validate_document(command, document, report)
    except ValidationError as exc:
        logger.error(f"{path} rejected: {'; '.join(exc.messages)}")
        report.fail('input', DeformationInputError(exc))
        return EXIT_INVALID, report
    return EXIT_PASSED, report


def _validate_document(command, document, report):
    order = document.get('order')
    if command == 'check-courant':
        documents.load_courant(document, order)
        report.add('phi-closed', True)
        return
    if command == 'check-twisted-poisson':
        documents.load_twisted_poisson(document, order)
        report.add('phi-closed', True)
        return
    if command in ('check-mc', 'quantize'):
        family = documents.load_tight_family(document, order)
        report.add('chi-closed', True)
        if command == 'quantize':
            _require_formal(family)
            report.add('formal', True)
        return
    if 'gamma1' in document or 'gamma2' in document:
        family = documents.load_star_family(document, order)
        report.add('connection-formal', True)
    else:
        family = documents.load_tight_family(document, order)
        _require_formal(family)
        report.add('formal', True)
    base = family.chart.base
    if command == 'transport':
        documents.require(document, 'path')
        documents.load_path(document['path'])
        report.add('path', True)
    elif command == 'holonomy':
        documents.require(document, 'disk')
        documents.load_disk(document['disk'], base)
        report.add('tiling', True)
    else:
        documents.require(document, 'complex')
        complex = documents.load_complex(document['complex'], base)
        report.add('complex-faces', True, str(complex))
        if 'phi' in document:
            tw = documents.load_twist(document, base, order)
            report.add('phi-closed', True)
            documents.check_twist_matches(tw, project(family.chi, base))
            report.add('phi-matches-chi', True)
