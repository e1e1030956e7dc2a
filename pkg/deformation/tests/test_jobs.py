import json
import os
import tempfile
from io import StringIO

from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from deformation.conf import get_setting
from deformation.forms import JobForm
from deformation.jobs import EXIT_FAILED, EXIT_INVALID, EXIT_PASSED, JobSpec, run, validate
from deformation.models import VerificationRun
from deformation.reports import comparable

FIXTURES = os.path.join(os.path.dirname(os.path.dirname(__file__)), 'fixtures')


def job(command, name, **options):
    return JobSpec(command=command, input=os.path.join(FIXTURES, name), **options)


class RunTests(SimpleTestCase):

    def test_courant_axioms(self):
        code, report = run(job('check-courant', 'courant.json'))
        self.assertEqual(code, EXIT_PASSED, [c.check_id for c in report.failures()])

    def test_twisted_poisson(self):
        code, report = run(job('check-twisted-poisson', 'twisted_poisson.json'))
        self.assertEqual(code, EXIT_PASSED)
        self.assertTrue(report.get('twisted-poisson').passed)

    def test_constant_family_is_tight(self):
        code, report = run(job('check-mc', 'constant_family.json'))
        self.assertEqual(code, EXIT_PASSED)
        self.assertTrue(report.get('mc/1-2').passed)

    def test_non_tight_family_fails(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'drift.json')
            with open(path, 'w', encoding='utf-8') as handle:
                json.dump({
                    'order': 2, 'fibre': ['x', 'y'], 'base': ['t'], 'sigma0': 'h*t*Dx^Dy',
                }, handle)
            code, report = run(JobSpec(command='check-mc', input=path))
        self.assertEqual(code, EXIT_FAILED)
        self.assertEqual([c.check_id for c in report.failures()], ['mc/1-2'])

    def test_quantize(self):
        code, report = run(job('quantize', 'tight_family.json', degree=2))
        self.assertEqual(code, EXIT_PASSED, [c.check_id for c in report.failures()])
        self.assertIn('star_family', report.data)

    def test_transport(self):
        code, report = run(job('transport', 'transport.json'))
        self.assertEqual(code, EXIT_PASSED)
        self.assertTrue(report.get('transport/algebra-map').passed)
        self.assertTrue(report.get('transport/inverse').passed)

    def test_transport_outside_region(self):
        code, report = run(job('transport', 'transport.json', region=[[0, '1/2']]))
        self.assertEqual(code, EXIT_FAILED)
        self.assertEqual(report.failures()[0].check_id, 'solver')

    def test_holonomy(self):
        code, report = run(job('holonomy', 'curved_holonomy.json'))
        self.assertEqual(code, EXIT_PASSED, [c.check_id for c in report.failures()])

    def test_stack_build_with_export(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'stack.json')
            code, report = run(job('stack-build', 'moyal_stack.json', export=path))
            with open(path, encoding='utf-8') as handle:
                exported = json.load(handle)
        self.assertEqual(code, EXIT_PASSED)
        self.assertEqual(report.data['export'], path)
        self.assertEqual(exported['schema'], 'tightstack.descent-data/1')

    def test_twisted_stack_uses_the_class(self):
        code, report = run(job('stack-build', 'twisted_stack.json'))
        self.assertEqual(code, EXIT_PASSED, [c.check_id for c in report.failures()])
        self.assertEqual(report.data['b'], {})
        self.assertTrue(report.get('twisted/pentagon/0-1-2-3').passed)

    def test_curved_stack_exports_the_correction(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'curved.json')
            code, report = run(job('stack-build', 'curved_stack.json', export=path))
            with open(path, encoding='utf-8') as handle:
                exported = json.load(handle)
        self.assertEqual(code, EXIT_PASSED, [c.check_id for c in report.failures()])
        self.assertEqual(report.data['log_c'], {'0-1-2-3': '-1/6'})
        self.assertEqual(report.data['b'], {'0-1-2': '1/6'})
        self.assertEqual(exported['b'], report.data['b'])
        self.assertTrue(report.get('twisted/pentagon/0-1-2-3').passed)
        self.assertTrue(report.get('pentagon/0-1-2-3').passed)

    def test_twist_must_agree_with_the_family(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'mismatch.json')
            with open(os.path.join(FIXTURES, 'curved_stack.json'), encoding='utf-8') as handle:
                document = json.load(handle)
            document['phi'] = '2*dx^dy^dz'
            with open(path, 'w', encoding='utf-8') as handle:
                json.dump(document, handle)
            code, report = run(JobSpec(command='stack-build', input=path))
        self.assertEqual(code, EXIT_INVALID)
        self.assertEqual(report.failures()[0].check_id, 'input')
        self.assertIn('dx^dy^dz', str(report.get('input').witness))

    def test_stack_build_is_deterministic(self):
        first = run(job('stack-build', 'moyal_stack.json'))[1].as_dict()
        second = run(job('stack-build', 'moyal_stack.json'))[1].as_dict()
        self.assertEqual(comparable(first), comparable(second))

    def test_malformed_input(self):
        code, report = run(job('check-courant', 'malformed.json'))
        self.assertEqual(code, EXIT_INVALID)
        self.assertEqual(report.failures()[0].check_id, 'input')

    def test_unknown_command(self):
        code, _ = run(job('integrate', 'courant.json'))
        self.assertEqual(code, EXIT_INVALID)


class ValidateTests(SimpleTestCase):

    def test_open_twist_is_rejected(self):
        code, report = validate(os.path.join(FIXTURES, 'open_twist.json'))
        self.assertEqual(code, EXIT_INVALID)
        self.assertIn('dw', str(report.get('input').witness))

    def test_non_formal_family_is_rejected(self):
        code, report = validate(os.path.join(FIXTURES, 'not_formal.json'))
        self.assertEqual(code, EXIT_INVALID)

    def test_good_fixtures_pass(self):
        for name in ('courant.json', 'tight_family.json', 'transport.json', 'curved_holonomy.json',
                     'cube_stack.json', 'curved_stack.json'):
            with self.subTest(name=name):
                code, report = validate(os.path.join(FIXTURES, name))
                self.assertEqual(code, EXIT_PASSED, report.as_dict()['checks'])

    def test_command_override(self):
        code, report = validate(os.path.join(FIXTURES, 'tight_family.json'), 'check-mc')
        self.assertEqual(code, EXIT_PASSED)
        self.assertEqual(report.data['command'], 'check-mc')
        self.assertEqual([c.check_id for c in report.checks], ['chi-closed'])


class CommandTests(SimpleTestCase):

    def call(self, name, **options):
        out = StringIO()
        call_command(name, fixtures=FIXTURES, stdout=out, stderr=StringIO(), verbosity=0, **options)
        return out.getvalue()

    def test_report_goes_to_stdout(self):
        payload = json.loads(self.call('check_twisted_poisson', input='twisted_poisson.json'))
        self.assertTrue(payload['passed'])
        self.assertEqual(payload['meta']['command'], 'check-twisted-poisson')

    def test_report_file(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'report.json')
            self.call('transport', input='transport.json', report=path)
            with open(path, encoding='utf-8') as handle:
                payload = json.load(handle)
        self.assertEqual(payload['meta']['tool'], 'tightstack')

    def test_failed_checks_exit_with_one(self):
        with self.assertRaises(CommandError) as caught:
            self.call('transport', input='transport.json', region='[[0, "1/2"]]')
        self.assertEqual(caught.exception.returncode, 1)

    def test_invalid_input_exits_with_two(self):
        with self.assertRaises(CommandError) as caught:
            self.call('check_courant', input='malformed.json')
        self.assertEqual(caught.exception.returncode, 2)

    def test_missing_file_exits_with_two(self):
        with self.assertRaises(CommandError) as caught:
            self.call('check_courant', input='absent.json')
        self.assertEqual(caught.exception.returncode, 2)

    def test_order_limit(self):
        with self.assertRaises(CommandError) as caught:
            self.call('check_courant', input='courant.json', order=9)
        self.assertEqual(caught.exception.returncode, 2)

    def test_export_only_for_stack_build(self):
        form = JobForm(data={
            'command': 'check-courant', 'input': 'courant.json', 'fixtures': FIXTURES, 'export': 'out.json',
        })
        self.assertFalse(form.is_valid())
        self.assertIn('export', form.errors)

    def test_region_must_be_intervals(self):
        form = JobForm(data={
            'command': 'transport', 'input': 'transport.json', 'fixtures': FIXTURES, 'region': '[1, 2]',
        })
        self.assertFalse(form.is_valid())
        self.assertIn('region', form.errors)

    def test_validate_command(self):
        self.call('validate', input='transport.json')
        with self.assertRaises(CommandError) as caught:
            self.call('validate', input='open_twist.json')
        self.assertEqual(caught.exception.returncode, 2)


class RecordTests(TestCase):

    def test_record_stores_a_run(self):
        call_command(
            'check_mc', input='constant_family.json', fixtures=FIXTURES, record=True,
            stdout=StringIO(), verbosity=0,
        )
        run_ = VerificationRun.objects.get()
        self.assertEqual(run_.command, 'check-mc')
        self.assertEqual(run_.exit_code, 0)
        self.assertEqual(run_.input_name, 'constant_family.json')
        self.assertTrue(run_.passed)


class SettingsTests(SimpleTestCase):

    def test_log_level_comes_from_the_deformation_settings(self):
        self.assertEqual(settings.LOGGING['loggers']['deformation']['level'], settings.DEFORMATION['LOG_LEVEL'])
        self.assertEqual(get_setting('LOG_LEVEL'), 'WARNING')

    def test_unknown_settings_are_refused(self):
        with self.assertRaises(KeyError):
            get_setting('LOG_FILE')
