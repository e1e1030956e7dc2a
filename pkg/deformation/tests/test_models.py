from django.contrib.admin.sites import AdminSite
from django.test import TestCase

from deformation.admin import VerificationRunAdmin
from deformation.exceptions import TwistError
from deformation.models import VerificationRun
from deformation.reports import Report


def sample_report(passed=True):
    report = Report('check-courant', 2)
    report.data.update({'input': 'courant.json', 'input_digest': 'ab' * 32})
    report.add('jacobi', True)
    report.add('anchor', passed, None if passed else 'x*dz')
    return report


class VerificationRunTests(TestCase):

    def test_record(self):
        run = VerificationRun.record(sample_report(), 0)
        self.assertTrue(run.passed)
        self.assertEqual(run.order, 2)
        self.assertEqual(run.check_count, 2)
        self.assertEqual(run.failed_checks, 0)
        self.assertEqual(str(run), 'check-courant on courant.json - passed')

    def test_failed_checks_keep_their_witness(self):
        run = VerificationRun.record(sample_report(passed=False), 1)
        self.assertFalse(run.passed)
        self.assertEqual(run.failed_checks, 1)
        failed = [c for c in run.report['checks'] if not c['passed']]
        self.assertEqual(failed[0]['witness'], 'x*dz')

    def test_solver_failure(self):
        report = Report('check-twisted-poisson')
        report.fail('input', TwistError('phi is not closed', witness='dw^dx^dy^dz'))
        run = VerificationRun.record(report, 2)
        self.assertEqual(run.input_name, '')
        self.assertEqual(run.report['checks'][0]['witness'], 'dw^dx^dy^dz')
        self.assertEqual(run.report['diagnostics'], ['TwistError: phi is not closed'])


class VerificationRunAdminTests(TestCase):

    def setUp(self):
        self.admin = VerificationRunAdmin(VerificationRun, AdminSite())

    def test_status_badge(self):
        run = VerificationRun.record(sample_report(), 0)
        self.assertIn('Passed', self.admin.status_badge(run))
        run.exit_code = 2
        self.assertIn('Invalid input', self.admin.status_badge(run))

    def test_digest_short(self):
        run = VerificationRun.record(sample_report(), 0)
        self.assertEqual(self.admin.digest_short(run), 'abababababab...')
        run.input_digest = ''
        self.assertEqual(self.admin.digest_short(run), '-')

    def test_runs_are_not_added_by_hand(self):
        self.assertFalse(self.admin.has_add_permission(None))
