import logging

from django.core.management.base import BaseCommand, CommandError

from deformation.forms import JobForm
from deformation.jobs import run
from deformation.models import VerificationRun

VERBOSITY_LEVELS = {0: logging.ERROR, 1: logging.WARNING, 2: logging.INFO, 3: logging.DEBUG}


class JobCommand(BaseCommand):
    """Shared flags, input validation, report output and exit codes of the job commands."""

    job_command = None

    def add_arguments(self, parser):
        parser.add_argument('--input', required=True, help='JSON job file')
        parser.add_argument('--order', type=int, help='Truncation order N (0..4)')
        parser.add_argument('--report', help='Write the JSON report here instead of stdout')
        parser.add_argument('--fixtures', help='Directory that relative input paths are resolved against')
        parser.add_argument('--degree', type=int, help='Degree of the monomial test functions')
        parser.add_argument('--refinement', type=int, help='Tile refinement steps')
        parser.add_argument('--region', help='Validity region U as a JSON list of [low, high] intervals')
        parser.add_argument('--record', action='store_true', help='Store the report as a VerificationRun')

    def form_data(self, options):
        data = {key: options.get(key) for key in (
            'input', 'order', 'degree', 'refinement', 'region', 'fixtures', 'report', 'export', 'record',
        )}
        data['command'] = self.job_command
        return {key: value for key, value in data.items() if value is not None}

    def execute_job(self, form):
        return run(form.to_job())

    def handle(self, *args, **options):
        logging.getLogger('deformation').setLevel(VERBOSITY_LEVELS.get(options['verbosity'], logging.DEBUG))
        form = JobForm(data=self.form_data(options))
        if not form.is_valid():
            raise CommandError(form.errors.as_text(), returncode=2)
        code, report = self.execute_job(form)
        if options.get('report'):
            report.write(options['report'])
            if options['verbosity']:
                self.stdout.write(f"Report written to {options['report']}")
        else:
            self.stdout.write(report.to_json(), ending='')
        if options.get('record'):
            VerificationRun.record(report, code)
        if code:
            failed = ', '.join(check.check_id for check in report.failures()[:5])
            raise CommandError(f"{self.job_command} failed: {failed}", returncode=code)
        if options['verbosity']:
            self.stdout.write(self.style.SUCCESS(f"{self.job_command}: all {len(report.checks)} checks passed"))
