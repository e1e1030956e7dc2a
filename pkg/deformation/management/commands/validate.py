from deformation.jobs import COMMANDS, validate

from ._base import JobCommand


class Command(JobCommand):
    help = 'Validate a job file (schema, closed twists, formality, tilings, complexes) without running it.'
    job_command = 'validate'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--command', dest='target', choices=COMMANDS,
                            help='Command the file is meant for, if the file does not say')

    def execute_job(self, form):
        return validate(form.cleaned_data['input'], self.options_target)

    def handle(self, *args, **options):
        self.options_target = options.get('target')
        return super().handle(*args, **options)
