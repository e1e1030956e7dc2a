from ._base import JobCommand


class Command(JobCommand):
    help = 'Assemble, correct and verify descent data over a triangulated chart; optionally export it.'
    job_command = 'stack-build'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--export', help='Write the verified descent data as JSON here')
