from ._base import JobCommand


class Command(JobCommand):
    help = 'Parallel transport along a polyline in the base of a star family.'
    job_command = 'transport'
