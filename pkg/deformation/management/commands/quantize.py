from ._base import JobCommand


class Command(JobCommand):
    help = 'Quantize a tight Poisson family and check the resulting star family.'
    job_command = 'quantize'
