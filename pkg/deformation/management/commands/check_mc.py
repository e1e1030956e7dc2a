from ._base import JobCommand


class Command(JobCommand):
    help = 'Report the four Maurer-Cartan components of a Poisson family.'
    job_command = 'check-mc'
