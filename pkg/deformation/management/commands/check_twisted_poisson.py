from ._base import JobCommand


class Command(JobCommand):
    help = 'Check [pi, pi] = 2 ^3 pi~(phi) for a bivector and a closed 3-form.'
    job_command = 'check-twisted-poisson'
