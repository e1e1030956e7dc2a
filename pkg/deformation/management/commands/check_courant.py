from ._base import JobCommand


class Command(JobCommand):
    help = 'Check the twisted Courant algebroid axioms on the sections of a job file.'
    job_command = 'check-courant'
