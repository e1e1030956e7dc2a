from ._base import JobCommand


class Command(JobCommand):
    help = 'Disk holonomy of a tiled disk, its loop identity and an optional homotopy factor.'
    job_command = 'holonomy'
