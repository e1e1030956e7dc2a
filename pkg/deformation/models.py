from django.db import models
import logging

logger = logging.getLogger(__name__)


class VerificationRun(models.Model):
    """One recorded run of a verification or construction command."""

    COMMANDS = [
        ('check-courant', 'Courant axioms'),
        ('check-twisted-poisson', 'Twisted Poisson'),
        ('check-mc', 'Maurer-Cartan'),
        ('quantize', 'Quantize'),
        ('transport', 'Parallel transport'),
        ('holonomy', 'Disk holonomy'),
        ('stack-build', 'Stack build'),
        ('validate', 'Validate'),
    ]

    command = models.CharField(max_length=32, choices=COMMANDS)
    input_name = models.CharField(max_length=255, blank=True)
    input_digest = models.CharField(max_length=64, blank=True)
    order = models.PositiveSmallIntegerField(null=True, blank=True)
    exit_code = models.PositiveSmallIntegerField(default=0)
    passed = models.BooleanField(default=False)
    failed_checks = models.PositiveIntegerField(default=0)
    report = models.JSONField(default=dict)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']
        verbose_name = 'Verification Run'
        verbose_name_plural = 'Verification Runs'

    def __str__(self):
        status = 'passed' if self.passed else 'failed'
        return f"{self.command} on {self.input_name or 'input'} - {status}"

    @classmethod
    def record(cls, report, exit_code):
        """Store a finished report."""
        payload = report.as_dict()
        run = cls.objects.create(
            command=report.command,
            input_name=report.data.get('input', ''),
            input_digest=report.data.get('input_digest', ''),
            order=report.order,
            exit_code=exit_code,
            passed=report.passed,
            failed_checks=len(report.failures()),
            report=payload,
        )
        logger.info(f"Recorded run {run.pk} for {run.command}")
        return run

    @property
    def check_count(self):
        return len(self.report.get('checks', []))
