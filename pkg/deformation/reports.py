import hashlib
import json
import logging
from dataclasses import dataclass, field

from django.core.serializers.json import DjangoJSONEncoder
from django.utils import timezone

from .conf import get_setting

logger = logging.getLogger(__name__)

# Keys excluded when two reports are compared for determinism
VOLATILE_META = ('generated_at', 'elapsed_seconds')


def render(value):
    """Printable form of residuals and witnesses."""
    if value is None or isinstance(value, (bool, int, float)):
        return value
    if isinstance(value, str):
        return value
    if isinstance(value, dict):
        return {str(k): render(v) for k, v in sorted(value.items(), key=lambda item: str(item[0]))}
    if isinstance(value, (list, tuple)):
        return [render(v) for v in value]
    if hasattr(value, 'as_expr') and hasattr(value, 'ring'):
        from .expressions import format_poly
        return format_poly(value)
    return str(value)


@dataclass
class Check:
    check_id: str
    passed: bool
    residual: object = None
    witness: object = None

    def as_dict(self):
        entry = {'id': self.check_id, 'passed': bool(self.passed), 'residual': render(self.residual)}
        if not self.passed:
            entry['witness'] = render(self.witness if self.witness is not None else self.residual)
        return entry


@dataclass
class Report:
    """Outcome of one verification job: a set of named checks plus metadata."""

    command: str
    order: int = None
    checks: list = field(default_factory=list)
    data: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)
    started_at: object = field(default_factory=timezone.now)

    def add(self, check_id, passed, residual=None, witness=None):
        check = Check(check_id, bool(passed), residual, witness)
        self.checks.append(check)
        if not check.passed:
            logger.debug(f"Check {check_id} failed with residual {render(residual)}")
        return check

    def extend(self, other, prefix=''):
        for check in other.checks:
            self.checks.append(Check(f"{prefix}{check.check_id}", check.passed, check.residual, check.witness))
        self.diagnostics.extend(other.diagnostics)
        return self

    def fail(self, check_id, error):
        """Record a solver error as a failing check carrying the error's witness."""
        self.diagnostics.append(f"{type(error).__name__}: {error}")
        witness = getattr(error, 'witness', None)
        return self.add(check_id, False, residual=str(error), witness=witness if witness is not None else str(error))

    @property
    def passed(self):
        return all(check.passed for check in self.checks)

    def failures(self):
        return [check for check in self.checks if not check.passed]

    def get(self, check_id):
        for check in self.checks:
            if check.check_id == check_id:
                return check
        raise KeyError(check_id)

    def as_dict(self):
        finished = timezone.now()
        return {
            'meta': {
                'tool': get_setting('TOOL_NAME'),
                'tool_version': get_setting('TOOL_VERSION'),
                'schema_version': get_setting('SCHEMA_VERSION'),
                'command': self.command,
                'order': self.order,
                'generated_at': finished.isoformat(),
                'elapsed_seconds': round((finished - self.started_at).total_seconds(), 3),
            },
            'passed': self.passed,
            'checks': [check.as_dict() for check in sorted(self.checks, key=lambda c: c.check_id)],
            'data': render(self.data),
            'diagnostics': list(self.diagnostics),
        }

    def to_json(self):
        return dumps(self.as_dict())

    def write(self, path):
        with open(path, 'w', encoding='utf-8') as handle:
            handle.write(self.to_json())
        logger.info(f"Wrote {self.command} report to {path} (passed={self.passed})")


def dumps(payload):
    return json.dumps(payload, cls=DjangoJSONEncoder, indent=2, sort_keys=True) + '\n'


def comparable(payload):
    """A report dict without its volatile metadata."""
    payload = json.loads(json.dumps(payload, cls=DjangoJSONEncoder))
    for key in VOLATILE_META:
        payload.get('meta', {}).pop(key, None)
    return payload


def digest(text):
    return hashlib.sha256(text.encode('utf-8')).hexdigest()
