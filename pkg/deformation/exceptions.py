"""
Exceptions raised by the deformation app.

Every error can carry a ``witness``: the printable object (expression string,
mapping of residuals, offending simplex) that shows why a construction or a
check could not go through. Reports reuse it verbatim.
"""


class DeformationError(Exception):
    """Base class for all computational errors of the app."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.message = message
        self.witness = witness

    def as_dict(self):
        data = {'error': self.__class__.__name__, 'message': self.message}
        if self.witness is not None:
            data['witness'] = self.witness
        return data


class ChartError(DeformationError):
    """Operands live on different charts, or a chart is malformed."""


class GradeError(DeformationError):
    """A form or multivector of the wrong degree was supplied."""


class ScalarError(DeformationError):
    """Scalar arithmetic left the supported range (e.g. a product of periods)."""


class NotInvertibleError(DeformationError):
    """A formal matrix is not invertible at order zero in h."""


class ExpressionError(DeformationError):
    """The expression mini-language could not be parsed."""


class TwistError(DeformationError):
    """A twisting 3-form is malformed or not closed."""


class CourantError(DeformationError):
    """Input to a Courant algebroid construction is outside its formal domain."""


class GaugeError(DeformationError):
    """A gauge transformation could not be re-solved as a graph."""


class DiracError(DeformationError):
    """Generators of a Dirac candidate do not form a polynomial frame."""


class FamilyError(DeformationError):
    """Malformed bigraded data or a violated formality condition."""


class QuantizationError(DeformationError):
    """A quantization solve was infeasible within its ansatz."""


class TransportError(DeformationError):
    """A path left the validity region of the transport."""


class TilingError(DeformationError):
    """A disk chain or a homotopy region does not satisfy its invariants."""


class CochainError(DeformationError):
    """A cochain is not a cocycle, or a coboundary equation is infeasible."""


class ExportError(DeformationError):
    """Descent data could not be exported because verification failed."""
