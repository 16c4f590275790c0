"""Exception hierarchy shared by all gdm modules."""


class GdmError(Exception):
    """Base class for all errors raised by this package."""


class InvalidGraphError(GdmError):
    """A graph matrix violates its structural contract (shape, symmetry)."""


class DataError(GdmError):
    """Input data is unusable: non-finite values, missing labels,
    too few samples, or a removal that left a subject degenerate."""


class DimensionError(GdmError):
    """Shapes of the inputs do not agree."""


class DegenerateSubjectError(GdmError):
    """A subject's centered Gram matrix has no positive spectrum
    (all-constant data after standardization)."""


class InfeasibleError(GdmError):
    """The requested shared dimension exceeds what the data can support."""


class ProtocolError(GdmError):
    """The cross-validation protocol cannot be satisfied."""


class FormatError(GdmError):
    """A file does not conform to its declared format."""


class ParameterError(GdmError):
    """A parameter value violates an operation's preconditions."""
