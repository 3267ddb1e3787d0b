class FluxlabError(Exception):
    """Base class for every numerical or I/O failure raised by fluxlab."""


class InvalidDimensionError(FluxlabError, ValueError):
    pass


class DimensionMismatchError(FluxlabError, ValueError):
    pass


class InvalidStateError(FluxlabError, ValueError):
    pass


class TruncationError(FluxlabError, ValueError):
    def __init__(self, message, required_n_max):
        super().__init__(message)
        self.required_n_max = required_n_max


class CutoffError(FluxlabError, ValueError):
    pass


class NonFiniteParameterError(FluxlabError, ValueError):
    pass


class EigensolverError(FluxlabError, ArithmeticError):
    pass


class DegenerateSteadyStateError(EigensolverError):
    pass


class StepSizeError(FluxlabError, ArithmeticError):
    pass


class MassDeficitError(FluxlabError, ArithmeticError):
    pass


class QuadratureError(FluxlabError, ArithmeticError):
    pass


class SingularExpansionError(FluxlabError, ArithmeticError):
    pass


class SingularBranchError(FluxlabError, ArithmeticError):
    pass


class UnstableSystemError(FluxlabError, ArithmeticError):
    def __init__(self, message, eigenvalue):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class InvalidCovarianceError(FluxlabError, ValueError):
    pass


class InsufficientPointsError(FluxlabError, ValueError):
    pass


class SchemaError(FluxlabError, ValueError):
    pass
