"""Exception hierarchy.

Every failure the library raises on purpose derives from ``RelSparseError`` so
the CLI can map it to exit status 1.
"""


class RelSparseError(Exception):
    pass


class SchemaError(RelSparseError):
    pass


class DataError(RelSparseError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class ShapeError(RelSparseError):
    pass


class DegenerateCovariateError(RelSparseError):
    def __init__(self, message, dimension=None):
        super().__init__(message)
        self.dimension = dimension


class ConfigError(RelSparseError, ValueError):
    pass


class ParameterError(RelSparseError, ValueError):
    pass


class ContractError(RelSparseError):
    pass


class SingularDesignError(RelSparseError):
    pass


class SeparationError(RelSparseError):
    pass


class ConvergenceError(RelSparseError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class DivergenceError(RelSparseError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class SingularInformationError(RelSparseError):
    pass


class SingularHessianError(RelSparseError):
    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class PositivityError(RelSparseError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class EmptyActiveSetError(RelSparseError):
    pass
