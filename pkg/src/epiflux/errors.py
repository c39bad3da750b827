"""Exception hierarchy shared by every epiflux module."""


class EpifluxError(Exception):
    """Base class; the CLI maps any subclass to a nonzero exit status."""


class ConfigError(EpifluxError):
    pass


class SchemaError(ConfigError):
    pass


class NormalizationError(ConfigError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class BoundError(ConfigError):
    pass


class MomentError(ConfigError):
    pass


class GridError(EpifluxError):
    pass


class GridMismatch(EpifluxError):
    pass


class NonConvergence(EpifluxError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class FactorizationError(EpifluxError):
    pass


class SingularStep(EpifluxError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class UnknownBlock(EpifluxError):
    pass


class MissingFunctional(EpifluxError):
    pass


class EventLogMissing(EpifluxError):
    pass
