class BurgersLabError(Exception):
    """Base class for all errors raised by burgerslab."""


class ConfigurationError(BurgersLabError, ValueError):
    pass


class HypothesisViolation(ConfigurationError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class DomainExitError(BurgersLabError):
    def __init__(self, message, exit_time, seed_index=None):
        super().__init__(message)
        self.exit_time = exit_time
        self.seed_index = seed_index


class CausticCrossedError(BurgersLabError):
    pass


class ResolutionError(BurgersLabError, ValueError):
    pass


class PhaseSolveError(BurgersLabError):
    def __init__(self, message, contraction_factor):
        super().__init__(message)
        self.contraction_factor = contraction_factor


class InversionError(BurgersLabError):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node
