"""Exception hierarchy shared by all modules."""


class OrsepError(Exception):
    pass


class DimensionError(OrsepError, ValueError):
    pass


class ParseError(OrsepError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CapacityError(OrsepError, ValueError):
    pass


class ParameterError(OrsepError, ValueError):
    pass


class InfeasibilityError(OrsepError):
    pass


class DegenerateSourceError(OrsepError, ArithmeticError):
    def __init__(self, message, bitmask=None):
        super().__init__(message)
        self.bitmask = bitmask


class PartitionError(OrsepError, ValueError):
    pass
