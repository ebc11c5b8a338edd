"""Exception hierarchy shared by all modules."""


class VtomoError(Exception):
    """Base class for errors raised by this package."""


class InvalidParameterError(VtomoError, ValueError):
    pass


class GeometryError(VtomoError):
    """Mesh or chord geometry is inconsistent (chord outside mesh, node not located, ...)."""


class DegenerateElementError(GeometryError):
    pass


class DimensionMismatchError(VtomoError, ValueError):
    pass


class SolverError(VtomoError):
    """Numerical failure: singular system or non-convergence."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class ConfigError(VtomoError, ValueError):
    pass


class ParseError(VtomoError, ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line
