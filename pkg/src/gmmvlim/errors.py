"""Exception types. Every error carries a machine-readable ``code``."""


class GmmvError(Exception):
    """Base class for all package errors."""

    code = "ERROR"

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ConfigError(GmmvError, ValueError):
    """Invalid configuration. ``problems`` lists every violation found as
    ``(code, message)`` pairs."""

    code = "CONFIG_ERROR"

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [("CONFIG_ERROR", problems)]
        self.problems = list(problems)
        msg = "; ".join(f"{c}: {m}" for c, m in self.problems)
        super().__init__(msg, code=self.problems[0][0] if self.problems else None)


class DimensionError(GmmvError, ValueError):
    code = "DIM_MISMATCH"


class GeometryError(GmmvError, ValueError):
    code = "GEOMETRY_VIOLATION"


class SolverError(GmmvError, RuntimeError):
    """Raised by iterative solvers; ``result`` holds the partial state when
    one is available."""

    code = "SOLVER_ERROR"

    def __init__(self, message, code=None, result=None):
        super().__init__(message, code=code)
        self.result = result


class DatasetError(GmmvError, ValueError):
    code = "CORRUPT_RECORD"
