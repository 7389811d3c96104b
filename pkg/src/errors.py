"""
errors.py: Exception hierarchy shared by all toolkit modules.

Every error raised on purpose by the toolkit derives from ToolkitError, so the
command-line front-end can turn it into a machine-readable error document.
Errors that reject caller input also derive from ValueError.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""

    def details(self):
        """
        Extra machine-readable context for error reports.

        Returns:
            dict: JSON-serializable details (empty by default).
        """
        return {}


class ParameterError(ToolkitError, ValueError):
    """A physical parameter or argument violates an operation precondition."""


class FrameError(ParameterError):
    """The electron quantization axis is undefined for the given inputs."""


class ConfigError(ToolkitError, ValueError):
    """A run configuration is invalid."""


class SchemaError(ToolkitError, ValueError):
    """An ingested data file does not match its documented schema."""

    def __init__(self, message, path=None, rows=None, columns=None):
        super().__init__(message)
        self.path = path
        self.rows = list(rows or [])
        self.columns = list(columns or [])

    def details(self):
        return {'path': str(self.path) if self.path else None,
                'rows': self.rows, 'columns': self.columns}


class IntegrationError(ToolkitError):
    """The master-equation integrator failed."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time

    def details(self):
        return {'time_s': self.time}


class FitError(ToolkitError):
    """Base class for fitting failures."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result

    def details(self):
        if self.result is None:
            return {}
        return {'best_so_far': self.result.as_dict()}


class FitConvergenceError(FitError):
    """The solver hit its iteration cap without converging."""


class SingularFitError(FitError):
    """The Gauss-Newton normal matrix could not be inverted."""


class DegenerateDataError(FitError):
    """The data carry no information about the fitted parameters."""
