"""Exceptions raised by the optimizer, the testbed and the harnesses."""


class ZoegdError(Exception):
    """Root of every error raised by this package."""


class InvalidInputError(ZoegdError, ValueError):
    pass


class OutOfRangeError(InvalidInputError):
    """A parameter lies outside the range the guarantees cover."""


class ConfigurationError(ZoegdError, ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f'{field}: {message}')


class OracleFailureError(ZoegdError):
    """The black-box function returned a non-finite value.

    `point` is the query that failed; `partial_result` is filled in by the
    optimizer loop with the trace gathered up to the failure.
    """

    def __init__(self, point, value=None, partial_result=None):
        self.point = point
        self.value = value
        self.partial_result = partial_result
        super().__init__(f'oracle returned {value!r} at {list(point)!r}')


class CatalogError(ZoegdError, KeyError):
    def __init__(self, name, valid_names):
        self.name = name
        self.valid_names = tuple(valid_names)
        super().__init__(f"unknown problem '{name}'; valid names: {', '.join(self.valid_names)}")

    def __str__(self):
        return self.args[0]


class UnsupportedProblemError(ZoegdError):
    """The problem does not expose the analytic information a harness needs."""


class InsufficientTraceError(ZoegdError):
    """A run trace lacks the snapshots a post-hoc check requires."""
