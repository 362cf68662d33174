"""Exception hierarchy. Everything raised on purpose derives from SimulationError."""


class SimulationError(Exception):
    pass


class InvalidProfileError(SimulationError, ValueError):
    """A power profile or capacity that cannot be used (e.g. zero peak wattage)."""


class NotFoundError(SimulationError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "not found"


class PolicyViolationError(SimulationError):
    """An illegal power-state transition or an over-committed placement."""


class DomainError(SimulationError, ValueError):
    """A value outside the domain of an operation (utilisation outside [0, 1])."""


class DegenerateVmError(SimulationError):
    """A VM whose service rate is zero; it can never serve a request."""


class EngineOrderingError(SimulationError):
    """Time went backwards. Always fatal: the event queue is corrupt."""


class ComparisonError(SimulationError, ValueError):
    pass


class ConfigError(SimulationError, ValueError):
    """Semantic problem in a scenario file; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class ConfigParseError(SimulationError, ValueError):
    def __init__(self, source, line, column, message):
        super().__init__(f"{source}:{line}:{column}: {message}")
        self.source = source
        self.line = line
        self.column = column


class TraceFormatError(SimulationError, ValueError):
    pass
