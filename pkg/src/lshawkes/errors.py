"""Exception hierarchy shared by every module of the package."""


class HawkesError(Exception):
    """Base class for all errors raised by lshawkes."""


class DomainError(HawkesError, ValueError):
    """An argument lies outside the domain of the operation."""


class EventsError(HawkesError, ValueError):
    pass


class NonMonotoneTimes(EventsError):
    def __init__(self, component, index):
        self.component = component
        self.index = index
        super().__init__(f"times not strictly increasing in component {component} at index {index}")


class OutOfHorizon(EventsError):
    def __init__(self, component, index):
        self.component = component
        self.index = index
        super().__init__(f"event {index} of component {component} lies outside [0, horizon]")


class EmptyDimension(EventsError):
    def __init__(self):
        super().__init__("an event sequence needs at least one component")


class InconsistentBounds(HawkesError, ValueError):
    pass


class NoConvergence(HawkesError):
    pass


class Unstable(HawkesError):
    """The model is not sub-critical (spectral condition violated)."""


class Unsupported(HawkesError):
    pass


class EventCapExceeded(HawkesError):
    pass


class DominationViolated(HawkesError):
    pass


class NonPositiveIntensityAtEvent(HawkesError):
    def __init__(self, component, index):
        self.component = component
        self.index = index
        super().__init__(f"non-positive intensity at event {index} of component {component}")


class QuadratureFailure(HawkesError):
    pass


class AllStartsFailed(HawkesError):
    pass


class SingularInformation(HawkesError):
    pass


class NestingViolation(HawkesError):
    pass


class ShapeMismatch(HawkesError, ValueError):
    pass


class ParseError(HawkesError, ValueError):
    def __init__(self, line, reason="malformed row"):
        self.line = line
        super().__init__(f"line {line}: {reason}")


class NegativeTimestamp(ParseError):
    def __init__(self, line):
        super().__init__(line, "negative timestamp")


class UnknownCode(ParseError):
    def __init__(self, line, code):
        self.code = code
        super().__init__(line, f"unknown code {code!r}")
