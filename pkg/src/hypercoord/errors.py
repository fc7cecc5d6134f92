"""Exception hierarchy shared across the package."""


class HypercoordError(Exception):
    """Base class for all errors raised by hypercoord."""


# graph layer

class MalformedTerm(HypercoordError):
    pass


class ParseError(HypercoordError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# system model

class ConflictingIRI(HypercoordError):
    pass


class UnknownIRI(HypercoordError):
    pass


class UnknownAgent(HypercoordError):
    pass


# thing descriptions / profiles

class SchemaError(HypercoordError):
    pass


class InvalidTD(SchemaError):
    pass


class InvalidProfile(SchemaError):
    pass


class UnknownProfile(HypercoordError):
    pass


# environment

class NotFound(HypercoordError):
    pass


class UnsupportedMedia(HypercoordError):
    pass


class HopBudgetExhausted(NotFound):
    pass


class CallbackUnreachable(HypercoordError):
    pass


class TransportError(HypercoordError):
    """The target of a request could not be reached."""


# protocols

class ProtocolSchemaError(HypercoordError):
    pass


class RoleUnbound(HypercoordError):
    def __init__(self, role):
        self.role = role
        super().__init__(f"no agent plays role {role}")


class AffordanceMissing(HypercoordError):
    def __init__(self, affordance_type):
        self.affordance_type = affordance_type
        super().__init__(f"no affordance of type {affordance_type}")


class ObservationUnavailable(HypercoordError):
    pass


# simulation

class ScenarioError(HypercoordError):
    pass
