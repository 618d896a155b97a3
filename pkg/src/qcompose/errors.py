"""Exception hierarchy shared by all qcompose modules."""


class QComposeError(Exception):
    """Base class for every error raised by the package."""


# cq-state algebra
class CQError(QComposeError, ValueError):
    pass


class NonPSDBlock(CQError):
    pass


class NormalizationError(CQError):
    pass


class DimensionMismatch(CQError):
    pass


class InvalidAssignment(CQError):
    pass


class UnknownRegister(CQError, KeyError):
    pass


class NameCollision(CQError):
    pass


class ZeroProbabilityEvent(CQError):
    pass


class LayoutMismatch(CQError):
    pass


class NonClassicalPivot(CQError):
    pass


class PartitionError(CQError):
    pass


class EventNotDetermined(CQError):
    pass


# functionalities
class DomainViolation(QComposeError, ValueError):
    pass


class UnknownFunctionality(QComposeError, KeyError):
    pass


class ParameterOutOfRange(QComposeError, ValueError):
    pass


# protocol engine
class KrausNotTracePreserving(QComposeError, ValueError):
    pass


class BothSidesDishonest(QComposeError, ValueError):
    pass


class StrategyProtocolMismatch(QComposeError, ValueError):
    pass


class ClassicalityViolation(QComposeError):
    def __init__(self, call: int, gap: float):
        super().__init__(f"classicality gap {gap:.3g} at call {call}")
        self.call = call
        self.gap = gap


class IndexDisagreement(QComposeError):
    pass


# verifier
class WitnessDomainError(QComposeError, ValueError):
    pass


class SideMismatch(QComposeError, ValueError):
    pass


class BudgetZero(QComposeError, ValueError):
    pass


class PreconditionViolated(QComposeError):
    pass


class DefinitionProtocolMismatch(QComposeError, ValueError):
    pass


# composition
class CertificationMissing(QComposeError):
    pass


class NoConvergence(QComposeError):
    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


# harness
class ScenarioError(QComposeError):
    pass


class ParseError(ScenarioError):
    pass


class SchemaError(ScenarioError):
    pass


class UnresolvedReference(ScenarioError):
    pass


class CapExceeded(ScenarioError):
    pass
