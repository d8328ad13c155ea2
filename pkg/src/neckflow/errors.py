"""Exception hierarchy. Every domain failure is a subclass of NeckflowError."""


class NeckflowError(Exception):
    pass


class InputError(NeckflowError):
    """Malformed or inconsistent input data (CLI exit code 2)."""


class ScenarioParseError(InputError):
    pass


class NonPositiveRadius(NeckflowError):
    pass


class InsufficientSamples(NeckflowError):
    pass


class HeightOutOfRange(NeckflowError):
    pass


class DegenerateMetric(NeckflowError):
    pass


class WindowExceedsDomain(NeckflowError):
    pass


class NonPositiveH(NeckflowError):
    pass


class MissingDerivatives(NeckflowError):
    pass


class InsufficientHistory(NeckflowError):
    pass


class SurgeryInWindow(NeckflowError):
    pass


class NewtonDivergence(NeckflowError):
    pass


class FoliationCollision(NeckflowError):
    pass


class NonConvergence(NeckflowError):
    pass


class DegenerateLeaf(NeckflowError):
    pass


class NonMonotoneRelabeling(NeckflowError):
    pass


class AlignmentSingularity(NeckflowError):
    pass


class NoOverlap(NeckflowError):
    pass


class ResidualTooLarge(NeckflowError):
    pass


class LiftExitsCylinder(NeckflowError):
    pass


class AmbiguousLift(NeckflowError):
    pass


class OrientationIncompatible(NeckflowError):
    pass


class CertificationFailure(NeckflowError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class IncompleteData(NeckflowError):
    pass


class RadiusUnderflow(NeckflowError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class NeckTooShort(NeckflowError):
    pass


class CapConvexityFailure(NeckflowError):
    pass
