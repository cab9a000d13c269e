"""Exception types shared across the package."""


class SepsingError(Exception):
    """Base class for all package errors."""


# geometry
class ChainBroken(SepsingError):
    pass


class AngleOutOfRange(SepsingError):
    pass


class SelfIntersection(SepsingError):
    pass


class OrientationError(SepsingError):
    pass


class TooCloseToBoundary(SepsingError):
    pass


class DisksOverlap(SepsingError):
    pass


class SupportLeak(SepsingError):
    pass


class NoValidRotation(SepsingError):
    pass


# transforms
class OnContour(SepsingError):
    pass


class OnImageContour(SepsingError):
    pass


class AdaptiveDepthExceeded(SepsingError):
    pass


class MapCollision(SepsingError):
    pass


class NonFiniteEntry(SepsingError):
    pass


# decomposition
class EmptySplit(SepsingError):
    pass


class ShapeMismatch(SepsingError):
    pass


# extension
class ClusterAmbiguity(SepsingError):
    pass


class IllConditioned(SepsingError):
    pass


class JetMismatch(SepsingError):
    pass


class NoConvergence(SepsingError):
    pass


class OutsidePolydisk(SepsingError):
    pass


# algebra
class NumericalDegeneracy(SepsingError):
    pass


class NotDistinct(SepsingError):
    pass


class CharactersCollide(SepsingError):
    pass


class FiberResolutionFailure(SepsingError):
    pass


# scenarios / cli
class UnknownScenario(SepsingError):
    pass


class ScenarioFormatError(SepsingError):
    pass
