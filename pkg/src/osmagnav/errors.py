"""Exception types raised across the package."""


class OsmagError(Exception):
    """Base class for every error raised by osmagnav."""


# map parsing / model
class MalformedXml(OsmagError):
    pass


class MissingRoot(OsmagError):
    pass


class DuplicateName(OsmagError):
    pass


class MissingRequiredTag(OsmagError):
    def __init__(self, element: str, key: str):
        super().__init__(f"{element}: missing required tag {key!r}")
        self.element = element
        self.key = key


class DanglingNodeRef(OsmagError):
    pass


class InvalidElement(OsmagError):
    """Element present but unusable (self-loop passage, degenerate polygon, bad enum)."""


class LegacyTag(OsmagError):
    pass


class PolarLatitude(OsmagError):
    pass


class UnknownArea(OsmagError):
    pass


class NoCommonAncestor(OsmagError):
    pass


class NotInAnyArea(OsmagError):
    pass


class AmbiguousContainment(OsmagError):
    pass


# rasters / graph search
class DegenerateArea(OsmagError):
    pass


class NoPath(OsmagError):
    pass


class AttachFailed(OsmagError):
    pass


class CacheMismatch(OsmagError):
    pass


# planning
class NoRoute(OsmagError):
    pass


class InvalidFrontier(OsmagError):
    pass


class InvalidExpansion(OsmagError):
    pass


class CrossFloorUnsupported(OsmagError):
    pass


# execution
class NoProjection(OsmagError):
    pass


class Aborted(OsmagError):
    pass


# localization
class PoseOutsideMap(OsmagError):
    pass


class Diverged(OsmagError):
    pass


class TooFewCorrespondences(OsmagError):
    pass


class StaleOdometry(OsmagError):
    pass


class NoHypothesis(OsmagError):
    pass


# synthetic maps
class SpecInfeasible(OsmagError):
    pass
