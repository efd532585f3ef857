"""Exception hierarchy shared by every module."""


class HeislabError(Exception):
    """Base class for all library errors."""


class DimensionError(HeislabError):
    """Operands live in Heisenberg groups of different dimension."""


class DomainError(HeislabError):
    """A parameter lies outside the domain of an operation."""


class InvalidIsometry(HeislabError):
    """A matrix fails the orthogonality or symplectic-sign test."""


class CharacteristicPointError(HeislabError):
    """The horizontal gradient vanishes at the requested point."""


class NotAGraph(HeislabError):
    """The quadric has no vertical coefficient, so it is not a t-graph."""


class DegenerateQuadric(HeislabError):
    """The quadratic part of the quadric vanishes."""


class IntegrationError(HeislabError):
    """A quadrature failed, diverged, or exhausted its budget."""


class SupportError(HeislabError):
    """A point expected on the support of a measure lies off it."""


class DegenerateOmega(HeislabError):
    """A sphere-slice measure has zero total mass."""


class AxisError(HeislabError):
    """A point lies on the normal axis where polar coordinates break down."""


class FitError(HeislabError):
    """A least-squares fit is underdetermined or ill-conditioned."""


class DegenerateScan(HeislabError):
    """Every sampled direction was excluded from an admissibility scan."""
