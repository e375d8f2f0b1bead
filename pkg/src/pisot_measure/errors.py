"""Exception hierarchy shared by all modules."""


class CertificationError(Exception):
    """A numerical certificate could not be established."""


class PrecisionError(CertificationError):
    """A comparison is undecidable at the current working precision.

    Raising the precision (``precision_digits``) usually resolves it.
    """

    def __init__(self, message, margin=None):
        super().__init__(message)
        self.margin = margin


class RootFindingError(CertificationError):
    """Simultaneous root iteration did not reach the requested radius."""

    def __init__(self, message, achieved_radius=None):
        super().__init__(message)
        self.achieved_radius = achieved_radius


class CriterionInapplicable(Exception):
    """The dense-rotation criterion only covers cubic polynomials."""


class SearchExhausted(Exception):
    """A bounded search ended without success; ``best`` holds the nearest miss."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SeparationInconclusive(CertificationError):
    """No separating depth was found; this does NOT mean the SSC fails."""


class DependencyError(Exception):
    """A pipeline step was requested before the artifact it needs exists."""
