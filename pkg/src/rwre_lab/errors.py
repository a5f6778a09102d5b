"""Exception types shared across the package."""


class RwreError(Exception):
    """Base class for package errors."""


class NegativeEntry(RwreError):
    """A transition probability is negative."""


class NotNormalized(RwreError):
    """Kernel probabilities or mixture weights do not sum to 1."""


class EllipticityViolated(RwreError):
    """Some transition probability falls below the ellipticity floor."""


class HorizonTooLarge(RwreError):
    """Exact enumeration requested beyond its feasible horizon."""


class AcceptanceTooLow(RwreError):
    """Rejection sampling failed to accept within its retry budget."""


class BallisticityDoubtful(RwreError):
    """Empirical drift check could not confirm ballisticity in +e_1."""


class TilingViolation(RwreError):
    """Glued slab strips do not tile the covered level range."""


class OutsideCoveredRegion(RwreError):
    """Site query or walk start outside the glued level range."""


class InsufficientMass(RwreError):
    """Too few counts in the decisive cell for a reliable estimate."""


class TailNotEstimable(RwreError):
    """Too few samples to estimate the tail mass beyond the cutoff radius."""


class ConfigError(RwreError):
    """Invalid run configuration; nothing was executed."""
