"""Exception types shared across the registration pipeline."""


class SeqregError(Exception):
    """Base class for all pipeline errors."""


class DegenerateProjection(SeqregError):
    """Homogeneous scale vanished while projecting or chaining transforms."""


class SingularMatrix(SeqregError):
    """Transform matrix is not invertible."""


class InsufficientPairs(SeqregError):
    """Not enough correspondences for the requested estimation."""


class DegenerateConfiguration(SeqregError):
    """Correspondence geometry is rank deficient (e.g. collinear points)."""


class EmptyCorrespondences(SeqregError):
    """Operation requires at least one correspondence pair."""


class ImageTooSmall(SeqregError):
    """Image cannot accommodate the extractor's patch footprint."""


class DimensionMismatch(SeqregError):
    """Descriptor vectors or matrices disagree in dimension."""


class TemplateTooLarge(SeqregError):
    """Correlation template does not fit inside the target image."""


class InvalidPrior(SeqregError):
    """Motion-prior parameters are out of their physical domain."""


class SpecInvalid(SeqregError):
    """Synthetic dataset specification violates its invariants."""


class EmptyBaseline(SeqregError):
    """Match-count report requires a nonempty baseline."""
