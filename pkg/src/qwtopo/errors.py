"""Exception types shared across the package."""


class QwtopoError(Exception):
    """Base class for all package-specific errors."""


class GaplessSystem(QwtopoError):
    """Band gap closed (or below threshold): Chern number undefined."""


class NonConvergent(QwtopoError):
    """Lattice field-strength sum did not land on an integer."""


class DegenerateDynamics(QwtopoError):
    """Flat bands: the walker does not spread, no evolution time exists."""


class ClassUnreachable(QwtopoError):
    """Rejection sampling could not find a requested Chern class."""


class DomainMismatch(QwtopoError):
    """Operation applied to a field/profile in the wrong domain."""


class TooFewSamples(QwtopoError):
    """Dataset too small to split."""


class BadMagic(QwtopoError):
    """File does not start with the expected magic bytes."""


class TruncatedFile(QwtopoError):
    """File ends before the header-declared payload."""


class VersionMismatch(QwtopoError):
    """File format version not supported."""


class ShapeMismatch(QwtopoError):
    """Tensor shape incompatible with a layer."""


class DimMismatch(QwtopoError):
    """Feature dimension does not match the SOM codebook."""


class NonFiniteLoss(QwtopoError):
    """Training loss became NaN/inf; carries the iteration index."""

    def __init__(self, iteration: int):
        super().__init__(f"non-finite loss at iteration {iteration}")
        self.iteration = iteration


class DegenerateRank(QwtopoError):
    """Requested more principal components than the numerical rank."""


class NoTransition(QwtopoError):
    """A parameter row contains no label change to locate a boundary in."""


class LengthMismatch(QwtopoError):
    """Parallel input sequences differ in length."""


class EmptyInput(QwtopoError):
    """No usable entries were supplied."""
