"""Exception hierarchy shared by all modules."""


class LocIndexError(Exception):
    """Base class for every error raised by the package."""


class SpectralTailError(LocIndexError):
    """A sampled function has too much energy near the Nyquist band."""


class NonRealFieldError(LocIndexError):
    """A vector field that must be real-valued is not."""


class DegenerateFixedPointError(LocIndexError):
    """A fixed point with |1 - psi'| below tolerance was found."""


class ContinuumOfFixedPointsError(LocIndexError):
    """Every point of the circle is fixed (identity map)."""


class InsufficientDepthError(LocIndexError):
    """A symbol does not store enough homogeneous components."""


class NonEllipticError(LocIndexError):
    """A leading symbol vanishes (or is not positive where required)."""


class TruncationError(LocIndexError):
    """The Fourier truncation is too small for the requested operation."""


class NotHermitianError(LocIndexError):
    """A matrix that must be Hermitian is not."""


class ConvergenceError(LocIndexError):
    """An iterative method did not converge."""


class NonPositiveSpectrumError(LocIndexError):
    """Complex powers were requested for a spectrum that is not positive."""


class SpectralGapError(LocIndexError):
    """An eigenvalue lies too close to zero for the sign to be defined."""


class NotIdempotentError(LocIndexError):
    """An operator or element that must be idempotent is not."""


class IndexRouteDisagreementError(LocIndexError):
    """Two independent index computations returned different integers."""


class RankAmbiguityError(LocIndexError):
    """An eigenvalue sits too close to the rank threshold."""


class WindingError(LocIndexError):
    """A winding number could not be computed reliably."""


class EstimatorDisagreementError(LocIndexError):
    """The two continuation estimators returned different residues."""


class FitResidualError(LocIndexError):
    """A least-squares fit left a residual above tolerance."""


class PoleOrderError(LocIndexError):
    """A continuation showed a pole of order two or higher."""


class IllConditionedError(LocIndexError):
    """An operator is too ill-conditioned to invert."""


class SupportError(LocIndexError):
    """A crossed-product element violates its support requirements."""


class ModelError(LocIndexError):
    """A foliated model or scenario is inconsistent."""


class NormalizationError(LocIndexError):
    """A cutoff or vector fails its normalization condition."""


class ScenarioSchemaError(LocIndexError):
    """A scenario file does not match the schema.

    Attributes:
        pointer: JSON pointer to the offending location.
    """

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer
        self.message = message
