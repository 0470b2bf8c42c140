"""Exception and warning types shared across the package."""


class WaveromError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(WaveromError):
    """Invalid or inconsistent experiment configuration."""


class NonPositiveVelocity(WaveromError):
    """A velocity field evaluated to a non-positive node value."""


class DomainTooSmall(WaveromError):
    """A model feature does not fit inside the grid's domain."""


class EigUnavailable(WaveromError):
    """Spectral path requested above the eigendecomposition size cap."""


class NyquistViolation(WaveromError, Warning):
    """Sampling interval exceeds the Nyquist limit for the pulse.

    Issued through ``warnings.warn`` by default; callers may escalate it
    to a hard error via ``strict`` flags.
    """


class CflViolation(WaveromError):
    """Time step too large for stable leapfrog propagation."""


class InsufficientRecordLength(WaveromError):
    """Recorded traces do not cover the requested sample range."""


class MassNotSPD(WaveromError):
    """Block Cholesky hit a non-positive-definite diagonal block."""

    def __init__(self, block_index, message=None):
        self.block_index = block_index
        super().__init__(message or f"mass matrix not SPD at block {block_index}")


class BandExceedsMatrix(WaveromError):
    """Requested band depth is larger than the matrix allows."""


class IndexOutOfRange(WaveromError):
    """Restriction index outside 1..n."""


class ResidualShorterThanN(WaveromError):
    """Residual vector has fewer entries than there are parameters."""


class SingularSystem(WaveromError):
    """Unregularized normal equations are numerically singular."""


class JacobianRankWarning(Warning):
    """Finite-difference Jacobian is numerically rank deficient."""
