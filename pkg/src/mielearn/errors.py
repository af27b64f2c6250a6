"""Exception types shared across the package."""


class MielearnError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MielearnError):
    """Invalid configuration (bad geometry, malformed config file, ...)."""


class ZeroProbabilityOutcome(MielearnError):
    """Requested conditioning on an environment outcome with p below threshold."""


class SystemTooLarge(MielearnError):
    """Qubit count exceeds the statevector or enumeration cap."""


class UnknownSymbol(MielearnError):
    """Tokenizer received a value outside {+1, -1}."""


class NumericalFailure(MielearnError):
    """Degenerate numerics (vanishing trace, violated eigenvalue floor, ...)."""


class ShapeMismatch(MielearnError):
    """Inconsistent array shapes between a cache and its consumer."""


class EmptyBatch(MielearnError):
    """Loss evaluation over an empty batch."""


class NotPSD(MielearnError):
    """Matrix expected to be positive semidefinite has a negative eigenvalue."""


class SingularEstimator(MielearnError):
    """Estimator density matrix too close to singular for a matrix logarithm."""


class IncompatibleArtifacts(MielearnError):
    """Checkpoint and dataset disagree on system size, probes or format."""
