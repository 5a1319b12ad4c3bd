"""Exception types shared across the toolkit."""


class LayeredOUError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(LayeredOUError):
    """Parameter shapes do not match the model structure."""


class DegenerateEigensystem(LayeredOUError):
    """Pull matrix is not diagonalizable within tolerance (near-equal pulls
    in one site's layer chain). Callers may jitter the pulls and retry."""


class NonFiniteResult(LayeredOUError):
    """A computation produced non-finite values (overflow, invalid
    correlation structure). Samplers treat this as log-likelihood = -inf."""


class NotStationary(LayeredOUError):
    """The system has an eigenvalue with non-negative real part."""


class DomainError(LayeredOUError):
    """Parameter value outside the bijectivity domain of a reparametrization."""


class NotApplicable(LayeredOUError):
    """Operation undefined for this model structure (e.g. pull reshuffling
    with regional pulls)."""


class AllStartsFailed(LayeredOUError):
    """Every optimizer start produced a non-finite likelihood."""


class UnstableEstimate(LayeredOUError):
    """Importance-sampling estimate has effective sample size below threshold."""

    def __init__(self, message, log_bml=None, mc_se=None, ess=None):
        super().__init__(message)
        self.log_bml = log_bml
        self.mc_se = mc_se
        self.ess = ess


class EmptyCategory(LayeredOUError):
    """A categorization contains a category with no models."""


class ParseError(LayeredOUError):
    """Malformed input file."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ValidationError(LayeredOUError):
    """Input file parsed but contains invalid values."""


class DuplicateTime(LayeredOUError):
    """Forcing series contains duplicated time points."""
