"""Exception types shared across the laboratory modules.

Everything derives from ExtlabError so callers can catch the whole family
at the pipeline boundary.  Names follow the failure they signal, grouped
by the module that raises them first.
"""


class ExtlabError(Exception):
    """Base class for all laboratory errors."""


# --- linear algebra / spectral decomposition ---

class DimensionMismatch(ExtlabError):
    pass


class NonrealSpectrum(ExtlabError):
    """The matrix has eigenvalues with a non-negligible imaginary part."""


class NonpositiveEigenvalue(ExtlabError):
    """An eigenvalue is zero or negative; the dissipation argument needs > 0."""


class NotDiagonalizable(ExtlabError):
    """A repeated eigenvalue is defective, or the eigenbasis is numerically unusable."""


class UnknownEigenvalue(ExtlabError):
    """A query value does not match any distinct eigenvalue of the decomposition."""


# --- homogeneous functions ---

class ZeroVector(ExtlabError):
    """Evaluation requested at (numerically) the origin, where H is singular."""


class NonfiniteValue(ExtlabError):
    pass


class NonpositiveValue(ExtlabError):
    """H must be strictly positive away from the origin."""


class NotHomogeneous(ExtlabError):
    """Sampled scaling ratios are inconsistent with a single degree."""


class SingularMatrix(ExtlabError):
    pass


class ExpressionError(ExtlabError):
    """A config-level expression failed to parse or used a disallowed construct."""


# --- dynamics / integration ---

class NonfiniteState(ExtlabError):
    """The integrator state left the floating-point range."""


class MissingBoundConstants(ExtlabError):
    """The perturbation lacks the (c_star, delta) certificate a bound needs."""


class TailEstimateDiverged(ExtlabError):
    """The extinction-time tail estimate did not produce a finite bracket."""


class StepSizeUnderflow(UserWarning):
    """Warning category: step size collapsed before the density floor was reached.

    Not an exception.  The integrators return the partial trajectory with
    stop_reason "blowup" and emit this warning instead of raising.
    """


# --- oracle ---

class BeyondExtinction(ExtlabError):
    """Closed-form evaluation requested past the extinction time."""


class QuadratureNotConverged(ExtlabError):
    pass


class NoConvergence(ExtlabError):
    """Step-halving reference integration failed to reach the agreement target."""


# --- analysis ---

class FrameMismatch(ExtlabError):
    """An operation that needs the symmetric frame was given an incompatible trajectory."""


class InsufficientSamples(ExtlabError):
    pass


class InsufficientRange(ExtlabError):
    """Fit window does not span enough decades to be trustworthy."""


class NonpositiveValues(ExtlabError):
    """Log-log fitting requires strictly positive ordinates."""


class AmbiguousEigenvalue(ExtlabError):
    """Two distinct eigenvalues are equally close to the quotient tail average."""


class NotConverged(ExtlabError):
    """The quotient tail shows no decreasing trend toward an eigenvalue."""


class DegenerateProjection(ExtlabError):
    """The projected trajectory component is numerically zero over the fit window."""


class FitRejected(ExtlabError):
    """A regression did not reach the required quality threshold."""


# --- configuration / io ---

class ConfigInvalid(ExtlabError):
    """Configuration rejected; carries the offending field path."""

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        self.message = message
        super().__init__(f"{field_path}: {message}")


class IoError(ExtlabError):
    """Trajectory or report file could not be written or read."""
