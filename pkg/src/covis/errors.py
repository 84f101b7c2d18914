"""Exception types shared across the package.

Plain invalid arguments (bad shapes, out-of-range parameters) raise
``ValueError`` as usual; the classes here mark failure modes a caller may
want to catch and handle individually, e.g. skipping a pair in a benchmark
run instead of aborting it.
"""


class CovisError(Exception):
    """Base class for all package-specific errors."""


class InsufficientDataError(CovisError):
    """Too few correspondences for the requested estimation."""


class DegenerateConfigurationError(CovisError):
    """Input geometry does not constrain the model (coincident points,
    collinear sample, planar scene for a fundamental-matrix solve, ...)."""


class EstimationFailedError(CovisError):
    """Robust estimation ran but produced no acceptable model."""


class StageFailedError(CovisError):
    """Every matcher of a pipeline stage failed."""


class PipelineError(CovisError):
    """Unrecoverable failure while running the two-stage pipeline."""


class MatcherUnavailableError(CovisError):
    """External matcher worker could not be launched or reached."""


class ProtocolError(CovisError):
    """External matcher worker sent a malformed or inconsistent response."""


class MatchTimeoutError(CovisError):
    """External matcher worker did not answer within the per-pair timeout."""


class InfeasibleSceneError(CovisError):
    """Synthetic scene constraints could not be satisfied by sampling."""


class UnsupportedMetricError(CovisError):
    """A metric was requested without the ground truth it needs."""
