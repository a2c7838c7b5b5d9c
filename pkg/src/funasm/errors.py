"""Exception types shared across the package.

``ConfigError`` maps to CLI exit code 2, the numerical failures
(``SolverError``, ``EigendecompositionError``, ``GradientEvaluationError``)
to exit code 3.
"""


class SpaceMismatchError(ValueError):
    """Two fields (or a field and an operator) live on different grids."""


class SingularRieszError(ValueError):
    """A dual coefficient sits on a node with zero quadrature weight."""


class NotOrthonormalError(ValueError):
    """An operation requires an orthonormal basis and got something else."""


class EmptyBasisError(ValueError):
    """Orthonormalization received no vectors, or only zero vectors."""


class NotTraceClassError(ValueError):
    """Requested covariance spectrum is not summable."""


class ConfigError(ValueError):
    """Invalid run configuration (bad key, out-of-range value, missing file)."""


class SolverError(RuntimeError):
    """Linear solver failed to converge.

    Carries the final relative residual and the iteration count.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class EigendecompositionError(RuntimeError):
    """Eigendecomposition produced results outside numerical tolerance."""


class GradientEvaluationError(RuntimeError):
    """A functional failed during gradient collection.

    Carries the sample index and the path where the offending input field
    was saved for reproduction.
    """

    def __init__(self, message, sample_index=None, input_path=None):
        super().__init__(message)
        self.sample_index = sample_index
        self.input_path = input_path
