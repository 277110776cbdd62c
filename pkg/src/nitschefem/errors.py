"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A run configuration file is malformed or violates a constraint."""


class DegeneratePencilError(RuntimeError):
    """A matrix pencil has no finite eigenvalue."""


class PencilSizeError(ValueError):
    """A trace eigenproblem exceeds the dense-solve size budget."""


class NotPositiveDefiniteError(RuntimeError):
    """A symmetric factorization failed; the system matrix is not SPD.

    For a Nitsche system this typically signals a penalty constant below
    the coercivity threshold.
    """


class SolveError(RuntimeError):
    """A linear solve finished without meeting its residual contract."""
