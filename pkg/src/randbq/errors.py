"""Exception hierarchy shared by every module in the package."""


class BQError(Exception):
    """Base class for all package errors."""


class InvalidInputError(BQError, ValueError):
    """An argument is non-finite, out of range, or has the wrong shape."""


class FactorizationError(BQError):
    """Cholesky factorization failed.

    ``pivot`` is the 1-based index of the leading minor that was not
    positive definite, as reported by LAPACK ``potrf``.
    """

    def __init__(self, pivot, message=None):
        self.pivot = int(pivot)
        super().__init__(
            message or f"matrix is not numerically positive definite (pivot {self.pivot})"
        )


class UnsupportedPairError(BQError, NotImplementedError):
    """No closed form exists for this (kernel, measure) pair.

    Use :func:`randbq.measures.kernel_mean_numeric` instead.
    """


class AccuracyError(BQError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, estimate, error_bound, message=None):
        self.estimate = float(estimate)
        self.error_bound = float(error_bound)
        super().__init__(
            message
            or f"quadrature did not converge: estimate={self.estimate!r}, "
            f"error bound={self.error_bound!r}"
        )


class NumericalConsistencyError(BQError):
    """Posterior variance came out clearly negative.

    This signals a mismatch between the kernel and the embedding (or an
    inaccurate prior integral variance), not a rounding artefact.
    """


class InfiniteFillError(InvalidInputError):
    """Fill distance of an empty point set is unbounded."""


class UndefinedRatioError(BQError, ZeroDivisionError):
    """The within-design variance is zero, so the bound ratio is undefined."""


class ChainAbortedError(BQError):
    """An MCMC run hit a numerical error; ``chain`` holds the partial trace."""

    def __init__(self, message, chain):
        self.chain = chain
        super().__init__(message)


class ExperimentError(BQError):
    """An experiment step failed; carries the (experiment, n, seed) context."""

    def __init__(self, message, experiment=None, n=None, seed=None):
        self.experiment = experiment
        self.n = n
        self.seed = seed
        super().__init__(f"{message} [experiment={experiment}, n={n}, seed={seed}]")
