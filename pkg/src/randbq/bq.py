"""Bayesian quadrature posterior of an integral under a zero-mean GP prior."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NumericalConsistencyError
from .kernels import DEFAULT_NUGGET, Kernel, gram_matrix, half_solve, spd_solve
from .measures import Embedding

logger = logging.getLogger(__name__)

# Raw variances in [-NEG_VARIANCE_TOL, 0) are rounding noise and clamp to 0;
# anything lower is an inconsistency between kernel and embedding.
NEG_VARIANCE_TOL = 1e-8


@dataclass(frozen=True)
class Design:
    """Design points, integrand values at them, and where the points came from."""

    points: np.ndarray
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).ravel()
        v = np.asarray(self.values, dtype=float).ravel()
        if p.shape != v.shape:
            raise InvalidInputError(f"{p.size} points but {v.size} values")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise InvalidInputError("design points and values must be finite")
        p.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.points.size

    @classmethod
    def from_function(cls, f, points, provenance=None) -> "Design":
        pts = np.asarray(points, dtype=float)
        return cls(pts, np.asarray(f(pts), dtype=float), dict(provenance or {}))

    def prefix(self, n: int) -> "Design":
        return Design(self.points[:n], self.values[:n], dict(self.provenance, n=n))


@dataclass(frozen=True)
class QuadraturePosterior:
    """Gaussian posterior ``N(mean, variance)`` of the integral."""

    mean: float
    variance: float
    weights: np.ndarray
    n: int
    prior_variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def _check(k: Kernel, emb: Embedding):
    if emb.kernel != k:
        raise InvalidInputError(f"embedding was built for {emb.kernel!r}, not {k!r}")


def _prepare(k, emb, d, nugget):
    _check(k, emb)
    g = gram_matrix(k, d.points, nugget)
    m = np.asarray(emb.mean(d.points), dtype=float)
    return g, m


def bq_posterior(k: Kernel, emb: Embedding, d: Design,
                 nugget: float = DEFAULT_NUGGET) -> QuadraturePosterior:
    """Posterior mean ``m^T K^-1 f`` and variance ``Pi(Pi(k)) - m^T K^-1 m``.

    The variance uses ``|L^-1 m|^2`` from a single triangular solve; the
    weights ``K^-1 m`` come from the second solve.
    """
    pv = emb.prior_integral_variance
    if d.n == 0:
        return QuadraturePosterior(0.0, pv, np.zeros(0), 0, pv)
    g, m = _prepare(k, emb, d, nugget)
    v = half_solve(g, m)
    raw = pv - float(v @ v)
    if raw < -NEG_VARIANCE_TOL:
        raise NumericalConsistencyError(
            f"posterior variance {raw:.3e} < -{NEG_VARIANCE_TOL:g} (n={d.n}); "
            "the embedding does not match the kernel"
        )
    if raw < 0.0:
        logger.info("clamping posterior variance %.3e to 0 (n=%d)", raw, d.n)
        raw = 0.0
    w = spd_solve(g, m)
    w.setflags(write=False)
    return QuadraturePosterior(
        mean=float(w @ d.values), variance=raw, weights=w, n=d.n, prior_variance=pv
    )


def worst_case_error(p: QuadraturePosterior) -> float:
    """Worst-case error over the RKHS unit ball: the posterior standard deviation."""
    return math.sqrt(p.variance)


def variance_crosscheck(k: Kernel, emb: Embedding, d: Design,
                        nugget: float = DEFAULT_NUGGET) -> float:
    """Variance in the expanded form ``Pi(Pi(k)) - 2 w^T m + w^T K w``.

    ``K`` includes the nugget, so this equals :func:`bq_posterior`'s variance
    up to rounding (before clamping).
    """
    pv = emb.prior_integral_variance
    if d.n == 0:
        return pv
    g, m = _prepare(k, emb, d, nugget)
    w = spd_solve(g, m)
    return pv - 2.0 * float(w @ m) + float(w @ (g.matrix @ w))
