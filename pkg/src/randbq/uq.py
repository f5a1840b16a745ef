"""
Aggregation of posteriors over repeated random designs.

Each repetition ``i`` yields a Gaussian ``N(mean_i, var_i)`` for the integral.
Across ``R`` repetitions the law of total variance gives

    total = (1/R) sum var_i + (1/R) sum (mean_i - grand_mean)^2

(population-style second moment).  Sums use :func:`math.fsum` so the tiny
variances involved do not lose digits.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, UndefinedRatioError


@dataclass(frozen=True)
class RepetitionSet:
    means: np.ndarray
    variances: np.ndarray
    n: int = 0
    config_hash: str = ""

    def __post_init__(self):
        m = np.asarray(self.means, dtype=float).ravel()
        v = np.asarray(self.variances, dtype=float).ravel()
        if m.size < 1 or m.shape != v.shape:
            raise InvalidInputError("need R >= 1 matching (mean, variance) components")
        if np.any(v < 0) or not (np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
            raise InvalidInputError("component variances must be finite and >= 0")
        m.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def R(self) -> int:
        return self.means.size

    @classmethod
    def from_pairs(cls, pairs, n: int = 0, config_hash: str = "") -> "RepetitionSet":
        pairs = list(pairs)
        return cls([p[0] for p in pairs], [p[1] for p in pairs], n, config_hash)


@dataclass(frozen=True)
class TotalVarianceReport:
    grand_mean: float
    within: float
    between: float
    total: float


def total_variance(reps: RepetitionSet) -> TotalVarianceReport:
    R = reps.R
    grand = math.fsum(reps.means) / R
    within = math.fsum(reps.variances) / R
    between = math.fsum((m - grand) ** 2 for m in reps.means.tolist()) / R
    return TotalVarianceReport(grand, within, between, within + between)


def mixture_quantiles(reps: RepetitionSet, S: int = 100, probs=(0.025, 0.975), seed: int = 0) -> list:
    """Quantiles of the equal-weight Gaussian mixture from ``R * S`` samples.

    Empirical quantiles use linear interpolation between order statistics
    (numpy's default ``"linear"`` method).
    """
    if int(S) < 1:
        raise InvalidInputError("S must be >= 1")
    p = np.asarray(probs, dtype=float)
    if np.any((p <= 0) | (p >= 1)) or np.any(np.diff(p) < 0):
        raise InvalidInputError("probs must be sorted and lie in (0, 1)")
    rng = np.random.Generator(np.random.PCG64(seed))
    eps = rng.standard_normal((reps.R, int(S)))
    z = reps.means[:, None] + np.sqrt(reps.variances)[:, None] * eps
    return [float(q) for q in np.quantile(z.ravel(), p, method="linear")]


@dataclass(frozen=True)
class BoundCheck:
    ratio: float
    passed: bool
    limit: float


def variance_bound_check(reps: RepetitionSet, f_norm_bound: float = 0.0,
                         c_check: float = 10.0) -> BoundCheck:
    """Compare ``total / within`` with ``c_check * (1 + f_norm_bound^2)``.

    A diagnostic only; the constant is a configured guess, not a theorem's.
    """
    rep = total_variance(reps)
    if rep.within == 0.0:
        raise UndefinedRatioError("within-design variance is zero; ratio undefined")
    ratio = rep.total / rep.within
    limit = c_check * (1.0 + f_norm_bound ** 2)
    return BoundCheck(ratio, ratio <= limit, limit)


def write_repetitions_csv(path, reps: RepetitionSet, header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "mean", "var"])
        for i, (m, v) in enumerate(zip(reps.means.tolist(), reps.variances.tolist())):
            w.writerow([i, repr(m), repr(v)])
