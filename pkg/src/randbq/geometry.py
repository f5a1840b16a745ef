"""Fill distances, Mahalanobis concentration and log-log rate fits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InfiniteFillError, InvalidInputError
from .measures import Gaussian
from .sampling import GAUSSIAN_INFLATED, Proposal

EXACT_1D = "exact-1d"


@dataclass(frozen=True)
class FillReport:
    n: int
    radius: float
    fill: float
    method: str = EXACT_1D  # or "grid(<resolution>)"


@dataclass(frozen=True)
class RateFit:
    """OLS fit of ``log value = intercept + slope * log n``."""

    slope: float
    intercept: float
    r_squared: float
    pairs: tuple

    def predict(self, n) -> np.ndarray:
        return np.exp(self.intercept) * np.asarray(n, dtype=float) ** self.slope


def _check_radius(R: float) -> float:
    R = float(R)
    if not (math.isfinite(R) and R > 0):
        raise InvalidInputError(f"radius must be finite and > 0, got {R!r}")
    return R


def fill_distance_1d(points, R: float) -> float:
    """Exact ``sup_{|x| <= R} min_j |x - x_j|``.

    The distance-to-nearest-point function is piecewise linear with maxima
    at the interval ends and at midpoints between consecutive sorted points,
    so only those candidates are checked.  Points outside ``[-R, R]`` still
    count as centres.
    """
    R = _check_radius(R)
    x = np.sort(np.asarray(points, dtype=float).ravel())
    if x.size == 0:
        raise InfiniteFillError("fill distance of an empty design is unbounded")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("points must be finite")
    mids = 0.5 * (x[1:] + x[:-1])
    cand = np.concatenate(([-R, R], mids[(mids >= -R) & (mids <= R)]))
    idx = np.clip(np.searchsorted(x, cand), 1, x.size - 1) if x.size > 1 else np.zeros(cand.size, int)
    d = np.abs(cand - x[idx])
    if x.size > 1:
        d = np.minimum(d, np.abs(cand - x[idx - 1]))
    return float(d.max())


def fill_distance_grid(points, R: float, resolution: int = 10**6, chunk: int = 10**5) -> float:
    """Grid-scan approximation of the fill distance (error at most one grid step)."""
    R = _check_radius(R)
    x = np.sort(np.asarray(points, dtype=float).ravel())
    if x.size == 0:
        raise InfiniteFillError("fill distance of an empty design is unbounded")
    grid = np.linspace(-R, R, int(resolution))
    best = 0.0
    for s in range(0, grid.size, chunk):
        g = grid[s:s + chunk]
        i = np.searchsorted(x, g)
        lo = np.abs(g - x[np.clip(i - 1, 0, x.size - 1)])
        hi = np.abs(g - x[np.clip(i, 0, x.size - 1)])
        best = max(best, float(np.minimum(lo, hi).max()))
    return best


def fill_report(points, R: float) -> FillReport:
    return FillReport(n=int(np.size(points)), radius=float(R), fill=fill_distance_1d(points, R))


def mahalanobis_fraction(points, scale: float) -> float:
    """Fraction of points with ``x^2 / scale <= 1``."""
    x = np.asarray(points, dtype=float).ravel()
    if x.size == 0:
        raise InvalidInputError("mahalanobis_fraction needs at least one point")
    if not (math.isfinite(scale) and scale > 0):
        raise InvalidInputError(f"scale must be > 0, got {scale!r}")
    return float(np.count_nonzero(x * x / scale <= 1.0)) / x.size


def rate_fit(pairs) -> RateFit:
    """Least squares on ``(log n, log value)``; needs three or more pairs."""
    pairs = tuple((int(n), float(v)) for n, v in pairs)
    if len(pairs) < 3:
        raise InvalidInputError(f"rate_fit needs >= 3 pairs, got {len(pairs)}")
    n = np.array([p[0] for p in pairs], dtype=float)
    v = np.array([p[1] for p in pairs])
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise InvalidInputError("rate_fit values must be finite and > 0")
    if np.any(np.diff(n) <= 0) or n[0] <= 0:
        raise InvalidInputError("rate_fit n must be positive and strictly increasing")
    lx, ly = np.log(n), np.log(v)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (intercept + slope * lx)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(resid @ resid) / ss_tot
    return RateFit(float(slope), float(intercept), r2, pairs)


def effective_radius(p: Proposal, n: int) -> float:
    """Radius of the ball the design is expected to fill at size ``n``.

    Gaussian targets: ``sqrt(a * log n * variance)`` with ``a = alpha`` when the
    proposal carries the alpha factor and 1 otherwise.  Student targets:
    ``scale * n ** (alpha / (alpha + nu + 1/2))``.
    """
    if n < 2:
        raise InvalidInputError("effective_radius needs n >= 2")
    t = p.target
    if isinstance(t, Gaussian):
        a = p.alpha if (p.family == GAUSSIAN_INFLATED and p.include_alpha_factor) else 1.0
        return math.sqrt(a * math.log(n) * t.variance)
    return t.scale * n ** (0.5 * p.student_exponent)


def write_fill_csv(path, rows, header_comment: str | None = None) -> None:
    """Rows of ``(family, n, R_n, median_h, slope)``."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["family", "n", "R_n", "median_h", "slope"])
        for r in rows:
            w.writerow([r[0], r[1]] + [repr(float(v)) for v in r[2:]])
