"""
Stationary covariance kernels and SPD linear algebra.

Two kernels are provided, both parametrised by a signal variance ``sigma_f2``
and a lengthscale ``ell``:

    RBF         k(r) = sigma_f2 * exp(-r^2 / (2 ell^2))
    Matern-3/2  k(r) = sigma_f2 * (1 + sqrt(3) r / ell) * exp(-sqrt(3) r / ell)

with ``r = |x - y|`` (Euclidean distance for d > 1).  The general Matern
family

    k_a(r) = sigma_f2 * 2^(1-a) / Gamma(a) * (sqrt(2a) r / ell)^a * K_a(sqrt(2a) r / ell)

reduces to the second line at ``a = 3/2``; only that case is implemented
because it is the only one with closed-form Gaussian embeddings downstream.

Gram matrices are factorised with an unpivoted Cholesky decomposition.  A
failed factorisation is reported with the offending pivot rather than
repaired.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .errors import FactorizationError, InvalidInputError

RBF = "rbf"
MATERN32 = "matern32"
KERNEL_VARIANTS = (RBF, MATERN32)

DEFAULT_NUGGET = 1e-8

_SQRT3 = math.sqrt(3.0)


def _check_variant(variant: str) -> str:
    v = str(variant).lower().replace("-", "").replace("_", "").replace("/", "")
    aliases = {"rbf": RBF, "se": RBF, "gaussian": RBF, "matern32": MATERN32, "matern": MATERN32}
    if v not in aliases:
        raise InvalidInputError(f"unknown kernel variant {variant!r}; expected one of {KERNEL_VARIANTS}")
    return aliases[v]


@dataclass(frozen=True)
class Kernel:
    """Covariance function with amplitude ``sigma_f2`` and lengthscale ``ell``."""

    variant: str
    sigma_f2: float = 1.0
    ell: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "variant", _check_variant(self.variant))
        for name in ("sigma_f2", "ell"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value <= 0.0:
                raise InvalidInputError(f"{name} must be finite and > 0, got {value!r}")
            object.__setattr__(self, name, value)

    @property
    def smoothness(self) -> float:
        """Matern smoothness parameter (infinite for the RBF kernel)."""
        return 1.5 if self.variant == MATERN32 else math.inf

    def replace(self, **changes) -> "Kernel":
        params = {"variant": self.variant, "sigma_f2": self.sigma_f2, "ell": self.ell}
        params.update(changes)
        return Kernel(**params)

    def of_distance(self, r):
        """Evaluate the kernel as a function of distance ``r >= 0``."""
        r = np.asarray(r, dtype=float)
        if self.variant == RBF:
            s = r / self.ell
            return self.sigma_f2 * np.exp(-0.5 * s * s)
        s = _SQRT3 * r / self.ell
        return self.sigma_f2 * (1.0 + s) * np.exp(-s)

    def __call__(self, x, y):
        """Cross-covariance matrix between two point sets (see :func:`kernel_matrix`)."""
        return kernel_matrix(self, x, y)


def _as_points(x) -> np.ndarray:
    """Return an ``(n, d)`` float array; 1-d input is treated as n points in d=1."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a[:, None]
    elif a.ndim != 2:
        raise InvalidInputError(f"points must be 1-d or 2-d, got shape {a.shape}")
    return a


def kernel_eval(k: Kernel, x, y) -> float:
    """Kernel value for a single pair of points of any (equal) dimension."""
    xv = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    yv = np.atleast_1d(np.asarray(y, dtype=float)).ravel()
    if xv.shape != yv.shape:
        raise InvalidInputError(f"dimension mismatch: {xv.shape} vs {yv.shape}")
    if not (np.all(np.isfinite(xv)) and np.all(np.isfinite(yv))):
        raise InvalidInputError("kernel inputs must be finite")
    r = math.sqrt(float(np.dot(xv - yv, xv - yv)))
    return float(k.of_distance(r))


def kernel_matrix(k: Kernel, x, y) -> np.ndarray:
    """Matrix ``K[i, j] = k(x_i, y_j)``.

    ``x`` and ``y`` are either 1-d arrays of scalars or ``(n, d)`` arrays.
    Distances are formed by broadcasting; at the sizes used here (n of a few
    thousand at most) the ``n x m`` temporary is cheap.
    """
    xa, ya = _as_points(x), _as_points(y)
    if xa.shape[1] != ya.shape[1]:
        raise InvalidInputError(f"dimension mismatch: {xa.shape[1]} vs {ya.shape[1]}")
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(ya))):
        raise InvalidInputError("kernel inputs must be finite")
    if xa.shape[1] == 1:
        r = np.abs(xa[:, 0][:, None] - ya[:, 0][None, :])
    else:
        diff = xa[:, None, :] - ya[None, :, :]
        r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return k.of_distance(r)


def cholesky(matrix: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor via LAPACK ``dpotrf``; raises with the failing pivot."""
    a = np.array(matrix, dtype=float, order="F", copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"matrix must be square, got shape {a.shape}")
    factor, info = lapack.dpotrf(a, lower=1, clean=1, overwrite_a=1)
    if info > 0:
        raise FactorizationError(info)
    if info < 0:  # pragma: no cover - argument error inside LAPACK
        raise InvalidInputError(f"dpotrf rejected argument {-info}")
    return np.ascontiguousarray(factor)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GramSystem:
    """Factorised ``K + nugget * I``.

    Build with :func:`gram_matrix` (from a kernel and points) or
    :meth:`from_matrix` (from an explicit SPD matrix).
    """

    matrix: np.ndarray
    nugget: float
    factor: np.ndarray
    points: np.ndarray | None = field(default=None)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_matrix(cls, matrix, nugget: float = 0.0, points=None) -> "GramSystem":
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInputError(f"matrix must be square, got shape {m.shape}")
        if nugget < 0 or not math.isfinite(nugget):
            raise InvalidInputError(f"nugget must be finite and >= 0, got {nugget!r}")
        m = m + nugget * np.eye(m.shape[0])
        return cls(
            matrix=_freeze(m),
            nugget=float(nugget),
            factor=_freeze(cholesky(m)),
            points=None if points is None else _freeze(points),
        )


def gram_matrix(k: Kernel, points, nugget: float = DEFAULT_NUGGET) -> GramSystem:
    """Gram matrix of ``k`` on ``points`` plus ``nugget`` on the diagonal, factorised."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0 or pts.shape[0] < 1:
        raise InvalidInputError("gram_matrix needs at least one point")
    K = kernel_matrix(k, pts, pts)
    # Exact symmetry; broadcasting already gives it but keep the invariant explicit.
    K = 0.5 * (K + K.T)
    return GramSystem.from_matrix(K, nugget=nugget, points=pts)


def spd_solve(g: GramSystem, rhs) -> np.ndarray:
    """Solve ``K x = rhs`` with two triangular solves on the Cholesky factor."""
    b = np.asarray(rhs, dtype=float)
    if b.shape[0] != g.n:
        raise InvalidInputError(f"rhs has length {b.shape[0]}, system has size {g.n}")
    z = solve_triangular(g.factor, b, lower=True, check_finite=False)
    return solve_triangular(g.factor.T, z, lower=False, check_finite=False)


def half_solve(g: GramSystem, rhs) -> np.ndarray:
    """``L^{-1} rhs`` where ``K = L L^T``; ``|half_solve(g, b)|^2 = b^T K^{-1} b``."""
    b = np.asarray(rhs, dtype=float)
    if b.shape[0] != g.n:
        raise InvalidInputError(f"rhs has length {b.shape[0]}, system has size {g.n}")
    return solve_triangular(g.factor, b, lower=True, check_finite=False)


def log_det(g: GramSystem) -> float:
    """``log |K|`` from the Cholesky diagonal."""
    return 2.0 * float(np.sum(np.log(np.diag(g.factor))))
