"""
Integration measures and kernel mean embeddings.

For a kernel ``k`` and probability measure ``P`` the embedding is
``m(x) = int k(x, y) dP(y)`` and the initial error (prior variance of the
integral) is ``int int k(x, y) dP(x) dP(y)``.  Both are available in closed
form for the RBF and Matern-3/2 kernels against the standard normal; every
other pair goes through adaptive quadrature.

Matern-3/2 against N(0, 1), with ``lam = sqrt(3) / ell``::

    m(x) = sigma_f2 * exp(-x^2/2) / sqrt(2 pi) * [T(lam - x) + T(lam + x)]
    T(b) = I0(b) + lam * I1(b)
    I0(b) = sqrt(pi/2) * exp(b^2/2) * erfc(b / sqrt(2)),   I1(b) = 1 - b * I0(b)

    var = sigma_f2 / sqrt(pi) * [J0 + lam * J1]
    J0 = sqrt(pi) * exp(lam^2) * erfc(lam),   J1 = 2 - 2 * lam * J0

``exp(b^2/2) * erfc(b/sqrt(2))`` is evaluated as ``erfcx(b/sqrt(2))`` for
``b >= 0`` and with the Gaussian prefactor folded into the exponent for
``b < 0``, so neither branch overflows far in the tails.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy import integrate, special

from .errors import AccuracyError, InvalidInputError, UnsupportedPairError
from .kernels import MATERN32, RBF, Kernel

logger = logging.getLogger(__name__)

_SQRT2 = math.sqrt(2.0)
_SQRT3 = math.sqrt(3.0)
_SQRT_PI = math.sqrt(math.pi)
_SQRT_HALF_PI = math.sqrt(0.5 * math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------


def _positive(name, value):
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise InvalidInputError(f"{name} must be finite and > 0, got {value!r}")
    return value


@dataclass(frozen=True)
class Gaussian:
    """Normal distribution N(mean, variance) on the real line."""

    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if not math.isfinite(float(self.mean)):
            raise InvalidInputError("mean must be finite")
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "variance", _positive("variance", self.variance))

    @property
    def center(self) -> float:
        return self.mean

    @property
    def spread(self) -> float:
        return math.sqrt(self.variance)

    @property
    def base_variance(self) -> float:
        return self.variance


@dataclass(frozen=True)
class StudentT:
    """Centred Student-t with ``nu`` degrees of freedom and scale ``scale``.

    The density is ``t_nu(x / scale) / scale``.
    """

    nu: float
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "nu", _positive("nu", self.nu))
        object.__setattr__(self, "scale", _positive("scale", self.scale))

    @property
    def center(self) -> float:
        return 0.0

    @property
    def spread(self) -> float:
        return self.scale

    @property
    def base_variance(self) -> float:
        """Square of the scale (the 1x1 scale matrix of the t family)."""
        return self.scale * self.scale

    @property
    def log_norm_const(self) -> float:
        nu = self.nu
        return (
            math.lgamma(0.5 * (nu + 1.0))
            - math.lgamma(0.5 * nu)
            - 0.5 * math.log(nu * math.pi)
            - math.log(self.scale)
        )


Measure = Union[Gaussian, StudentT]


def density(m: Measure, x):
    """Probability density of ``m`` at ``x`` (scalar or array)."""
    xa = np.asarray(x, dtype=float)
    if isinstance(m, Gaussian):
        z = (xa - m.mean) / m.spread
        out = _INV_SQRT_2PI / m.spread * np.exp(-0.5 * z * z)
    elif isinstance(m, StudentT):
        z = xa / m.scale
        out = np.exp(m.log_norm_const - 0.5 * (m.nu + 1.0) * np.log1p(z * z / m.nu))
    else:
        raise InvalidInputError(f"unknown measure {m!r}")
    return float(out) if out.ndim == 0 else out


def sample(m: Measure, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` variates; Student-t uses ``Z / sqrt(chi2_nu / nu)``."""
    if isinstance(m, Gaussian):
        return m.mean + m.spread * rng.standard_normal(size)
    z = rng.standard_normal(size)
    w = rng.chisquare(m.nu, size)
    return m.scale * z / np.sqrt(w / m.nu)


def tail_halfwidth(m: Measure, rel_tol: float) -> float:
    """Half-width ``c * spread`` outside which the measure has mass below ``rel_tol / 10``."""
    if isinstance(m, Gaussian):
        c = math.sqrt(2.0 * math.log(20.0 / rel_tol))
    else:
        nu = m.nu
        # t_nu(z) <= c2 * |z|^-(nu+1), so P(|Z| > c) <= 2 c2 c^-nu / nu.
        c2 = math.exp(m.log_norm_const + math.log(m.scale) + 0.5 * (nu + 1.0) * math.log(nu))
        c = (20.0 * c2 / (rel_tol * nu)) ** (1.0 / nu)
    return c * m.spread


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def _is_standard_normal(m) -> bool:
    return isinstance(m, Gaussian) and m.mean == 0.0 and m.variance == 1.0


def _check_closed_pair(k: Kernel, m: Measure):
    if not _is_standard_normal(m) or k.variant not in (RBF, MATERN32):
        raise UnsupportedPairError(
            f"no closed form for {k.variant} against {m!r}; use kernel_mean_numeric"
        )


def _scaled_gauss_i0(beta, x):
    """``exp(-x^2/2) * I0(beta)`` without overflow."""
    beta = np.asarray(beta, dtype=float)
    x = np.asarray(x, dtype=float)
    pos = beta >= 0.0
    out = np.empty(np.broadcast(beta, x).shape)
    bp = np.where(pos, beta, 0.0)
    out_pos = _SQRT_HALF_PI * np.exp(-0.5 * x * x) * special.erfcx(bp / _SQRT2)
    bn = np.where(pos, 0.0, beta)
    out_neg = _SQRT_HALF_PI * np.exp(0.5 * (bn * bn - x * x)) * special.erfc(bn / _SQRT2)
    out[...] = np.where(pos, out_pos, out_neg)
    return out


def _matern32_gauss_mean(x, lam):
    x = np.asarray(x, dtype=float)
    gx = np.exp(-0.5 * x * x)
    total = np.zeros_like(x)
    for beta in (lam - x, lam + x):
        e0 = _scaled_gauss_i0(beta, x)
        # exp(-x^2/2) * T(beta) with T = I0 + lam * (1 - beta * I0)
        total = total + e0 + lam * (gx - beta * e0)
    return _INV_SQRT_2PI * total


def kernel_mean_closed(k: Kernel, m: Measure, x):
    """Closed-form embedding ``m(x)`` for RBF or Matern-3/2 against N(0, 1)."""
    _check_closed_pair(k, m)
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)):
        raise InvalidInputError("x must be finite")
    if k.variant == RBF:
        l2 = k.ell * k.ell
        out = k.sigma_f2 * math.sqrt(l2 / (l2 + 1.0)) * np.exp(-0.5 * xa * xa / (l2 + 1.0))
    else:
        out = k.sigma_f2 * _matern32_gauss_mean(xa, _SQRT3 / k.ell)
    return float(out) if out.ndim == 0 else out


def initial_error_closed(k: Kernel, m: Measure) -> float:
    """Closed-form ``int int k dP dP`` for RBF or Matern-3/2 against N(0, 1)."""
    _check_closed_pair(k, m)
    if k.variant == RBF:
        l2 = k.ell * k.ell
        return k.sigma_f2 * math.sqrt(l2 / (l2 + 2.0))
    lam = _SQRT3 / k.ell
    j0 = _SQRT_PI * float(special.erfcx(lam))
    j1 = 2.0 - 2.0 * lam * j0
    return k.sigma_f2 / _SQRT_PI * (j0 + lam * j1)


# ---------------------------------------------------------------------------
# numeric embeddings
# ---------------------------------------------------------------------------


def _kernel_halfwidth(k: Kernel, rel_tol: float) -> float:
    """Distance beyond which ``k(r) / sigma_f2`` is below ``rel_tol * 1e-3``."""
    eps = rel_tol * 1e-3
    if k.variant == RBF:
        return k.ell * math.sqrt(2.0 * math.log(1.0 / eps))
    # (1 + s) e^-s <= eps; two fixed-point steps of s = log((1 + s) / eps) suffice.
    s = math.log(1.0 / eps)
    for _ in range(3):
        s = math.log((1.0 + s) / eps)
    return k.ell * s / _SQRT3


def _scalar_integrand(k: Kernel, m: Measure, x: float) -> Callable[[float], float]:
    sf2, ell = k.sigma_f2, k.ell
    if isinstance(m, Gaussian):
        mu, sd = m.mean, m.spread
        c = _INV_SQRT_2PI / sd

        def dens(y):
            z = (y - mu) / sd
            return c * math.exp(-0.5 * z * z)

    else:
        lc, nu, sc = m.log_norm_const, m.nu, m.scale
        power = -0.5 * (nu + 1.0)

        def dens(y):
            z = y / sc
            return math.exp(lc + power * math.log1p(z * z / nu))

    if k.variant == RBF:
        inv2l2 = 0.5 / (ell * ell)

        def f(y):
            d = x - y
            return sf2 * math.exp(-d * d * inv2l2) * dens(y)

    else:
        a = _SQRT3 / ell

        def f(y):
            s = a * abs(x - y)
            return sf2 * (1.0 + s) * math.exp(-s) * dens(y)

    return f


def _quad(f, lo, hi, points, rel_tol, limit=1000):
    pts = sorted({p for p in points if lo < p < hi})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        res = integrate.quad(
            f, lo, hi, points=pts or None, epsabs=0.0, epsrel=rel_tol, limit=limit, full_output=1
        )
    value, err = res[0], res[1]
    if len(res) > 3 and err > rel_tol * abs(value):
        raise AccuracyError(value, err)
    return value, err


def kernel_mean_numeric(k: Kernel, m: Measure, x: float, rel_tol: float = 1e-10) -> float:
    """Embedding ``m(x)`` by adaptive Gauss-Kronrod quadrature.

    The integral runs over the measure's truncation interval (discarded mass
    below ``rel_tol / 10``), widened to contain the kernel bump around ``x``,
    with breakpoints at ``x`` (the Matern kink) and at the bump edges.
    """
    if not (1e-12 <= rel_tol <= 1e-3):
        raise InvalidInputError(f"rel_tol must lie in [1e-12, 1e-3], got {rel_tol!r}")
    x = float(x)
    if not math.isfinite(x):
        raise InvalidInputError("x must be finite")
    half = tail_halfwidth(m, rel_tol)
    w = _kernel_halfwidth(k, rel_tol)
    lo = min(m.center - half, x - w)
    hi = max(m.center + half, x + w)
    breaks = [x - w, x - 0.25 * w, x - 0.05 * w, x, x + 0.05 * w, x + 0.25 * w, x + w]
    value, _ = _quad(_scalar_integrand(k, m, x), lo, hi, breaks, rel_tol)
    return value


def initial_error_numeric(k: Kernel, m: Measure, rel_tol: float = 1e-9) -> float:
    """Nested adaptive quadrature of ``int m(x) dP(x)``.

    The inner embedding is evaluated a hundred times tighter than the outer
    integral (floored at 1e-12).
    """
    inner_tol = max(rel_tol * 1e-2, 1e-12)
    half = tail_halfwidth(m, rel_tol)

    def outer(x):
        return kernel_mean_numeric(k, m, x, inner_tol) * float(density(m, x))

    c = m.center
    s = m.spread
    value, _ = _quad(outer, c - half, c + half, [c - s, c, c + s], rel_tol, limit=500)
    return value


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float
    n_samples: int


def initial_error_mc(k: Kernel, m: Measure, n_samples: int = 10**6, seed: int = 0,
                     chunk: int = 10**6) -> MCEstimate:
    """Monte Carlo ``(1/S) sum k(x_i, y_i)`` with independent ``x_i, y_i ~ m``.

    Samples are processed in chunks so ``n_samples = 1e8`` fits in memory;
    the result depends only on ``(n_samples, seed, chunk)``.
    """
    n_samples = int(n_samples)
    if n_samples < 10**4:
        raise InvalidInputError("initial_error_mc needs at least 1e4 samples")
    rng = np.random.Generator(np.random.PCG64(seed))
    sums, sqs = [], []
    left = n_samples
    while left > 0:
        b = min(chunk, left)
        xs = sample(m, b, rng)
        ys = sample(m, b, rng)
        kv = k.of_distance(np.abs(xs - ys))
        sums.append(math.fsum(kv))
        sqs.append(math.fsum(kv * kv))
        left -= b
    mean = math.fsum(sums) / n_samples
    var = max(math.fsum(sqs) / n_samples - mean * mean, 0.0) * n_samples / (n_samples - 1)
    return MCEstimate(value=mean, stderr=math.sqrt(var / n_samples), n_samples=n_samples)


# ---------------------------------------------------------------------------
# change of measure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChangeOfMeasure:
    """``g(x) = f(x) * t_target(x) / t_proposal(x)``.

    With ``nu_target > nu_proposal`` the proposal has heavier tails and the
    weight ratio decays like ``|x|^(nu_proposal - nu_target)``.
    """

    f: Callable
    nu_target: float
    nu_proposal: float

    def __post_init__(self):
        if not (self.nu_target > self.nu_proposal > 0):
            raise InvalidInputError("need nu_target > nu_proposal > 0")

    def weight(self, x):
        return density(StudentT(self.nu_target), x) / density(StudentT(self.nu_proposal), x)

    def __call__(self, x):
        return self.f(x) * self.weight(x)


def change_of_measure(f: Callable, nu_target: float, nu_proposal: float) -> ChangeOfMeasure:
    return ChangeOfMeasure(f, float(nu_target), float(nu_proposal))


# ---------------------------------------------------------------------------
# embedding object
# ---------------------------------------------------------------------------

CLOSED = "closed"
NUMERIC = "numeric"


def _supports_closed(k: Kernel, m: Measure) -> bool:
    return _is_standard_normal(m) and k.variant in (RBF, MATERN32)


@dataclass(frozen=True)
class Embedding:
    """Kernel mean function and initial error for one (kernel, measure) pair.

    In numeric mode ``m(x)`` is integrated per point and memoised on the
    points actually requested; nothing is interpolated.
    """

    kernel: Kernel
    measure: Measure
    mode: str
    prior_integral_variance: float
    prior_variance_method: str
    rel_tol: float = 1e-10
    prior_variance_stderr: float = 0.0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def mean(self, x) -> np.ndarray:
        xa = np.asarray(x, dtype=float)
        if self.mode == CLOSED:
            return np.asarray(kernel_mean_closed(self.kernel, self.measure, xa), dtype=float)
        flat = xa.ravel()
        out = np.empty(flat.shape)
        for i, xi in enumerate(flat):
            key = float(xi)
            v = self._cache.get(key)
            if v is None:
                v = kernel_mean_numeric(self.kernel, self.measure, key, self.rel_tol)
                self._cache[key] = v
            out[i] = v
        return out.reshape(xa.shape)

    @property
    def mean_fn(self) -> Callable:
        return self.mean


def build_embedding(k: Kernel, m: Measure, mode: str = "auto", rel_tol: float = 1e-10,
                    prior_variance: str = "auto", mc_samples: int = 10**6,
                    seed: int = 0) -> Embedding:
    """Assemble an :class:`Embedding`.

    ``mode`` is ``"closed"``, ``"numeric"`` or ``"auto"`` (closed when
    available).  ``prior_variance`` is ``"closed"``, ``"quadrature"``,
    ``"mc"`` or ``"auto"`` (closed when available, otherwise quadrature).
    """
    if mode == "auto":
        mode = CLOSED if _supports_closed(k, m) else NUMERIC
    if mode not in (CLOSED, NUMERIC):
        raise InvalidInputError(f"unknown embedding mode {mode!r}")
    if mode == CLOSED:
        _check_closed_pair(k, m)
    if prior_variance == "auto":
        prior_variance = CLOSED if _supports_closed(k, m) else "quadrature"
    stderr = 0.0
    if prior_variance == CLOSED:
        pv = initial_error_closed(k, m)
    elif prior_variance == "quadrature":
        pv = initial_error_numeric(k, m, rel_tol=max(rel_tol, 1e-10))
    elif prior_variance == "mc":
        est = initial_error_mc(k, m, mc_samples, seed)
        pv, stderr = est.value, est.stderr
        logger.info("MC prior variance %.6g +/- %.2g (S=%d)", pv, stderr, mc_samples)
    else:
        raise InvalidInputError(f"unknown prior variance method {prior_variance!r}")
    return Embedding(
        kernel=k,
        measure=m,
        mode=mode,
        prior_integral_variance=float(pv),
        prior_variance_method=prior_variance,
        rel_tol=float(rel_tol),
        prior_variance_stderr=float(stderr),
    )
