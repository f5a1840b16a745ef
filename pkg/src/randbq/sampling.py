"""
Randomised design generators.

Three proposal families, all in d = 1:

``target``
    i.i.d. draws from the integration measure itself (the baseline).
``gaussian-inflated``
    ``N(mean, s_n * variance)`` with ``s_n = log n`` (or ``alpha * log n``).
``student-inflated``
    ``t_nu(0, s_n * scale^2)`` with ``s_n = n ** (2 alpha / (alpha + nu + 1/2))``.

``proposal_scale`` returns the variance-like multiplier of the base scale
matrix (``variance`` for a Gaussian target, ``scale**2`` for a Student
target); draws are multiplied by its square root.  Asymptotic constants are
taken to be exactly 1.

Random numbers come from numpy's PCG64 bit generator.  A master seed is split
into two child streams with ``SeedSequence(seed, spawn_key=(j,))``: stream 0
supplies standard normals, stream 1 supplies the chi-square variates of the
Student-t representation ``Z / sqrt(W / nu)``.  Each stream is consumed in
index order, so a length-n draw is a prefix of any longer draw with the same
seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .measures import Gaussian, Measure, StudentT

GAUSSIAN_INFLATED = "gaussian-inflated"
STUDENT_INFLATED = "student-inflated"
TARGET_BASELINE = "target"
FAMILIES = (GAUSSIAN_INFLATED, STUDENT_INFLATED, TARGET_BASELINE)

BATCH = "batch"
SEQUENTIAL = "sequential"

RNG_ALGORITHM = "numpy-PCG64/SeedSequence"

DIM = 1


@dataclass(frozen=True)
class RateTarget:
    """Theoretical exponents for the worst-case error and the posterior variance."""

    tau: float
    error_exponent: float
    variance_exponent: float

    @classmethod
    def from_alpha_tau(cls, alpha: float, tau: float) -> "RateTarget":
        return cls(tau=tau, error_exponent=-alpha * tau, variance_exponent=-2.0 * alpha * tau)


@dataclass(frozen=True)
class Proposal:
    """Sampling distribution for design points.

    ``alpha`` is the Sobolev smoothness used in the Student inflation exponent
    (and optionally as the Gaussian log-n multiplier).
    """

    family: str
    target: Measure
    alpha: float = 1.5
    mode: str = BATCH
    include_alpha_factor: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown proposal family {self.family!r}")
        if self.mode not in (BATCH, SEQUENTIAL):
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        if not float(self.alpha) > DIM / 2:
            raise InvalidInputError(f"alpha must exceed d/2 = {DIM / 2}, got {self.alpha!r}")
        if self.family == GAUSSIAN_INFLATED and not isinstance(self.target, Gaussian):
            raise InvalidInputError("gaussian-inflated proposals need a Gaussian target")
        if self.family == STUDENT_INFLATED and not isinstance(self.target, StudentT):
            raise InvalidInputError("student-inflated proposals need a Student-t target")
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def student_exponent(self) -> float:
        """``2 alpha / (d (alpha + nu + d/2))``."""
        nu = self.target.nu
        return 2.0 * self.alpha / (DIM * (self.alpha + nu + DIM / 2))

    @property
    def tau(self) -> float:
        if isinstance(self.target, Gaussian):
            return 1.0 / DIM
        nu = self.target.nu
        return (nu + DIM / 2) / (DIM * (self.alpha + nu + DIM / 2))

    def rate_target(self) -> RateTarget:
        return RateTarget.from_alpha_tau(self.alpha, self.tau)

    def describe(self) -> dict:
        return {
            "family": self.family,
            "target": repr(self.target),
            "alpha": self.alpha,
            "mode": self.mode,
            "include_alpha_factor": self.include_alpha_factor,
        }


def _inflation(p: Proposal, n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    if p.family == TARGET_BASELINE:
        return np.ones_like(n)
    if p.family == GAUSSIAN_INFLATED:
        factor = p.alpha if p.include_alpha_factor else 1.0
        return factor * np.log(n)
    return n ** p.student_exponent


def proposal_scale(p: Proposal, n: int) -> float:
    """Variance-like scale of the proposal for sample size ``n >= 2``."""
    if int(n) != n or n < 2:
        raise InvalidInputError(f"proposal_scale needs an integer n >= 2, got {n!r}")
    return float(p.target.base_variance * _inflation(p, n))


def _stream(seed: int, j: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(j,))))


def _standardized(p: Proposal, n: int, seed: int) -> np.ndarray:
    """``n`` unit-scale draws from the proposal's shape family (prefix-stable)."""
    z = _stream(seed, 0).standard_normal(n)
    if isinstance(p.target, StudentT):
        w = _stream(seed, 1).chisquare(p.target.nu, n)
        z = z / np.sqrt(w / p.target.nu)
    return z


def _place(p: Proposal, std_draws: np.ndarray, scales: np.ndarray) -> np.ndarray:
    return p.target.center + np.sqrt(scales) * std_draws


def draw_iid(p: Proposal, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. draws from the proposal at sample size ``n``."""
    n = int(n)
    if n < 1:
        raise InvalidInputError("draw_iid needs n >= 1")
    scale = p.target.base_variance * float(_inflation(p, max(n, 2)))
    return _place(p, _standardized(p, n, seed), np.full(n, scale))


def sequential_scales(p: Proposal, n: int) -> np.ndarray:
    """Per-index scales ``s(i)`` for ``i = 1..n``, using ``max(i, 2)`` at the start."""
    idx = np.maximum(np.arange(1, int(n) + 1), 2)
    return p.target.base_variance * _inflation(p, idx)


def draw_sequential(p: Proposal, n: int, seed: int) -> np.ndarray:
    """Independent draws ``x_i ~ Q_i`` with the index-dependent schedule."""
    n = int(n)
    if n < 1:
        raise InvalidInputError("draw_sequential needs n >= 1")
    return _place(p, _standardized(p, n, seed), sequential_scales(p, n))


def draw(p: Proposal, n: int, seed: int) -> np.ndarray:
    """Dispatch on ``p.mode``."""
    return draw_sequential(p, n, seed) if p.mode == SEQUENTIAL else draw_iid(p, n, seed)


def derive_seed(master: int, *keys: int) -> int:
    """Child seed for ``(master, keys)``; distinct key tuples give independent streams."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
