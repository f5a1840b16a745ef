"""
Experiment presets and runners.

Every run compares the inflated proposal with i.i.d. sampling from the
integration measure.  Hyperparameters ``(sigma_f2, ell)`` are either fixed
in the config or set to posterior averages of a Gibbs chain on a pilot
design drawn from the inflated proposal.

Seeds
-----
All randomness derives from ``cfg.seed`` through :func:`derive_seed`:

* repetition ``r`` uses ``derive_seed(seed, 0, r)``; both samplers share it,
  so their designs come from the same underlying normal/chi-square streams;
* the pilot design uses ``derive_seed(seed, 1, 0)`` and the chain
  ``derive_seed(seed, 1, 1)``;
* mixture-quantile draws use ``derive_seed(seed, 2, k)``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import integrands
from .bq import Design, bq_posterior
from .errors import BQError, ExperimentError, InvalidInputError
from .geometry import effective_radius, fill_distance_1d, rate_fit, write_fill_csv
from .kernels import DEFAULT_NUGGET, Kernel
from .measures import Embedding, Gaussian, StudentT, build_embedding
from .mcmc import GibbsConfig, HyperChain, HyperPrior, run_gibbs
from .sampling import (BATCH, GAUSSIAN_INFLATED, RNG_ALGORITHM, STUDENT_INFLATED, TARGET_BASELINE,
                       Proposal, derive_seed, draw)
from .uq import RepetitionSet, TotalVarianceReport, mixture_quantiles, total_variance, variance_bound_check

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
INFLATED = "inflated"
BASELINE = "target"
SAMPLERS = (INFLATED, BASELINE)
QUANTILE_PROBS = (0.025, 0.975)
MAX_FAILURE_FRACTION = 0.01


@dataclass
class ExperimentConfig:
    """Everything that determines a run.  Field names double as JSON keys."""

    experiment: str = "rbf-gaussian"
    kernel: str = "rbf"
    integrand: str = integrands.F1
    measure: str = "gaussian"  # integration measure seen by the quadrature rule
    nu: float = 4.49  # its degrees of freedom when measure == "student"
    alpha: float = 1.5
    mode: str = BATCH
    include_alpha_factor: bool = False
    n: int = 150
    n_grid: list | None = None  # defaults to [n]
    repetitions: int = 100
    mixture_draws: int = 100
    seed: int = 0
    samplers: list = field(default_factory=lambda: list(SAMPLERS))
    sigma_f2: float | None = None  # fixed hyperparameters skip the pilot chain
    ell: float | None = None
    pilot_n: int = 100
    mcmc_T: int = 1000
    mcmc_T0: int = 200
    mcmc_step: float = 0.2
    alpha_f: float = 2.0
    beta_f: float = 2.0
    ell_log_mean: float = 0.0
    ell_log_var: float = 100.0
    include_logdet: bool = False
    nugget: float = DEFAULT_NUGGET
    prior_variance: str = "auto"
    mc_samples: int = 10**6
    c_check: float = 10.0
    output_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        if self.n_grid is None or len(self.n_grid) == 0:
            self.n_grid = [int(self.n)]
        self.n_grid = [int(v) for v in self.n_grid]
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise InvalidInputError(f"n_grid must be strictly increasing, got {self.n_grid}")
        if self.n_grid[0] < 2:
            raise InvalidInputError("design sizes must be >= 2")
        if int(self.repetitions) < 1 or int(self.mixture_draws) < 1:
            raise InvalidInputError("repetitions and mixture_draws must be >= 1")
        if (self.sigma_f2 is None) != (self.ell is None):
            raise InvalidInputError("give both sigma_f2 and ell, or neither")
        bad = [s for s in self.samplers if s not in SAMPLERS]
        if bad or not self.samplers:
            raise InvalidInputError(f"samplers must be drawn from {SAMPLERS}, got {self.samplers}")
        if self.measure not in ("gaussian", "student"):
            raise InvalidInputError(f"measure must be 'gaussian' or 'student', got {self.measure!r}")
        Kernel(self.kernel)  # validates the variant name
        integrands.get(self.integrand)

    @property
    def fixed_hypers(self) -> bool:
        return self.sigma_f2 is not None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """Hash of the fields that affect numerical output."""
        d = self.to_dict()
        for k in ("output_dir", "workers"):
            d.pop(k)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


PRESETS: dict[str, dict] = {
    "rbf-gaussian": dict(kernel="rbf", integrand=integrands.F1, measure="gaussian", n=150),
    "matern-gaussian": dict(kernel="matern32", integrand=integrands.F1, measure="gaussian", n=500),
    "matern-student": dict(kernel="matern32", integrand=integrands.F2_CHANGED, measure="student",
                           nu=integrands.NU_PROPOSAL, n=500),
    "appendix-b": dict(kernel="rbf", integrand=integrands.F2, measure="gaussian", n=150),
    "rate-study": dict(kernel="matern32", integrand=integrands.F1, measure="gaussian",
                       n=2048, n_grid=[2 ** k for k in range(5, 12)], repetitions=20),
    "fill-study": dict(measure="gaussian", n=4096, n_grid=[2 ** k for k in range(5, 13)],
                       repetitions=50),
    "mcmc-hypers": dict(kernel="rbf", integrand=integrands.F1, measure="gaussian", n=100),
}


def make_config(experiment: str = "rbf-gaussian", **overrides) -> ExperimentConfig:
    """Preset values for ``experiment`` with ``overrides`` applied on top."""
    if experiment not in PRESETS:
        raise InvalidInputError(f"unknown experiment {experiment!r}; expected one of {sorted(PRESETS)}")
    params = dict(PRESETS[experiment], experiment=experiment)
    params.update({k: v for k, v in overrides.items() if v is not None})
    if overrides.get("n") is not None and overrides.get("n_grid") is None:
        params["n_grid"] = None
    return ExperimentConfig(**params)


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def bq_measure(cfg: ExperimentConfig):
    return Gaussian() if cfg.measure == "gaussian" else StudentT(cfg.nu)


def make_proposal(cfg: ExperimentConfig, sampler: str) -> Proposal:
    m = bq_measure(cfg)
    if sampler == BASELINE:
        family = TARGET_BASELINE
    else:
        family = GAUSSIAN_INFLATED if isinstance(m, Gaussian) else STUDENT_INFLATED
    return Proposal(family, m, cfg.alpha, cfg.mode, cfg.include_alpha_factor)


def hyper_prior(cfg: ExperimentConfig) -> HyperPrior:
    return HyperPrior(cfg.alpha_f, cfg.beta_f, cfg.ell_log_mean, cfg.ell_log_var)


def pilot_chain(cfg: ExperimentConfig) -> HyperChain:
    """Gibbs chain on a size-``pilot_n`` design from the inflated proposal."""
    p = make_proposal(cfg, INFLATED)
    x = draw(p, cfg.pilot_n, derive_seed(cfg.seed, 1, 0))
    f = integrands.get(cfg.integrand, bq_measure(cfg))
    gc = GibbsConfig(T=cfg.mcmc_T, T0=cfg.mcmc_T0, step=cfg.mcmc_step, nugget=cfg.nugget,
                     include_logdet=cfg.include_logdet)
    return run_gibbs(f(x), x, hyper_prior(cfg), cfg.kernel, gc, derive_seed(cfg.seed, 1, 1))


def resolve_kernel(cfg: ExperimentConfig) -> tuple[Kernel, HyperChain | None]:
    if cfg.fixed_hypers:
        return Kernel(cfg.kernel, cfg.sigma_f2, cfg.ell), None
    chain = pilot_chain(cfg)
    return chain.kernel(), chain


@lru_cache(maxsize=8)
def _embedding(k: Kernel, m, prior_variance: str, mc_samples: int, seed: int) -> Embedding:
    return build_embedding(k, m, prior_variance=prior_variance, mc_samples=mc_samples, seed=seed)


def embedding_for(cfg: ExperimentConfig, k: Kernel) -> Embedding:
    return _embedding(k, bq_measure(cfg), cfg.prior_variance, int(cfg.mc_samples),
                      derive_seed(cfg.seed, 3, 0))


@dataclass(frozen=True)
class Record:
    rep: int
    sampler: str
    n: int
    mean: float
    var: float
    wce: float
    fill: float
    elapsed: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class Aggregate:
    sampler: str
    n: int
    R: int
    report: TotalVarianceReport
    quantiles: tuple
    bound_ratio: float
    median_var: float
    median_wce: float
    median_fill: float


@dataclass
class RunResult:
    config: ExperimentConfig
    kernel: Kernel | None
    records: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)  # (sampler, n) -> Aggregate
    rates: dict = field(default_factory=dict)  # sampler -> {"wce": RateFit, "var": RateFit, ...}
    chain: HyperChain | None = None
    failures: list = field(default_factory=list)
    true_value: float | None = None

    def records_for(self, sampler: str, n: int | None = None) -> list:
        return [r for r in self.records if r.sampler == sampler and (n is None or r.n == n)]


def _one_repetition(cfg: ExperimentConfig, k: Kernel, rep: int) -> list:
    """All (sampler, n) records for one repetition."""
    emb = embedding_for(cfg, k)
    f = integrands.get(cfg.integrand, bq_measure(cfg))
    seed = derive_seed(cfg.seed, 0, rep)
    radius_p = make_proposal(cfg, INFLATED)
    out = []
    for sampler in cfg.samplers:
        p = make_proposal(cfg, sampler)
        for n in cfg.n_grid:
            t0 = time.perf_counter()
            try:
                d = Design.from_function(f, draw(p, n, seed), {"sampler": sampler, "seed": seed})
                post = bq_posterior(k, emb, d, cfg.nugget)
                h = fill_distance_1d(d.points, effective_radius(radius_p, n))
            except BQError as exc:
                raise ExperimentError(f"{type(exc).__name__}: {exc}", cfg.experiment, n, seed) from exc
            out.append(Record(rep, sampler, n, post.mean, post.variance, post.std, h,
                              time.perf_counter() - t0))
    return out


def _map_repetitions(cfg, k, reps):
    """Run repetitions, possibly in worker processes; results in repetition order."""
    if cfg.workers > 1 and len(reps) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            futs = [ex.submit(_one_repetition, cfg, k, r) for r in reps]
            return [_collect(f.result) for f in futs]
    return [_collect(lambda r=r: _one_repetition(cfg, k, r)) for r in reps]


def _collect(fn):
    try:
        return fn()
    except ExperimentError as exc:
        return exc


def _rate_fits(records, sampler, n_grid) -> dict:
    if len(n_grid) < 3:
        return {}
    fits = {}
    for key in ("wce", "var", "fill"):
        med = [float(np.median([getattr(r, key) for r in records if r.sampler == sampler and r.n == n]))
               for n in n_grid]
        if all(v > 0 for v in med):
            fits[key] = rate_fit(list(zip(n_grid, med)))
    return fits


def _aggregate(cfg, records) -> dict:
    aggs = {}
    for si, sampler in enumerate(cfg.samplers):
        for ni, n in enumerate(cfg.n_grid):
            rs = [r for r in records if r.sampler == sampler and r.n == n]
            reps = RepetitionSet([r.mean for r in rs], [r.var for r in rs], n, cfg.config_hash())
            rep = total_variance(reps)
            q = mixture_quantiles(reps, cfg.mixture_draws, QUANTILE_PROBS,
                                  derive_seed(cfg.seed, 2, si * len(cfg.n_grid) + ni))
            ratio = float("nan")
            if rep.within > 0:
                ratio = variance_bound_check(reps, 0.0, cfg.c_check).ratio
            aggs[(sampler, n)] = Aggregate(
                sampler, n, reps.R, rep, tuple(q), ratio,
                float(np.median([r.var for r in rs])),
                float(np.median([r.wce for r in rs])),
                float(np.median([r.fill for r in rs])),
            )
    return aggs


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------

def _run(cfg: ExperimentConfig, R: int, write: bool = True) -> RunResult:
    k, chain = resolve_kernel(cfg)
    f = integrands.get(cfg.integrand, bq_measure(cfg))
    res = RunResult(cfg, k, chain=chain, true_value=integrands.true_integral(f).value)
    outcomes = _map_repetitions(cfg, k, range(R))
    failed = [(r, o) for r, o in enumerate(outcomes) if isinstance(o, ExperimentError)]
    for r, o in enumerate(outcomes):
        if not isinstance(o, ExperimentError):
            res.records.extend(o)
    res.failures = [(r, str(e)) for r, e in failed]
    if failed:
        if len(failed) > MAX_FAILURE_FRACTION * R or len(failed) == R:
            if write:
                write_outputs(res)
            raise failed[0][1]
        for r, e in failed:
            logger.warning("excluding repetition %d: %s", r, e)
    res.aggregates = _aggregate(cfg, res.records)
    res.rates = {s: _rate_fits(res.records, s, cfg.n_grid) for s in cfg.samplers}
    if write:
        write_outputs(res)
    return res


def run_single(cfg: ExperimentConfig, write: bool = True) -> RunResult:
    """One design per sampler and per ``n`` in ``cfg.n_grid``."""
    return _run(cfg, 1, write)


def run_repeated(cfg: ExperimentConfig, write: bool = True) -> RunResult:
    """``cfg.repetitions`` independent runs, aggregated by the law of total variance."""
    if cfg.repetitions < 2:
        raise InvalidInputError("run_repeated needs repetitions >= 2")
    return _run(cfg, int(cfg.repetitions), write)


def run_rate_study(cfg: ExperimentConfig, write: bool = True) -> RunResult:
    """Median worst-case error and variance per ``n`` with log-log slopes."""
    g = cfg.n_grid
    if len(g) < 3 or np.log10(g[-1] / g[0]) < 1.5:
        raise InvalidInputError("rate study needs >= 3 sizes spanning >= 1.5 decades")
    return _run(cfg, int(cfg.repetitions), write)


@dataclass
class FillStudy:
    config: ExperimentConfig
    radii: dict  # n -> R_n
    fills: dict  # (sampler, n) -> array over trials
    rates: dict  # sampler -> RateFit

    def median(self, sampler: str, n: int) -> float:
        return float(np.median(self.fills[(sampler, n)]))


def run_fill_study(cfg: ExperimentConfig, write: bool = True) -> FillStudy:
    """Fill distances on the inflated proposal's effective ball, no quadrature."""
    radius_p = make_proposal(cfg, INFLATED)
    radii = {n: effective_radius(radius_p, n) for n in cfg.n_grid}
    fills = {}
    for sampler in cfg.samplers:
        p = make_proposal(cfg, sampler)
        for n in cfg.n_grid:
            fills[(sampler, n)] = np.array([
                fill_distance_1d(draw(p, n, derive_seed(cfg.seed, 0, t)), radii[n])
                for t in range(int(cfg.repetitions))
            ])
    rates = {}
    if len(cfg.n_grid) >= 3:
        for s in cfg.samplers:
            rates[s] = rate_fit([(n, float(np.median(fills[(s, n)]))) for n in cfg.n_grid])
    study = FillStudy(cfg, radii, fills, rates)
    if write:
        os.makedirs(cfg.output_dir, exist_ok=True)
        rows = [(s, n, radii[n], study.median(s, n), rates[s].slope if s in rates else float("nan"))
                for s in cfg.samplers for n in cfg.n_grid]
        write_fill_csv(_path(cfg, "summary"), rows, _header(cfg, "fill"))
    return study


def run_mcmc(cfg: ExperimentConfig, write: bool = True) -> HyperChain:
    """Pilot chain only; writes its trace."""
    chain = pilot_chain(dataclasses.replace(cfg, pilot_n=cfg.n))
    if write:
        os.makedirs(cfg.output_dir, exist_ok=True)
        path = _path(cfg, "trace")
        chain.to_csv(path)
        _prepend(path, _header(cfg, "mcmc-trace"))
        s2, ell = chain.posterior_mean
        with open(_path(cfg, "summary"), "w") as fh:
            fh.write(f"# {_header(cfg, 'mcmc-summary')}\n")
            fh.write("T,T0,step,acceptance_rate,sigma_f2_mean,ell_mean\n")
            fh.write(f"{chain.T},{chain.burn_in},{chain.step_size!r},{chain.acceptance_rate!r},{s2!r},{ell!r}\n")
    return chain


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _header(cfg: ExperimentConfig, kind: str) -> str:
    return (f"schema=randbq-{kind}-v{SCHEMA_VERSION} experiment={cfg.experiment} "
            f"config_hash={cfg.config_hash()} rng={RNG_ALGORITHM} seed={cfg.seed}")


def _path(cfg: ExperimentConfig, kind: str) -> str:
    return os.path.join(cfg.output_dir, f"{cfg.experiment}_{kind}.csv")


def _prepend(path, comment):
    with open(path) as fh:
        body = fh.read()
    with open(path, "w") as fh:
        fh.write(f"# {comment}\n{body}")


def _r(v) -> str:
    return repr(float(v))


def write_outputs(res: RunResult) -> tuple[str, str]:
    """Write ``<experiment>_trace.csv`` and ``<experiment>_summary.csv``.

    Wall-clock timings are kept out of the files so reruns are byte-identical.
    """
    cfg = res.config
    os.makedirs(cfg.output_dir, exist_ok=True)
    trace, summary = _path(cfg, "trace"), _path(cfg, "summary")
    with open(trace, "w") as fh:
        fh.write(f"# {_header(cfg, 'trace')}\n")
        fh.write("rep,sampler,n,mean,var,wce,fill\n")
        for r in res.records:
            fh.write(f"{r.rep},{r.sampler},{r.n},{_r(r.mean)},{_r(r.var)},{_r(r.wce)},{_r(r.fill)}\n")
    with open(summary, "w") as fh:
        fh.write(f"# {_header(cfg, 'summary')}\n")
        if res.kernel is not None:
            fh.write(f"# kernel={res.kernel.variant} sigma_f2={res.kernel.sigma_f2!r} ell={res.kernel.ell!r} "
                     f"true_value={res.true_value!r} failures={len(res.failures)}\n")
        fh.write("sampler,n,R,grand_mean,within,between,total,q_lo,q_hi,bound_ratio,"
                 "median_var,median_wce,median_fill,slope_wce,slope_var,slope_fill\n")
        for (sampler, n), a in res.aggregates.items():
            fits = res.rates.get(sampler, {})
            slopes = [_r(fits[k].slope) if k in fits else "" for k in ("wce", "var", "fill")]
            t = a.report
            fh.write(",".join([sampler, str(n), str(a.R), _r(t.grand_mean), _r(t.within), _r(t.between),
                               _r(t.total), _r(a.quantiles[0]), _r(a.quantiles[1]), _r(a.bound_ratio),
                               _r(a.median_var), _r(a.median_wce), _r(a.median_fill)] + slopes) + "\n")
    return trace, summary
