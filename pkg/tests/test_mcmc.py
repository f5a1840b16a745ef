import csv
import math

import numpy as np
import pytest
from scipy import integrate, stats

import randbq.mcmc as mcmc
from randbq.errors import ChainAbortedError, FactorizationError, InvalidInputError
from randbq.kernels import Kernel, gram_matrix, log_det
from randbq.measures import Gaussian
from randbq.mcmc import GibbsConfig, HyperPrior, ell_mh_step, run_gibbs, sigma2_gibbs_draw
from randbq.sampling import GAUSSIAN_INFLATED, Proposal, draw

FAR = np.array([0.0, 1e6])


def _f1(x):
    return math.sqrt(3) * np.exp(-x * x) + np.sin(2 * np.pi * x) / (1 + x * x)


def test_sigma2_conjugate_draw_matches_ig33():
    g = gram_matrix(Kernel("rbf"), FAR)
    rng = np.random.default_rng(0)
    draws = np.array([sigma2_gibbs_draw([1.0, 1.0], g, HyperPrior(), rng) for _ in range(10_000)])
    assert stats.kstest(draws, stats.invgamma(3.0, scale=3.0).cdf).pvalue > 0.01


def test_sigma2_zero_values():
    g = gram_matrix(Kernel("rbf"), FAR)
    rng = np.random.default_rng(1)
    draws = np.array([sigma2_gibbs_draw([0.0, 0.0], g, HyperPrior(), rng) for _ in range(5000)])
    assert stats.kstest(draws, stats.invgamma(3.0, scale=2.0).cdf).pvalue > 0.01


def test_gibbs_exactness_at_fixed_ell():
    x = np.linspace(-2, 2, 8)
    f = np.cos(x)
    g = gram_matrix(Kernel("matern32", 1.0, 0.7), x)
    a = mcmc.half_solve(g, f)
    q = 0.5 * float(a @ a)
    rng = np.random.default_rng(2)
    draws = [sigma2_gibbs_draw(f, g, HyperPrior(), rng) for _ in range(5000)]
    assert stats.kstest(draws, stats.invgamma(2.0 + 4.0, scale=2.0 + q).cdf).pvalue > 0.01


def test_flat_target_always_accepts():
    prior = HyperPrior(ell_log_var=1e12)
    rng = np.random.default_rng(3)
    ell, acc = 1.0, []
    for _ in range(1000):
        # points so far apart that K_ell is exactly I wherever the walk goes
        ell, a, _ = ell_mh_step(ell, 1.0, [1.0, -1.0], [0.0, 1e150], prior, 0.2, rng)
        acc.append(a)
    assert all(acc)


def test_small_step_accepts_almost_everything():
    x = np.linspace(-1, 1, 10)
    rng = np.random.default_rng(4)
    ell, acc = 0.5, 0
    for _ in range(1000):
        ell, a, _ = ell_mh_step(ell, 1.0, np.sin(3 * x), x, HyperPrior(), 1e-5, rng)
        acc += a
    assert acc >= 990


def test_step_must_be_positive():
    with pytest.raises(InvalidInputError):
        ell_mh_step(1.0, 1.0, [1.0, 2.0], [0.0, 1.0], HyperPrior(), 0.0, np.random.default_rng())


def test_factorization_failure_is_a_rejection(monkeypatch, caplog):
    real = mcmc._ell_terms

    def flaky(values, points, ell, variant, nugget):
        if ell != 0.5:
            raise FactorizationError(3)
        return real(values, points, ell, variant, nugget)

    monkeypatch.setattr(mcmc, "_ell_terms", flaky)
    step = ell_mh_step(0.5, 1.0, [1.0, 2.0, 3.0], [0.0, 1.0, 2.0], HyperPrior(), 0.2,
                       np.random.default_rng(0))
    assert step.new_ell == 0.5 and not step.accepted
    assert "Cholesky failed" in caplog.text


def _pilot(seed=1):
    x = draw(Proposal(GAUSSIAN_INFLATED, Gaussian()), 100, seed)
    return _f1(x), x


def test_paper_regime_acceptance_rate():
    f, x = _pilot()
    chain = run_gibbs(f, x, HyperPrior(), "rbf", GibbsConfig(include_logdet=False), seed=0)
    assert 0.35 <= chain.acceptance_rate <= 0.75


def test_chain_invariants_and_determinism():
    f, x = _pilot(2)
    cfg = GibbsConfig(T=300, T0=100)
    a = run_gibbs(f, x, HyperPrior(), "matern32", cfg, seed=5)
    b = run_gibbs(f, x, HyperPrior(), "matern32", cfg, seed=5)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert np.all(a.samples > 0)
    assert 0.0 < a.acceptance_rate < 1.0
    assert a.posterior_mean == pytest.approx(tuple(a.samples[100:].mean(axis=0)))
    assert a.kernel().variant == "matern32"


def test_config_validation():
    with pytest.raises(InvalidInputError):
        GibbsConfig(T=100, T0=100)
    with pytest.raises(InvalidInputError):
        HyperPrior(alpha_f=0)
    with pytest.raises(InvalidInputError):
        run_gibbs([1.0], [0.0])


def test_abort_carries_partial_chain(monkeypatch):
    calls = {"n": 0}
    real = mcmc._ig_draw

    def boom(shape, scale, rng):
        calls["n"] += 1
        if calls["n"] > 7:
            raise FloatingPointError("overflow")
        return real(shape, scale, rng)

    monkeypatch.setattr(mcmc, "_ig_draw", boom)
    with pytest.raises(ChainAbortedError) as ei:
        run_gibbs([1.0, 0.5, -0.2], [0.0, 0.5, 1.0], config=GibbsConfig(T=50, T0=10))
    assert ei.value.chain.T == 7


def test_trace_csv(tmp_path):
    chain = run_gibbs([1.0, 0.5, -0.2], [0.0, 0.5, 1.0], config=GibbsConfig(T=20, T0=5), seed=1)
    path = tmp_path / "trace.csv"
    chain.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["iter", "sigma_f2", "ell", "accepted"]
    assert len(rows) == 21 and rows[1][0] == "1"


# Two points at distance 1 with f = (1, -1) and a tight ell prior: the joint
# posterior is proper and the sigma_f2 marginal is a genuine mixture over ell.
PTS2 = np.array([0.0, 1.0])
F2 = np.array([1.0, -1.0])
PRIOR2 = HyperPrior(2.0, 2.0, 0.0, 1.0)


def _u_terms(u):
    g = gram_matrix(Kernel("rbf", 1.0, math.exp(u)), PTS2)
    a = mcmc.half_solve(g, F2)
    return 0.5 * float(a @ a), log_det(g)


def _log_u_marginal(u):
    # integrate sigma_f2 out of the joint: IG normaliser with shape a+1, scale b+Q
    q, ld = _u_terms(u)
    a, b = PRIOR2.alpha_f, PRIOR2.beta_f
    return -0.5 * ld - (a + 1) * math.log(b + q) - 0.5 * u * u / PRIOR2.ell_log_var


def _sigma2_marginal_cdf():
    us = np.linspace(-8, 6, 1401)
    logw = np.array([_log_u_marginal(u) for u in us])
    w = np.exp(logw - logw.max())
    w /= integrate.trapezoid(w, us)
    scales = np.array([PRIOR2.beta_f + _u_terms(u)[0] for u in us])
    shape = PRIOR2.alpha_f + 1

    def cdf(s):
        s = np.atleast_1d(s)
        vals = stats.invgamma.cdf(s[:, None], shape, scale=scales[None, :])
        return integrate.trapezoid(vals * w[None, :], us, axis=1)

    return cdf


def test_sigma2_marginal_matches_mixture_oracle():
    chain = run_gibbs(F2, PTS2, PRIOR2, "rbf", GibbsConfig(T=40_000, T0=2000, include_logdet=True), seed=11)
    s2 = chain.samples[2000::20, 0]
    assert stats.kstest(s2, _sigma2_marginal_cdf()).pvalue > 0.01


def test_detailed_balance_flows():
    rng = np.random.default_rng(6)
    ell, us = 1.0, []
    for _ in range(20_000):
        ell, _, _ = ell_mh_step(ell, 1.0, F2, PTS2, PRIOR2, 0.8, rng)
        us.append(math.log(ell))
    us = np.array(us)
    edges = np.quantile(us, [0.2, 0.4, 0.6, 0.8])
    b = np.searchsorted(edges, us)
    flow = np.zeros((5, 5))
    np.add.at(flow, (b[:-1], b[1:]), 1)
    for i in range(5):
        for j in range(i + 1, 5):
            tot = flow[i, j] + flow[j, i]
            assert abs(flow[i, j] - flow[j, i]) <= 4 * math.sqrt(tot) + 2
