import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randbq.bq import Design, bq_posterior, variance_crosscheck, worst_case_error
from randbq.errors import InvalidInputError, NumericalConsistencyError
from randbq.kernels import MATERN32, RBF, Kernel
from randbq.measures import Embedding, Gaussian, build_embedding, kernel_mean_closed

K = Kernel(RBF)
EMB = build_embedding(K, Gaussian())
ONE_POINT_VAR = 0.0773502691896257645  # sqrt(1/3) - 1/2
ONE_POINT_WCE = 0.278119163650449957


def test_empty_design():
    p = bq_posterior(K, EMB, Design([], []))
    assert (p.mean, p.variance) == (0.0, pytest.approx(math.sqrt(1 / 3)))
    assert worst_case_error(p) == pytest.approx((1 / 3) ** 0.25, rel=1e-12)
    assert variance_crosscheck(K, EMB, Design([], [])) == EMB.prior_integral_variance


def test_one_point():
    c = 2.5
    p = bq_posterior(K, EMB, Design([0.0], [c]), nugget=0.0)
    assert p.weights[0] == pytest.approx(math.sqrt(0.5), rel=1e-14)
    assert p.mean == pytest.approx(math.sqrt(0.5) * c, rel=1e-14)
    assert p.variance == pytest.approx(ONE_POINT_VAR, rel=1e-13)
    assert worst_case_error(p) == pytest.approx(ONE_POINT_WCE, rel=1e-13)
    assert variance_crosscheck(K, EMB, Design([0.0], [c]), nugget=0.0) == pytest.approx(ONE_POINT_VAR, abs=1e-10)


def test_duplicate_point():
    one = bq_posterior(K, EMB, Design([0.4], [1.3]))
    two = bq_posterior(K, EMB, Design([0.4, 0.4], [1.3, 1.3]))
    assert two.mean == pytest.approx(one.mean, abs=1e-6)
    assert two.variance <= one.variance + 1e-12


def test_mean_is_weights_dot_values(rng):
    x = rng.normal(size=25)
    d = Design.from_function(np.cos, x)
    p = bq_posterior(K, EMB, d)
    assert p.mean == float(p.weights @ d.values)
    assert 0.0 <= p.variance <= p.prior_variance + 1e-10


@pytest.mark.parametrize("variant", [RBF, MATERN32])
def test_crosscheck_random_design(variant, rng):
    k = Kernel(variant, 0.7, 0.6)
    emb = build_embedding(k, Gaussian())
    d = Design.from_function(np.sin, rng.normal(scale=2.0, size=20))
    assert variance_crosscheck(k, emb, d) == pytest.approx(bq_posterior(k, emb, d).variance, abs=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([RBF, MATERN32]))
def test_nested_designs_monotone(seed, variant):
    r = np.random.default_rng(seed)
    k = Kernel(variant, 1.0, float(r.uniform(0.2, 1.5)))
    emb = build_embedding(k, Gaussian())
    x = r.normal(scale=1.5, size=40)
    vals = [bq_posterior(k, emb, Design(x[:n], np.zeros(n))).variance for n in range(1, 41)]
    assert np.all(np.diff(vals) <= 1e-10)


def test_dense_design_reproduces_kernel_translate():
    k = Kernel(MATERN32, 1.0, 0.8)
    emb = build_embedding(k, Gaussian())
    xstar = 0.37
    x = np.linspace(-6, 6, 150)
    d = Design(x, k.of_distance(np.abs(x - xstar)))
    p = bq_posterior(k, emb, d)
    assert abs(p.mean - float(kernel_mean_closed(k, Gaussian(), xstar))) <= worst_case_error(p) * 1.0


def test_mismatched_embedding_rejected():
    with pytest.raises(InvalidInputError):
        bq_posterior(Kernel(RBF, 2.0), EMB, Design([0.0], [1.0]))


def test_negative_variance_detected():
    bad = Embedding(K, Gaussian(), "closed", 0.1, "closed")
    with pytest.raises(NumericalConsistencyError):
        bq_posterior(K, bad, Design(np.linspace(-2, 2, 10), np.zeros(10)))


def test_tiny_negative_variance_clamped(caplog):
    d = Design(np.linspace(-2, 2, 10), np.zeros(10))
    exact = bq_posterior(K, EMB, d)
    shifted = Embedding(K, Gaussian(), "closed", EMB.prior_integral_variance - exact.variance - 5e-9, "closed")
    with caplog.at_level(logging.INFO):
        p = bq_posterior(K, shifted, d)
    assert p.variance == 0.0


def test_design_validation():
    with pytest.raises(InvalidInputError):
        Design([0.0, 1.0], [1.0])
    with pytest.raises(InvalidInputError):
        Design([0.0], [float("nan")])
    d = Design([0.0, 1.0, 2.0], [1.0, 2.0, 3.0], {"seed": 1})
    assert d.prefix(2).n == 2 and d.prefix(2).provenance == {"seed": 1, "n": 2}
