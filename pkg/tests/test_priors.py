import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mich.errors import DomainError
from mich.priors import (
    default_kind,
    make_prior,
    meanvar_increments,
    uniform_prior,
    var_increments,
    weighted_mean_prior,
    weighted_meanvar_prior,
    weighted_var_prior,
)


def test_uniform():
    np.testing.assert_allclose(uniform_prior(4).pi, 0.25)


def test_weighted_mean_values():
    np.testing.assert_allclose(weighted_mean_prior(2).pi, [math.sqrt(2) / (1 + math.sqrt(2)),
                                                           1 / (1 + math.sqrt(2))])
    np.testing.assert_allclose(weighted_mean_prior(2, d=2).pi, [2 / 3, 1 / 3])


def test_weighted_var_values():
    np.testing.assert_allclose(weighted_var_prior(3).pi, [0.44272094, 0.34385043, 0.21342863],
                               atol=1e-8)


def test_weighted_meanvar_values():
    p = weighted_meanvar_prior(4).pi
    np.testing.assert_allclose(p, [0.53165525, 0.33500083, 0.13334392, 0.0], atol=1e-8)
    assert p[-1] == 0.0
    np.testing.assert_array_equal(weighted_meanvar_prior(2).pi, [1.0, 0.0])


def test_var_increments_closed_form_first_term():
    # T = 2: n = 1, a = 1, b = 1/2
    expected = (math.lgamma(1.0) - math.lgamma(0.5) + 0.5 + 0.5 * (-0.5772156649015329 - 2 * math.log(2))
                - 1.0 * (-0.5772156649015329))
    assert var_increments(2)[0] == pytest.approx(expected, abs=1e-14)


def test_var_increments_approach_mean_increments():
    T, t = 500, 100
    mean_inc = 0.5 * math.log((T - t) / (T - t + 1))
    assert var_increments(T)[t - 1] == pytest.approx(mean_inc, abs=1e-3)
    assert meanvar_increments(T)[t - 1] == pytest.approx(mean_inc, abs=2e-3)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 400), st.integers(1, 5))
def test_weighted_priors_are_distributions(T, d):
    for prior in (weighted_mean_prior(T, d), weighted_var_prior(T), weighted_meanvar_prior(T)):
        assert prior.pi.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(prior.pi >= 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 2000), st.integers(1, 5))
def test_mean_prior_decreasing_and_bounded(T, d):
    p = weighted_mean_prior(T, d).pi
    assert np.all(np.diff(p) < 0)
    log_pi = np.log(p)
    assert np.all(np.abs(log_pi) <= (3 + d / 2) * math.log(T) + 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 2000))
def test_var_and_meanvar_priors_decreasing(T):
    assert np.all(np.diff(weighted_var_prior(T).pi) < 0)
    assert np.all(np.diff(weighted_meanvar_prior(T).pi) < 0)


def test_make_prior_dispatch_and_cache():
    assert make_prior("weighted-mean", 10) is make_prior("weighted-mean", 10)
    assert make_prior("weighted-var", 1).pi.tolist() == [1.0]
    assert make_prior("weighted-meanvar", 1).pi.tolist() == [1.0]
    with pytest.raises(ValueError):
        make_prior("weighted-mean", 10).pi[0] = 0.0
    with pytest.raises(DomainError):
        make_prior("nonsense", 10)
    assert default_kind("meanvar") == "weighted-meanvar"
    with pytest.raises(DomainError):
        default_kind("poisson")


@pytest.mark.parametrize("bad", [0, -3, 2.5])
def test_bad_T(bad):
    with pytest.raises(DomainError):
        uniform_prior(bad)
    with pytest.raises(DomainError):
        weighted_var_prior(1)
