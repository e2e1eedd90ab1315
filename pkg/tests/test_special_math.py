import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mich.errors import DegenerateWeightsError, DomainError
from mich.special_math import digamma, log_gamma, log_normalizer, normalize_log_weights

EULER_GAMMA = 0.5772156649015329


def test_log_gamma_known_values():
    assert log_gamma(1.0) == pytest.approx(0.0, abs=1e-15)
    assert log_gamma(2.0) == pytest.approx(0.0, abs=1e-15)
    assert log_gamma(0.5) == pytest.approx(0.5 * math.log(math.pi), abs=1e-14)
    assert log_gamma(5.0) == pytest.approx(math.log(24.0), abs=1e-13)


def test_digamma_known_values():
    assert digamma(1.0) == pytest.approx(-EULER_GAMMA, abs=1e-14)
    assert digamma(0.5) == pytest.approx(-EULER_GAMMA - 2 * math.log(2.0), abs=1e-14)
    assert digamma(2.0) == pytest.approx(1.0 - EULER_GAMMA, abs=1e-14)


def test_scalar_in_scalar_out_and_arrays():
    assert isinstance(log_gamma(3.0), float)
    assert isinstance(digamma(3.0), float)
    out = log_gamma(np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(out, [0.0, 0.0, math.log(2.0)], atol=1e-14)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), -0.5])
def test_nonpositive_arguments_rejected(bad):
    with pytest.raises(DomainError):
        log_gamma(bad)
    with pytest.raises(DomainError):
        digamma(bad)


def test_array_with_one_bad_entry_rejected():
    with pytest.raises(DomainError):
        log_gamma(np.array([1.0, 0.0]))


@given(st.floats(min_value=1e-3, max_value=1e6))
def test_recurrences(x):
    assert log_gamma(x + 1) == pytest.approx(log_gamma(x) + math.log(x), rel=1e-11, abs=1e-11)
    assert digamma(x + 1) == pytest.approx(digamma(x) + 1.0 / x, rel=1e-11, abs=1e-11)


def test_normalize_examples():
    np.testing.assert_allclose(normalize_log_weights([0.0, 0.0]), [0.5, 0.5])
    np.testing.assert_allclose(normalize_log_weights([math.log(3.0), 0.0]), [0.75, 0.25])
    p = normalize_log_weights([0.0, -np.inf, 0.0])
    assert p[1] == 0.0
    np.testing.assert_allclose(p, [0.5, 0.0, 0.5])


def test_normalize_survives_huge_offsets():
    # 1e6 - log(3) is itself only representable to about 1e-10
    p = normalize_log_weights([1e6, 1e6 - math.log(3.0)])
    np.testing.assert_allclose(p, [0.75, 0.25], rtol=1e-9)
    assert log_normalizer([1e6, 1e6]) == pytest.approx(1e6 + math.log(2.0))


@pytest.mark.parametrize("w", [[-np.inf, -np.inf], [0.0, np.nan], [0.0, np.inf]])
def test_degenerate_weights(w):
    with pytest.raises(DegenerateWeightsError):
        normalize_log_weights(w)
    with pytest.raises(DegenerateWeightsError):
        log_normalizer(w)


finite_vectors = st.lists(st.floats(min_value=-700, max_value=700), min_size=1, max_size=30)


@given(finite_vectors, st.floats(min_value=-1e4, max_value=1e4))
def test_normalize_is_shift_invariant_and_sums_to_one(w, c):
    p = normalize_log_weights(w)
    q = normalize_log_weights(np.asarray(w) + c)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(p, q, rtol=1e-9, atol=1e-300)
    assert np.all(p >= 0)


@settings(max_examples=50)
@given(finite_vectors)
def test_log_normalizer_matches_direct_sum(w):
    w = np.asarray(w) / 10.0
    assert log_normalizer(w) == pytest.approx(math.log(np.exp(w).sum()), rel=1e-12, abs=1e-12)
