# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Test the `priors` module."""

from hypothesis import given, settings
import hypothesis.strategies as st
import numpy as np
import pytest
from scipy import integrate

from pycalib.calc import (log_prior_density, log_prior_total, PriorSet, PriorSpec,
                          sample_prior)
from pycalib.core import ParameterLayout, ParameterVector
from pycalib.errors import ConfigError, DomainError, StructuralError
from pycalib.testing import assert_array_almost_equal, oscillator_priors


def test_gamma_unit_value():
    """gamma(1, 1) at 0.5 is the exponential log density -0.5."""
    assert log_prior_density(PriorSpec('gamma', (1, 1)), 0.5) == pytest.approx(-0.5)


def test_gamma_outside_support():
    """The gamma prior vanishes at and below zero."""
    assert log_prior_density(PriorSpec('gamma', (2, 1)), 0.0) == -np.inf


def test_gaussian_matches_scipy():
    """The gaussian prior takes a variance, not a standard deviation."""
    spec = PriorSpec('gaussian', (0.3, 1e-3))
    assert log_prior_density(spec, 0.31) == pytest.approx(spec.distribution.logpdf(0.31))
    assert spec.distribution.std() == pytest.approx(np.sqrt(1e-3))


def test_uniform_support():
    """The uniform prior is flat inside and vanishes outside."""
    spec = PriorSpec('unif', (0, 4))
    assert log_prior_density(spec, 1.0) == pytest.approx(-np.log(4))
    assert log_prior_density(spec, 4.5) == -np.inf


def test_moments():
    """Means and variances follow the family parameters."""
    assert PriorSpec('gamma', (2, 3)).mean == 6
    assert PriorSpec('gamma', (2, 3)).variance == 18
    assert PriorSpec('unif', (0, 1)).variance == pytest.approx(1 / 12)


@pytest.mark.parametrize('family, params', [('gaussian', (0, 0)), ('gamma', (-1, 1)),
                                            ('unif', (1, 1)), ('beta', (1, 1))])
def test_invalid_priors(family, params):
    """Invalid family parameters are rejected."""
    with pytest.raises(DomainError):
        PriorSpec(family, params)


def test_prior_wrong_arity():
    """Priors take exactly two parameters."""
    with pytest.raises(StructuralError):
        PriorSpec('gamma', (1, 2, 3))


def test_prior_from_config_missing_key():
    """Configuration entries need both keys."""
    with pytest.raises(ConfigError):
        PriorSpec.from_config({'type': 'gamma'})


def test_prior_set_layout_length():
    """A set must have one prior per slot."""
    with pytest.raises(StructuralError):
        oscillator_priors().with_layout(ParameterLayout(5, True))


def test_prior_set_positive_support():
    """Variance slots need a prior supported on the positive axis."""
    specs = (PriorSpec('gaussian', (0, 1)), PriorSpec('gaussian', (1, 1)))
    with pytest.raises(DomainError):
        PriorSet(specs, ParameterLayout(1))


def test_prior_set_concatenation():
    """Sets concatenate slot by slot."""
    both = PriorSet([PriorSpec('unif', (0, 1))]) + PriorSet([PriorSpec('gamma', (1, 1))])
    assert len(both) == 2
    assert_array_almost_equal(both.means, [0.5, 1.0])


def test_log_prior_total():
    """The total is the sum of the slot densities."""
    priors = oscillator_priors()
    v = np.array([1.0, 0.3, 6.0, 0.05, np.pi / 2, 1e-3])
    expected = sum(s.distribution.logpdf(x) for s, x in zip(priors, v))
    assert log_prior_total(priors, v) == pytest.approx(expected)


def test_log_prior_total_outside_support():
    """A single slot outside its support makes the total -inf."""
    priors = oscillator_priors(discrepancy=True)
    v = np.array([1.0, 0.3, 6.0, 0.05, np.pi / 2, 1e-3, 1.5, 1e-3])
    assert log_prior_total(priors, v) == -np.inf


def test_sample_prior_with_layout():
    """Prior draws with a layout are parameter vectors."""
    layout = ParameterLayout(5, True)
    v = sample_prior(oscillator_priors(True).with_layout(layout), seed=0)
    assert isinstance(v, ParameterVector)
    assert 0 <= v.values[6] <= 1


def test_sample_prior_reproducible():
    """The same seed gives the same draw."""
    priors = oscillator_priors()
    assert np.array_equal(sample_prior(priors, 7), sample_prior(priors, 7))


@settings(max_examples=30, deadline=None)
@given(spec=st.one_of(
    st.builds(lambda m, v: PriorSpec('gaussian', (m, v)), st.floats(-10, 10),
              st.floats(1e-4, 10)),
    st.builds(lambda a, k: PriorSpec('gamma', (a, k)), st.floats(1, 10), st.floats(1e-3, 10)),
    st.builds(lambda a, w: PriorSpec('unif', (a, a + w)), st.floats(-10, 10),
              st.floats(0.1, 10))))
def test_prior_integrates_to_one(spec):
    """Every prior density integrates to one."""
    dist = spec.distribution
    low, high = dist.ppf(1e-12), dist.isf(1e-12)
    total, _ = integrate.quad(lambda x: np.exp(log_prior_density(spec, x)), low, high,
                              points=[spec.mean], limit=200)
    assert total == pytest.approx(1.0, abs=1e-3)
