# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Test the `linalg` module."""

import numpy as np
import pytest

from pycalib.calc import cholesky_with_jitter, mvn_log_density
from pycalib.errors import ConditioningError
from pycalib.testing import assert_array_almost_equal, dense_mvn_log_density


def test_cholesky_no_jitter():
    """A well conditioned matrix factorizes without jitter."""
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    chol, jitter = cholesky_with_jitter(cov)
    assert jitter == 0.0
    assert_array_almost_equal(chol @ chol.T, cov, 12)


def test_cholesky_singular_gets_jitter():
    """A rank deficient matrix is rescued by a small jitter."""
    cov = np.ones((3, 3))
    chol, jitter = cholesky_with_jitter(cov)
    assert jitter > 0
    assert_array_almost_equal(chol @ chol.T, cov + jitter * np.eye(3), 10)


def test_cholesky_failure_reports_values():
    """An indefinite matrix raises with the parameter values attached."""
    cov = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ConditioningError) as err:
        cholesky_with_jitter(cov, values=[0.5, 2.0])
    assert_array_almost_equal(err.value.values, [0.5, 2.0])


def test_mvn_log_density_matches_dense():
    """The Cholesky log density matches the explicit inverse."""
    rng = np.random.default_rng(0)
    A = rng.standard_normal((5, 5))
    cov = A @ A.T + 5 * np.eye(5)
    y, mean = rng.standard_normal(5), rng.standard_normal(5)
    chol, _ = cholesky_with_jitter(cov)
    assert mvn_log_density(y, mean, chol) == pytest.approx(dense_mvn_log_density(y, mean, cov),
                                                           abs=1e-10)


def test_mvn_log_density_standard():
    """The standard normal density at zero is -log(2 pi)/2 per dimension."""
    assert mvn_log_density(np.zeros(3), np.zeros(3), np.eye(3)) == pytest.approx(
        -1.5 * np.log(2 * np.pi))
