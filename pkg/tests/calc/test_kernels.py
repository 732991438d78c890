# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Test the `kernels` module."""

from hypothesis import given, settings
import hypothesis.extra.numpy as hnp
import hypothesis.strategies as st
import numpy as np
import pytest

from pycalib.calc import covariance_matrix, KERNEL_FAMILIES, kernel_value, KernelSpec
from pycalib.errors import DomainError, StructuralError
from pycalib.testing import assert_array_almost_equal, dense_kernel_matrix

families = st.sampled_from(sorted(KERNEL_FAMILIES))
points = hnp.arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 3)),
                    elements=st.floats(-5, 5, allow_nan=False))


def test_kernel_at_zero():
    """Every family equals its variance at distance zero."""
    for family in KERNEL_FAMILIES:
        assert kernel_value(KernelSpec(family, 2.5, 0.7), 0.0) == pytest.approx(2.5)


def test_gauss_value():
    """The squared exponential uses exp(-r^2/2)."""
    assert kernel_value(KernelSpec('gauss', 1.0, 2.0), 2.0) == pytest.approx(np.exp(-0.5))


def test_exp_value():
    """The exponential family uses exp(-r/2)."""
    assert kernel_value(KernelSpec('exp', 3.0, 1.0), 1.0) == pytest.approx(3 * np.exp(-0.5))


def test_matern_values():
    """Matern kernels match their closed forms at r=1."""
    s3, s5 = np.sqrt(3), np.sqrt(5)
    assert kernel_value(KernelSpec('matern3_2'), 1.0) == pytest.approx((1 + s3)
                                                                       * np.exp(-s3))
    assert kernel_value(KernelSpec('matern5_2'), 1.0) == pytest.approx(
        (1 + s5 + 5 / 3) * np.exp(-s5))


def test_unknown_family():
    """Unknown families are rejected."""
    with pytest.raises(DomainError):
        KernelSpec('cubic')


def test_non_positive_lengthscale():
    """Lengthscales must be positive."""
    with pytest.raises(DomainError):
        KernelSpec('gauss', 1.0, (1.0, 0.0))


def test_negative_distance():
    """Negative distances are rejected."""
    with pytest.raises(DomainError):
        kernel_value(KernelSpec('gauss'), -1.0)


def test_anisotropic_dimension_mismatch():
    """Per-dimension lengthscales must match the number of columns."""
    spec = KernelSpec('gauss', 1.0, (1.0, 2.0))
    with pytest.raises(StructuralError):
        covariance_matrix(spec, np.zeros((3, 3)))


def test_anisotropic_scaling():
    """Each column is scaled by its own lengthscale."""
    spec = KernelSpec('gauss', 1.0, (1.0, 10.0))
    cov = covariance_matrix(spec, [[0.0, 0.0]], [[1.0, 10.0]])
    assert cov[0, 0] == pytest.approx(np.exp(-1.0))


def test_covariance_matches_entrywise():
    """The vectorized matrix matches an entry by entry construction."""
    rng = np.random.default_rng(3)
    A, B = rng.random((6, 2)), rng.random((4, 2))
    for family in KERNEL_FAMILIES:
        spec = KernelSpec(family, 1.7, 0.4)
        assert_array_almost_equal(covariance_matrix(spec, A, B),
                                  dense_kernel_matrix(family, 1.7, 0.4, A, B), 12)


@settings(max_examples=50, deadline=None)
@given(family=families, x=points, variance=st.floats(0.1, 10),
       lengthscale=st.floats(0.05, 5))
def test_covariance_symmetric_psd(family, x, variance, lengthscale):
    """Covariance matrices are symmetric with a positive diagonal and PSD spectrum."""
    cov = covariance_matrix(KernelSpec(family, variance, lengthscale), x)
    assert np.array_equal(cov, cov.T)
    assert np.allclose(np.diag(cov), variance)
    assert np.linalg.eigvalsh(cov).min() >= -1e-8 * variance * x.shape[0]


@settings(max_examples=50, deadline=None)
@given(family=families, r=st.floats(0, 50), dr=st.floats(1e-3, 10))
def test_kernel_decreasing(family, r, dr):
    """Kernels never increase with distance."""
    spec = KernelSpec(family, 1.0, 1.0)
    assert kernel_value(spec, r + dr) <= kernel_value(spec, r) + 1e-15
