# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Collection of utilities for testing."""

import numpy as np
import numpy.testing
from pint import DimensionalityError

from .calc.kernels import kernel_value, KernelSpec
from .calc.priors import PriorSet, PriorSpec
from .core import ObservationSet, oscillator_code
from .units import units

OSCILLATOR_THETA = (1.0, 0.3, 6.0, 0.05, np.pi / 2)


def check_and_drop_units(actual, desired):
    """
    Check that the units of two values are compatible and return their magnitudes.

    Parameters
    ----------
    actual : `pint.Quantity` or array-like
    desired : `pint.Quantity` or array-like

    Returns
    -------
    actual, desired
        Magnitudes, ``actual`` expressed in the units of ``desired``.

    Raises
    ------
    AssertionError
        If the units are not compatible.
    """
    try:
        if hasattr(desired, 'units'):
            if not hasattr(actual, 'units'):
                actual = units.Quantity(actual, 'dimensionless')
            actual = actual.to(desired.units)
        elif hasattr(actual, 'units'):
            actual = actual.to('dimensionless')
    except DimensionalityError:
        raise AssertionError(f'Units are not compatible: {actual.units} should be '
                             f'{getattr(desired, "units", "dimensionless")}') from None
    return getattr(actual, 'magnitude', actual), getattr(desired, 'magnitude', desired)


def assert_array_almost_equal(actual, desired, decimal=7):
    """Unit-aware wrapper around :func:`numpy.testing.assert_array_almost_equal`."""
    actual, desired = check_and_drop_units(actual, desired)
    numpy.testing.assert_array_almost_equal(actual, desired, decimal)


def dense_mvn_log_density(y, mean, cov):
    """Gaussian log density through an explicit inverse and determinant."""
    r = np.asarray(y, dtype=float) - np.asarray(mean, dtype=float)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    sign, logdet = np.linalg.slogdet(cov)
    assert sign > 0
    return float(-0.5 * (r.shape[0] * np.log(2 * np.pi) + logdet
                         + r @ np.linalg.inv(cov) @ r))


def dense_kernel_matrix(family, variance, lengthscale, A, B=None):
    """Kernel matrix built entry by entry from Euclidean distances."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    spec = KernelSpec(family, variance, (lengthscale,))
    out = np.empty((A.shape[0], B.shape[0]))
    for i, a in enumerate(A):
        for j, b in enumerate(B):
            out[i, j] = kernel_value(spec, float(np.sqrt(np.sum((a - b) ** 2))))
    return out


def dense_gp_conditional(model, T):
    """
    Emulator mean and covariance at ``T`` by explicit inversion of the training matrix.

    The kernel is evaluated in the coordinates the emulator works in, with the profiled
    variance, lengthscales, trend and nugget of ``model``.
    """
    D = model.to_unit(model.design)
    T = model.to_unit(T)
    psi = np.asarray(model.kernel.lengthscales, dtype=float)
    D, T = D / psi, T / psi
    fam, var = model.kernel.family, model.kernel.variance
    K = dense_kernel_matrix(fam, var, 1.0, D) + var * model.nugget * np.eye(D.shape[0])
    k = dense_kernel_matrix(fam, var, 1.0, D, T)
    beta = model.trend.beta[0]
    Kinv = np.linalg.inv(K)
    mean = beta + k.T @ Kinv @ (model.outputs - beta)
    cov = dense_kernel_matrix(fam, var, 1.0, T) - k.T @ Kinv @ k
    return mean, cov


class StubGenerator:
    """
    Stand-in for `numpy.random.Generator` counting the draws a sampler makes.

    Parameters
    ----------
    seed : int
        Seed of the wrapped generator.
    normals, uniforms : sequence of float, optional
        Scripted values returned, in order, by ``standard_normal()`` and ``random()``
        instead of fresh draws.
    """

    def __init__(self, seed=0, normals=None, uniforms=None):
        """Wrap a fresh generator."""
        self._rng = np.random.default_rng(seed)
        self._normals = list(normals) if normals is not None else None
        self._uniforms = list(uniforms) if uniforms is not None else None
        self.normal_calls = 0
        self.uniform_calls = 0

    def standard_normal(self, size=None):
        """Scripted or fresh standard normal draws."""
        self.normal_calls += 1
        if self._normals is None:
            return self._rng.standard_normal(size)
        if size is None:
            return self._normals.pop(0)
        return np.array([self._normals.pop(0) for _ in range(int(np.prod(size)))]
                        ).reshape(size)

    def random(self, size=None):
        """Scripted or fresh uniform draws."""
        self.uniform_calls += 1
        if self._uniforms is None:
            return self._rng.random(size)
        return self._uniforms.pop(0)


def simulate_oscillator(n=50, theta=OSCILLATOR_THETA, noise_var=1e-4, t_max=2.0, seed=0):
    """Noisy oscillator displacements at ``n`` equally spaced times in ``[0, t_max]``."""
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, t_max, n)
    y = oscillator_code(t, theta) + np.sqrt(noise_var) * rng.standard_normal(n)
    return ObservationSet(t[:, np.newaxis], y)


def oscillator_priors(discrepancy=False):
    """
    Priors of the oscillator study.

    Gaussian priors centred on the true parameters and a gamma prior on the measurement
    error variance; with ``discrepancy`` a ``gamma`` prior on the discrepancy variance
    and a ``unif(0, 1)`` prior on its lengthscale are inserted before the last slot.
    """
    specs = [PriorSpec('gaussian', (1.0, 1e-3)), PriorSpec('gaussian', (0.3, 1e-3)),
             PriorSpec('gaussian', (6.0, 1e-3)), PriorSpec('gaussian', (0.05, 1e-5)),
             PriorSpec('gaussian', (np.pi / 2, 1e-2))]
    if discrepancy:
        specs += [PriorSpec('gamma', (1.0, 1e-3)), PriorSpec('unif', (0.0, 1.0))]
    specs.append(PriorSpec('gamma', (1.0, 1e-3)))
    return PriorSet(specs)


def oscillator_start(discrepancy=False):
    """Sampler starting point used with `oscillator_priors`."""
    if discrepancy:
        return np.array([1.0, 0.3, 6.0, 0.05, np.pi / 2, 1e-3, 0.5, 1e-3])
    return np.array([1.0, 0.25, 6.0, 0.05, np.pi / 2, 1e-3])
