# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Stationary covariance functions for the emulator and the discrepancy term."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import DomainError, StructuralError
from ..package_tools import Exporter

exporter = Exporter(globals())


def _gauss(r):
    return np.exp(-0.5 * r ** 2)


def _exp(r):
    return np.exp(-0.5 * r)


def _matern3_2(r):
    s = np.sqrt(3) * r
    return (1 + s) * np.exp(-s)


def _matern5_2(r):
    s = np.sqrt(5) * r
    return (1 + s + s ** 2 / 3) * np.exp(-s)


with exporter:
    KERNEL_FAMILIES = {'gauss': _gauss, 'exp': _exp, 'matern3_2': _matern3_2,
                       'matern5_2': _matern5_2}


@exporter.export
@dataclass(frozen=True)
class KernelSpec:
    """
    A stationary kernel: family, variance and lengthscales.

    Parameters
    ----------
    family : str
        One of ``gauss``, ``exp``, ``matern3_2`` or ``matern5_2``.
    variance : float
        Process variance, strictly positive.
    lengthscales : float or array-like
        One lengthscale per input dimension, or a single value for an isotropic kernel.
    """

    family: str
    variance: float = 1.0
    lengthscales: tuple = (1.0,)

    def __post_init__(self):
        """Validate the family and the positivity of the hyperparameters."""
        if self.family not in KERNEL_FAMILIES:
            raise DomainError(f'unknown kernel family {self.family!r}; expected one of '
                              f'{sorted(KERNEL_FAMILIES)}')
        lengthscales = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        if not lengthscales:
            raise DomainError('at least one lengthscale is required')
        if not float(self.variance) > 0 or not all(v > 0 for v in lengthscales):
            raise DomainError(f'kernel variance and lengthscales must be positive, got '
                              f'{self.variance} and {lengthscales}')
        object.__setattr__(self, 'variance', float(self.variance))
        object.__setattr__(self, 'lengthscales', lengthscales)

    @property
    def isotropic(self):
        """Whether a single lengthscale is shared by every dimension."""
        return len(self.lengthscales) == 1

    def with_params(self, variance=None, lengthscales=None):
        """Return a copy with some hyperparameters replaced."""
        return KernelSpec(self.family,
                          self.variance if variance is None else variance,
                          self.lengthscales if lengthscales is None else lengthscales)


@exporter.export
def kernel_value(spec, d):
    r"""
    Evaluate a kernel at a distance.

    Parameters
    ----------
    spec : `KernelSpec`
        Kernel to evaluate. For anisotropic kernels ``d`` must already be scaled.
    d : float or array-like
        Non-negative distance.

    Returns
    -------
    covariance : float or `numpy.ndarray`

    Notes
    -----
    With :math:`r = d/\psi`:

    * gauss: :math:`\sigma^2 e^{-r^2/2}`
    * exp: :math:`\sigma^2 e^{-r/2}`
    * matern3_2: :math:`\sigma^2 (1+\sqrt3 r) e^{-\sqrt3 r}`
    * matern5_2: :math:`\sigma^2 (1+\sqrt5 r+5r^2/3) e^{-\sqrt5 r}`
    """
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise DomainError('distances must be non-negative')
    psi = spec.lengthscales[0] if spec.isotropic else 1.0
    out = spec.variance * KERNEL_FAMILIES[spec.family](d / psi)
    if out.ndim == 0:
        return float(out)
    return out


@exporter.export
def scaled_distances(spec, A, B):
    """Pairwise distances between rows after dividing each column by its lengthscale."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise StructuralError(f'inputs have {A.shape[1]} and {B.shape[1]} columns')
    if spec.isotropic:
        return cdist(A, B) / spec.lengthscales[0]
    if len(spec.lengthscales) != A.shape[1]:
        raise StructuralError(f'kernel has {len(spec.lengthscales)} lengthscales but the '
                              f'inputs have {A.shape[1]} columns')
    psi = np.asarray(spec.lengthscales)
    return cdist(A / psi, B / psi)


@exporter.export
def covariance_matrix(spec, A, B=None):
    """
    Covariance between every row of ``A`` and every row of ``B``.

    Parameters
    ----------
    spec : `KernelSpec`
        Kernel to use.
    A : array-like
        ``(m, q)`` points.
    B : array-like, optional
        ``(k, q)`` points; ``A`` itself when omitted.

    Returns
    -------
    cov : `numpy.ndarray`
        ``(m, k)`` covariance matrix, exactly symmetric when ``B`` is omitted.
    """
    symmetric = B is None
    r = scaled_distances(spec, A, A if symmetric else B)
    cov = spec.variance * KERNEL_FAMILIES[spec.family](r)
    if symmetric:
        cov = 0.5 * (cov + cov.T)
    return cov
