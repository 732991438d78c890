# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Cholesky helpers shared by the emulator and the statistical models."""

import logging

import numpy as np
from scipy import linalg

from ..errors import ConditioningError
from ..package_tools import Exporter

exporter = Exporter(globals())

log = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


@exporter.export
def cholesky_with_jitter(cov, ladder=JITTER_LADDER, values=None):
    """
    Lower Cholesky factor of ``cov``, adding diagonal jitter until it factorizes.

    Jitter rungs are relative to the mean of the diagonal.

    Parameters
    ----------
    cov : array-like
        Symmetric ``(n, n)`` matrix.
    ladder : sequence of float
        Relative jitter values tried in order.
    values : array-like, optional
        Parameter vector reported in the error when every rung fails.

    Returns
    -------
    chol : `numpy.ndarray`
        Lower triangular factor.
    jitter : float
        Absolute jitter that was added.
    """
    cov = np.asarray(cov, dtype=float)
    scale = float(np.mean(np.diag(cov))) if cov.size else 1.0
    if not np.isfinite(scale) or scale <= 0:
        raise ConditioningError('covariance has a non-positive or non-finite diagonal', values)
    for rung in ladder:
        jitter = rung * scale
        try:
            chol = linalg.cholesky(cov + jitter * np.eye(cov.shape[0]), lower=True,
                                   check_finite=True)
        except (linalg.LinAlgError, ValueError):
            log.debug('Cholesky failed with relative jitter %g', rung)
            continue
        return chol, jitter
    raise ConditioningError(f'covariance not factorizable with jitter up to '
                            f'{ladder[-1]:g} of the mean diagonal', values)


@exporter.export
def mvn_log_density(y, mean, chol):
    r"""
    Multivariate normal log density from a Cholesky factor.

    Parameters
    ----------
    y : array-like
        Observation vector.
    mean : array-like
        Mean vector.
    chol : array-like
        Lower Cholesky factor :math:`L` of the covariance.

    Returns
    -------
    log_density : float

    Notes
    -----
    .. math:: -\tfrac12 \lVert L^{-1}(y-\mu)\rVert^2 - \sum_i \log L_{ii}
              - \tfrac{n}{2}\log 2\pi
    """
    resid = np.asarray(y, dtype=float) - np.asarray(mean, dtype=float)
    white = linalg.solve_triangular(chol, resid, lower=True)
    n = resid.shape[0]
    return float(-0.5 * white @ white - np.sum(np.log(np.diag(chol)))
                 - 0.5 * n * np.log(2 * np.pi))
