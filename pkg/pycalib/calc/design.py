# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Space filling designs of experiments and bound scaling."""

from dataclasses import dataclass
import logging
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist

from ..errors import DomainError, StructuralError
from ..package_tools import Exporter

exporter = Exporter(globals())

log = logging.getLogger(__name__)


def _check_bounds(binf, bsup, q=None):
    binf = np.atleast_1d(np.asarray(binf, dtype=float))
    bsup = np.atleast_1d(np.asarray(bsup, dtype=float))
    if binf.shape != bsup.shape or binf.ndim != 1:
        raise StructuralError(f'bounds have shapes {binf.shape} and {bsup.shape}')
    if q is not None and binf.shape[0] != q:
        raise StructuralError(f'bounds have {binf.shape[0]} entries, design has {q} columns')
    if not np.all(binf < bsup):
        raise DomainError(f'lower bounds must be below upper bounds: {binf} vs {bsup}')
    return binf, bsup


@exporter.export
@dataclass(frozen=True, eq=False)
class DesignOfExperiments:
    """
    A set of simulator runs in original units.

    Parameters
    ----------
    points : array-like
        ``(n_d, q)`` design points.
    binf, bsup : array-like
        Lower and upper bounds of every column.
    provenance : str
        ``generated`` or ``user-supplied``.
    n_inputs : int, optional
        Number of leading input-variable columns when the design spans input and
        parameter space.
    """

    points: np.ndarray
    binf: np.ndarray
    bsup: np.ndarray
    provenance: str = 'generated'
    n_inputs: Optional[int] = None

    def __post_init__(self):
        """Check that every point lies inside the bounds."""
        points = np.array(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, np.newaxis]
        binf, bsup = _check_bounds(self.binf, self.bsup, points.shape[1])
        if np.any(points < binf) or np.any(points > bsup):
            raise DomainError('design points fall outside their bounds')
        if self.provenance not in ('generated', 'user-supplied'):
            raise DomainError(f'unknown design provenance {self.provenance!r}')
        if self.n_inputs is not None and not 0 <= self.n_inputs <= points.shape[1]:
            raise StructuralError(f'n_inputs={self.n_inputs} for a design with '
                                  f'{points.shape[1]} columns')
        for arr in (points, binf, bsup):
            arr.flags.writeable = False
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'binf', binf)
        object.__setattr__(self, 'bsup', bsup)

    @property
    def shape(self):
        """Shape of the point matrix."""
        return self.points.shape

    @property
    def column_names(self):
        """``x1..xd, theta1..thetap`` when the split is known, ``u1..uq`` otherwise."""
        q = self.points.shape[1]
        if self.n_inputs is None:
            return [f'u{i + 1}' for i in range(q)]
        return ([f'x{i + 1}' for i in range(self.n_inputs)]
                + [f'theta{i + 1}' for i in range(q - self.n_inputs)])

    def unit(self):
        """Points mapped to the unit cube."""
        return scale(self.points, self.binf, self.bsup)


@exporter.export
def random_lhs(n, q, seed=None):
    """
    Random Latin hypercube in the unit cube.

    Parameters
    ----------
    n : int
        Number of points.
    q : int
        Number of dimensions.
    seed : int or `numpy.random.Generator`, optional
        Random source.

    Returns
    -------
    design : `numpy.ndarray`
        ``(n, q)`` points with exactly one point per stratum ``[k/n, (k+1)/n)`` in every
        column.
    """
    if n < 1 or q < 1:
        raise DomainError(f'need n >= 1 and q >= 1, got n={n}, q={q}')
    rng = np.random.default_rng(seed)
    strata = np.column_stack([rng.permutation(n) for _ in range(q)])
    return (strata + rng.random((n, q))) / n


def _min_distance(dist):
    return dist[np.triu_indices_from(dist, k=1)].min()


@exporter.export
def lhs_maximin(n, q, seed=None, iterations=None, return_initial=False):
    """
    Maximin Latin hypercube by greedy random pair swaps.

    Each step picks a column and two rows and swaps their entries, which keeps every
    column stratified. The swap is kept when the smallest pairwise distance does not
    decrease.

    Parameters
    ----------
    n : int
        Number of points, at least 2.
    q : int
        Number of dimensions.
    seed : int or `numpy.random.Generator`, optional
        Random source.
    iterations : int, optional
        Number of attempted swaps, ``10 * n * q`` by default.
    return_initial : bool
        Also return the random design the optimisation started from.

    Returns
    -------
    design : `numpy.ndarray`
        ``(n, q)`` unit-cube design.
    initial : `numpy.ndarray`
        Only when ``return_initial`` is set.
    """
    if n < 2:
        raise DomainError(f'a maximin design needs at least 2 points, got {n}')
    if q < 1:
        raise DomainError(f'a design needs at least 1 dimension, got {q}')
    rng = np.random.default_rng(seed)
    design = random_lhs(n, q, rng)
    initial = design.copy()
    if iterations is None:
        iterations = 10 * n * q

    dist = cdist(design, design)
    current = _min_distance(dist)
    accepted = 0
    for _ in range(iterations):
        col = rng.integers(q)
        i, j = rng.choice(n, size=2, replace=False)
        design[[i, j], col] = design[[j, i], col]
        rows = cdist(design[[i, j]], design)
        trial = dist.copy()
        trial[[i, j], :] = rows
        trial[:, [i, j]] = rows.T
        candidate = _min_distance(trial)
        if candidate >= current:
            dist, current = trial, candidate
            accepted += 1
        else:
            design[[i, j], col] = design[[j, i], col]
    log.debug('maximin LHS %dx%d: %d of %d swaps kept, min distance %.6g -> %.6g',
              n, q, accepted, iterations, pdist(initial).min(), current)
    if return_initial:
        return design, initial
    return design


@exporter.export
def unscale(design, binf, bsup):
    """
    Map a unit-cube design to the box ``[binf, bsup]``.

    Parameters
    ----------
    design : array-like
        ``(n, q)`` points in ``[0, 1]``.
    binf, bsup : array-like
        Column bounds.

    Returns
    -------
    points : `numpy.ndarray`
        ``binf + u * (bsup - binf)``, exact at both end points.
    """
    u = np.asarray(design, dtype=float)
    if u.ndim == 1:
        u = u[:, np.newaxis]
    binf, bsup = _check_bounds(binf, bsup, u.shape[1])
    if np.any(u < 0) or np.any(u > 1):
        raise DomainError('unit-cube design has entries outside [0, 1]')
    return np.clip(binf * (1 - u) + bsup * u, binf, bsup)


@exporter.export
def scale(points, binf, bsup):
    """Inverse of `unscale`: map points in ``[binf, bsup]`` to the unit cube."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, np.newaxis]
    binf, bsup = _check_bounds(binf, bsup, points.shape[1])
    return (points - binf) / (bsup - binf)


@exporter.export
def joint_design(x_bounds, theta_bounds, n=None, seed=None, iterations=None):
    """
    Maximin design over input space times parameter space.

    Parameters
    ----------
    x_bounds : pair of array-like
        ``(low, high)`` of the ``d`` input variables.
    theta_bounds : pair of array-like
        ``(binf, bsup)`` of the ``p`` parameters.
    n : int, optional
        Number of points, ``10 * (d + p)`` by default.
    seed : int or `numpy.random.Generator`, optional
        Random source.
    iterations : int, optional
        Swap budget passed to `lhs_maximin`.

    Returns
    -------
    design : `DesignOfExperiments`
        The first ``d`` columns are inputs, the last ``p`` are parameters.
    """
    xlow, xhigh = _check_bounds(*x_bounds)
    tlow, thigh = _check_bounds(*theta_bounds)
    binf = np.concatenate([xlow, tlow])
    bsup = np.concatenate([xhigh, thigh])
    q = binf.shape[0]
    if n is None:
        n = 10 * q
    unit = lhs_maximin(n, q, seed=seed, iterations=iterations)
    return DesignOfExperiments(unscale(unit, binf, bsup), binf, bsup, 'generated',
                               n_inputs=xlow.shape[0])
