# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Independent prior distributions for the calibration parameters."""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import special, stats

from ..core import ParameterLayout, ParameterVector
from ..errors import ConfigError, DomainError, StructuralError
from ..package_tools import Exporter

exporter = Exporter(globals())

with exporter:
    PRIOR_FAMILIES = ('gaussian', 'gamma', 'unif')


@exporter.export
@dataclass(frozen=True)
class PriorSpec:
    """
    A univariate prior.

    Parameters
    ----------
    family : str
        ``gaussian`` with ``(m, V)`` (mean and variance), ``gamma`` with ``(a, k)``
        (shape and scale) or ``unif`` with ``(a, b)`` (support bounds).
    params : tuple of float
        Family parameters in the order above.
    """

    family: str
    params: Tuple[float, float]

    def __post_init__(self):
        """Validate the parameters of the family."""
        if self.family not in PRIOR_FAMILIES:
            raise DomainError(f'unknown prior family {self.family!r}; expected one of '
                              f'{list(PRIOR_FAMILIES)}')
        params = tuple(float(v) for v in np.atleast_1d(self.params))
        if len(params) != 2:
            raise StructuralError(f'{self.family} prior takes 2 parameters, got {len(params)}')
        first, second = params
        if not all(np.isfinite(params)):
            raise DomainError(f'{self.family} prior parameters must be finite')
        if self.family == 'gaussian' and second <= 0:
            raise DomainError(f'gaussian prior needs V > 0, got {second}')
        if self.family == 'gamma' and (first <= 0 or second <= 0):
            raise DomainError(f'gamma prior needs a > 0 and k > 0, got {params}')
        if self.family == 'unif' and first >= second:
            raise DomainError(f'uniform prior needs a < b, got {params}')
        object.__setattr__(self, 'params', params)

    @property
    def support(self):
        """``(lower, upper)`` of the support."""
        if self.family == 'gaussian':
            return (-np.inf, np.inf)
        if self.family == 'gamma':
            return (0.0, np.inf)
        return self.params

    @property
    def distribution(self):
        """Frozen :mod:`scipy.stats` distribution."""
        first, second = self.params
        if self.family == 'gaussian':
            return stats.norm(loc=first, scale=np.sqrt(second))
        if self.family == 'gamma':
            return stats.gamma(first, scale=second)
        return stats.uniform(loc=first, scale=second - first)

    @property
    def mean(self):
        """Prior mean."""
        first, second = self.params
        if self.family == 'gaussian':
            return first
        if self.family == 'gamma':
            return first * second
        return 0.5 * (first + second)

    @property
    def variance(self):
        """Prior variance."""
        first, second = self.params
        if self.family == 'gaussian':
            return second
        if self.family == 'gamma':
            return first * second ** 2
        return (second - first) ** 2 / 12

    def log_density(self, x):
        """Log density at ``x``; ``-inf`` outside the support."""
        return log_prior_density(self, x)

    def sample(self, rng, size=None):
        """Draw from the prior with the generator ``rng``."""
        return self.distribution.rvs(size=size, random_state=rng)

    def to_config(self):
        """Configuration entry ``{"type": ..., "opt": [...]}``."""
        return {'type': self.family, 'opt': list(self.params)}

    @classmethod
    def from_config(cls, entry):
        """Build a prior from a configuration entry."""
        try:
            return cls(entry['type'], tuple(entry['opt']))
        except (KeyError, TypeError) as e:
            raise ConfigError(f'prior entries need "type" and "opt" keys, '
                              f'got {entry!r}') from e


@exporter.export
def log_prior_density(spec, x):
    r"""
    Log density of a univariate prior.

    Parameters
    ----------
    spec : `PriorSpec`
        Prior to evaluate.
    x : float
        Evaluation point.

    Returns
    -------
    log_density : float
        ``-inf`` outside the support.

    Notes
    -----
    The gamma prior uses the shape-scale form
    :math:`f(x) = x^{a-1} e^{-x/k} / (k^a \Gamma(a))`.
    """
    x = float(x)
    first, second = spec.params
    if spec.family == 'gaussian':
        return -0.5 * np.log(2 * np.pi * second) - 0.5 * (x - first) ** 2 / second
    if spec.family == 'gamma':
        if x <= 0:
            return -np.inf
        return ((first - 1) * np.log(x) - x / second - first * np.log(second)
                - special.gammaln(first))
    if first <= x <= second:
        return -np.log(second - first)
    return -np.inf


@exporter.export
@dataclass(frozen=True)
class PriorSet:
    """
    One independent prior per slot of a parameter layout.

    Parameters
    ----------
    specs : sequence of `PriorSpec`
        Priors in layout order.
    layout : `ParameterLayout`, optional
        Layout the set is checked against. Without one the set is a free list, which is
        useful when assembling it from parts.
    """

    specs: Tuple[PriorSpec, ...]
    layout: Optional[ParameterLayout] = None

    def __post_init__(self):
        """Check the length and the support of the variance slots."""
        specs = tuple(self.specs)
        if not all(isinstance(s, PriorSpec) for s in specs):
            raise StructuralError('a prior set holds PriorSpec instances')
        object.__setattr__(self, 'specs', specs)
        if self.layout is None:
            return
        if len(specs) != self.layout.total:
            raise StructuralError(f'{len(specs)} priors for a layout of {self.layout.total} '
                                  f'slots ({", ".join(self.layout.names)})')
        for slot in self.layout.positive_slots:
            if specs[slot].support[0] < 0:
                raise DomainError(f'prior for {self.layout.names[slot]} must have support '
                                  f'in (0, inf), got {specs[slot].family}'
                                  f'{specs[slot].params}')

    def __len__(self):
        """Number of slots."""
        return len(self.specs)

    def __iter__(self):
        """Iterate over the slot priors."""
        return iter(self.specs)

    def __add__(self, other):
        """Concatenate two sets; the result carries no layout."""
        if not isinstance(other, PriorSet):
            return NotImplemented
        return PriorSet(self.specs + other.specs)

    def with_layout(self, layout):
        """Attach and check a layout."""
        return PriorSet(self.specs, layout)

    @property
    def means(self):
        """Prior means in slot order."""
        return np.array([s.mean for s in self.specs])

    @property
    def variances(self):
        """Prior variances in slot order."""
        return np.array([s.variance for s in self.specs])

    def to_config(self):
        """List of configuration entries."""
        return [s.to_config() for s in self.specs]

    @classmethod
    def from_config(cls, entries, layout=None):
        """Build a set from configuration entries."""
        return cls(tuple(PriorSpec.from_config(e) for e in entries), layout)


@exporter.export
def log_prior_total(prior_set, v):
    """
    Sum of the slot log densities.

    Parameters
    ----------
    prior_set : `PriorSet`
        Independent priors.
    v : `ParameterVector` or array-like
        Parameter values in slot order.

    Returns
    -------
    log_density : float
        ``-inf`` as soon as one slot lies outside its support.
    """
    values = np.asarray(v, dtype=float).reshape(-1)
    if values.shape[0] != len(prior_set):
        raise StructuralError(f'{values.shape[0]} values for {len(prior_set)} priors')
    total = 0.0
    for spec, x in zip(prior_set.specs, values):
        term = log_prior_density(spec, x)
        if term == -np.inf:
            return -np.inf
        total += term
    return float(total)


@exporter.export
def sample_prior(prior_set, seed=None):
    """
    Draw every slot independently from its prior.

    Parameters
    ----------
    prior_set : `PriorSet`
        Priors to sample.
    seed : int or `numpy.random.Generator`, optional
        Random source.

    Returns
    -------
    v : `ParameterVector` or `numpy.ndarray`
        A `ParameterVector` when the set carries a layout.
    """
    rng = np.random.default_rng(seed)
    values = np.array([spec.sample(rng) for spec in prior_set.specs], dtype=float)
    if prior_set.layout is None:
        return values
    return ParameterVector(values, prior_set.layout)
