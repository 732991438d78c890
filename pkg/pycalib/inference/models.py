# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""
The four statistical models linking the simulator to field data.

``M1`` uses the code directly, ``M2`` replaces it with a Gaussian process emulator,
``M3`` and ``M4`` add a zero-mean Gaussian process discrepancy on the inputs to ``M1``
and ``M2``. Every model adds independent measurement error of variance ``sigma_e^2``.
"""

from dataclasses import dataclass, replace
import logging
from typing import Optional

import numpy as np
import pandas as pd
from scipy import stats

from ..calc.emulator import EmulatorModel, gp_predict
from ..calc.kernels import covariance_matrix, KERNEL_FAMILIES, KernelSpec
from ..calc.linalg import cholesky_with_jitter, mvn_log_density
from ..calc.priors import log_prior_total, PriorSet
from ..core import ObservationSet, ParameterLayout, ParameterVector, SimulatorCode
from ..errors import DomainError, StructuralError, UnsupportedOptionError
from ..package_tools import Exporter

exporter = Exporter(globals())

log = logging.getLogger(__name__)

with exporter:
    MODEL_KINDS = ('M1', 'M2', 'M3', 'M4')
    BAND_KINDS = ('err', 'GP', 'all')

_ALIASES = {f'model{i}': f'M{i}' for i in range(1, 5)}


@exporter.export
def normalize_kind(kind):
    """Accept ``M1``..``M4`` as well as ``model1``..``model4``."""
    kind = _ALIASES.get(str(kind), str(kind))
    if kind not in MODEL_KINDS:
        raise DomainError(f'unknown model {kind!r}; expected one of {list(MODEL_KINDS)}')
    return kind


@exporter.export
@dataclass(frozen=True, eq=False)
class StatModelSpec:
    """
    A statistical model bound to its data.

    Parameters
    ----------
    kind : str
        ``M1``, ``M2``, ``M3`` or ``M4``.
    data : `ObservationSet`
        Field measurements.
    code : `SimulatorCode`, optional
        Required by ``M1`` and ``M3``; used by ``M2``/``M4`` for design enrichment.
    emulator : `EmulatorModel`, optional
        Required by ``M2`` and ``M4``; its design columns are the ``d`` inputs followed by
        the ``p`` parameters.
    discrepancy_family : str, optional
        Kernel family of the discrepancy, ``M3``/``M4`` only.
    layout : `ParameterLayout`, optional
        Derived from the other fields when omitted.
    """

    kind: str
    data: ObservationSet
    code: Optional[SimulatorCode] = None
    emulator: Optional[EmulatorModel] = None
    discrepancy_family: Optional[str] = None
    layout: Optional[ParameterLayout] = None

    def __post_init__(self):
        """Check that the bindings match the model kind."""
        kind = normalize_kind(self.kind)
        object.__setattr__(self, 'kind', kind)
        if self.uses_emulator:
            if self.emulator is None:
                raise StructuralError(f'{kind} needs a fitted emulator')
            p = self.emulator.dim - self.data.d
            if p < 1:
                raise StructuralError(f'emulator has {self.emulator.dim} columns, data has '
                                      f'{self.data.d} inputs; no room for parameters')
            if self.code is not None and self.code.p != p:
                raise StructuralError(f'code has {self.code.p} parameters, emulator '
                                      f'covers {p}')
        else:
            if self.code is None:
                raise StructuralError(f'{kind} needs a simulator code')
            p = self.code.p
        if self.has_discrepancy:
            family = self.discrepancy_family or 'gauss'
            if family not in KERNEL_FAMILIES:
                raise DomainError(f'unknown discrepancy kernel {family!r}')
            object.__setattr__(self, 'discrepancy_family', family)
        elif self.discrepancy_family is not None:
            raise UnsupportedOptionError(f'{kind} has no discrepancy term')
        layout = ParameterLayout(p, self.has_discrepancy)
        if self.layout is not None and self.layout != layout:
            raise StructuralError(f'layout {self.layout} does not match {kind} '
                                  f'with p={p}')
        object.__setattr__(self, 'layout', layout)

    @property
    def uses_emulator(self):
        """Whether the code is replaced by the emulator."""
        return self.kind in ('M2', 'M4')

    @property
    def has_discrepancy(self):
        """Whether a discrepancy term is part of the model."""
        return self.kind in ('M3', 'M4')

    @property
    def label(self):
        """Name used in printed summaries, ``model1``..``model4``."""
        return f'model{self.kind[1]}'

    def with_data(self, data):
        """Same model on other observations."""
        return replace(self, data=data)

    def with_emulator(self, emulator):
        """Same model with another emulator."""
        return replace(self, emulator=emulator)

    def build(self, priors):
        """Attach priors, returning the log-posterior target used by the samplers."""
        return LogPosterior(self, priors)


def _as_values(spec, v):
    if isinstance(v, ParameterVector):
        if v.layout != spec.layout:
            raise StructuralError('parameter vector layout does not match the model')
        return v.values
    values = np.asarray(v, dtype=float).reshape(-1)
    if values.shape[0] != spec.layout.total:
        raise StructuralError(f'{values.shape[0]} parameter values for a layout of '
                              f'{spec.layout.total} slots')
    return values


def _inputs(spec, X):
    if X is None:
        return spec.data.X
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, np.newaxis]
    if X.shape[1] != spec.data.d:
        raise StructuralError(f'inputs have {X.shape[1]} columns, the model expects '
                              f'{spec.data.d}')
    return X


def model_components(spec, v, X=None):
    """
    Return ``(mean, cov_gp, cov_disc, noise_var)`` at the inputs ``X``.

    ``cov_gp`` is None for the code based models and ``cov_disc`` is None without a
    discrepancy term.
    """
    values = _as_values(spec, v)
    X = _inputs(spec, X)
    layout = spec.layout
    theta = values[:layout.p]
    noise_var = float(values[-1])
    if noise_var <= 0:
        raise DomainError(f'measurement error variance must be positive, got {noise_var}')
    cov_gp = None
    if spec.uses_emulator:
        rows = np.column_stack([X, np.broadcast_to(theta, (X.shape[0], layout.p))])
        mean, cov_gp = gp_predict(spec.emulator, rows)
    else:
        mean = spec.code.evaluate(X, theta)
    cov_disc = None
    if spec.has_discrepancy:
        sigma_d2, psi_d = values[layout.p], values[layout.p + 1]
        if sigma_d2 <= 0 or psi_d <= 0:
            raise DomainError(f'discrepancy variance and lengthscale must be positive, '
                              f'got {sigma_d2} and {psi_d}')
        kernel = KernelSpec(spec.discrepancy_family, sigma_d2, (psi_d,))
        cov_disc = covariance_matrix(kernel, X)
    return mean, cov_gp, cov_disc, noise_var


@exporter.export
def model_mean_cov(spec, v, X=None):
    """
    Mean and covariance of the field measurements under a model.

    Parameters
    ----------
    spec : `StatModelSpec`
        Model.
    v : `ParameterVector` or array-like
        Parameters in layout order.
    X : array-like, optional
        Inputs, the observation inputs by default.

    Returns
    -------
    mean : `numpy.ndarray`
        Code output or emulator predictive mean.
    cov : `numpy.ndarray`
        Sum of the emulator predictive covariance (``M2``/``M4``), the discrepancy
        covariance (``M3``/``M4``) and ``sigma_e^2 I``.
    """
    mean, cov_gp, cov_disc, noise_var = model_components(spec, v, X)
    cov = noise_var * np.eye(mean.shape[0])
    if cov_gp is not None:
        cov = cov + cov_gp
    if cov_disc is not None:
        cov = cov + cov_disc
    return mean, cov


@exporter.export
def log_likelihood(spec, v):
    """
    Gaussian log likelihood of the observations.

    Parameters
    ----------
    spec : `StatModelSpec`
        Model.
    v : `ParameterVector` or array-like
        Parameters in layout order.

    Returns
    -------
    log_likelihood : float
    """
    values = _as_values(spec, v)
    y = spec.data.y
    if spec.kind == 'M1':
        noise_var = float(values[-1])
        if noise_var <= 0:
            raise DomainError(f'measurement error variance must be positive, got {noise_var}')
        resid = y - spec.code.evaluate(spec.data.X, values[:spec.layout.p])
        n = y.shape[0]
        return float(-0.5 * n * np.log(2 * np.pi * noise_var)
                     - 0.5 * resid @ resid / noise_var)
    mean, cov = model_mean_cov(spec, values)
    chol, _ = cholesky_with_jitter(cov, values=values)
    return mvn_log_density(y, mean, chol)


@exporter.export
class LogPosterior:
    """
    Log posterior of a model under independent priors.

    Instances are plain picklable callables on flat parameter arrays, so they can be
    shipped to worker processes.

    Parameters
    ----------
    spec : `StatModelSpec`
        Model.
    priors : `PriorSet`
        One prior per layout slot.
    """

    def __init__(self, spec, priors):
        """Check that the priors cover the layout."""
        if not isinstance(priors, PriorSet):
            priors = PriorSet(tuple(priors))
        self.spec = spec
        self.priors = priors.with_layout(spec.layout)

    @property
    def layout(self):
        """Layout of the parameter vectors."""
        return self.spec.layout

    @property
    def dim(self):
        """Length of a parameter vector."""
        return self.spec.layout.total

    def __call__(self, values):
        """
        Evaluate at ``values``.

        Returns ``-inf`` outside the prior support and where the simulator rejects the
        parameters as outside its domain, so samplers treat such proposals as refused.
        """
        values = _as_values(self.spec, values)
        lp = log_prior_total(self.priors, values)
        if lp == -np.inf:
            return -np.inf
        if np.any(values[list(self.layout.positive_slots)] <= 0):
            return -np.inf
        try:
            return lp + log_likelihood(self.spec, values)
        except DomainError as err:
            log.debug('parameters %s outside the simulator domain: %s', values, err)
            return -np.inf

    def __repr__(self):
        """Short description."""
        return f'LogPosterior({self.spec.kind}, p={self.layout.p})'


@exporter.export
def log_posterior(spec, priors, v):
    """
    Log prior plus log likelihood.

    The likelihood is skipped, and the simulator never called, when ``v`` lies outside
    the prior support.

    Parameters
    ----------
    spec : `StatModelSpec`
        Model.
    priors : `PriorSet`
        One prior per layout slot.
    v : `ParameterVector` or array-like
        Parameters in layout order.

    Returns
    -------
    log_posterior : float
    """
    return LogPosterior(spec, priors)(v)


def _band_frame(X, mean, var, z, kind):
    frame = pd.DataFrame(X, columns=[f'x{i + 1}' for i in range(X.shape[1])])
    half = z * np.sqrt(var)
    frame['mean'] = mean
    frame['lo'] = mean - half
    frame['hi'] = mean + half
    frame['band_kind'] = kind
    return frame


@exporter.export
def predictive_bands(spec, v, level=0.95, which='err', X=None):
    """
    Pointwise predictive credibility bands.

    Parameters
    ----------
    spec : `StatModelSpec`
        Model.
    v : `ParameterVector` or array-like
        Parameters in layout order.
    level : float
        Credibility level.
    which : str
        ``err`` for measurement error plus discrepancy, ``GP`` for the emulator
        uncertainty (``M2``/``M4`` only) or ``all``. With ``all`` the emulator models also
        get a ``combined`` band summing both variances.
    X : array-like, optional
        Inputs, the observation inputs by default.

    Returns
    -------
    bands : `pandas.DataFrame`
        Columns ``x1..xd``, ``mean``, ``lo``, ``hi`` and ``band_kind``.
    """
    if which not in BAND_KINDS:
        raise UnsupportedOptionError(f'unknown band {which!r}; expected one of '
                                     f'{list(BAND_KINDS)}')
    if which == 'GP' and not spec.uses_emulator:
        raise UnsupportedOptionError(f'{spec.kind} has no emulator, so no GP band')
    if not 0 < level < 1:
        raise DomainError(f'level must lie in (0, 1), got {level}')
    X = _inputs(spec, X)
    mean, cov_gp, cov_disc, noise_var = model_components(spec, v, X)
    z = stats.norm.ppf(0.5 + 0.5 * level)
    err_var = np.full(mean.shape[0], noise_var)
    if cov_disc is not None:
        err_var = err_var + np.diag(cov_disc)
    frames = []
    if which in ('err', 'all'):
        frames.append(_band_frame(X, mean, err_var, z, 'err'))
    if cov_gp is not None and which in ('GP', 'all'):
        gp_var = np.maximum(np.diag(cov_gp), 0.0)
        frames.append(_band_frame(X, mean, gp_var, z, 'GP'))
        if which == 'all':
            frames.append(_band_frame(X, mean, err_var + gp_var, z, 'combined'))
    return pd.concat(frames, ignore_index=True)


@exporter.export
def describe_model(spec):
    """Text block describing the model, printed ahead of calibration summaries."""
    lines = [f'Selected model : {spec.label}']
    if spec.code is not None:
        lines.append(f'With the function : {spec.code.name}')
    if spec.uses_emulator:
        em = spec.emulator
        lines.append(f'Surrogate : Gaussian process, kernel {em.family}, '
                     f'{em.n_points} code runs')
    if spec.has_discrepancy:
        lines.append(f'Discrepancy kernel : {spec.discrepancy_family}')
    lines.append(f'Observations : n={spec.data.n}, d={spec.data.d}')
    lines.append(f'Parameters : {", ".join(spec.layout.names)}')
    return '\n'.join(lines)
