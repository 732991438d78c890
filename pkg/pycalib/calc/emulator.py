# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""
Gaussian process surrogate of a simulator.

Hyperparameters are estimated once by maximum likelihood and then frozen: the trend
coefficient and the process variance are profiled out in closed form, the lengthscales
are searched by a bounded Nelder-Mead over their logarithms. Inputs are mapped to the
unit cube with the design bounds before any kernel evaluation, so lengthscales are
expressed in unit-cube coordinates.
"""

from dataclasses import dataclass
import logging
from typing import Optional
import warnings

import numpy as np
from scipy import linalg, optimize

from .design import DesignOfExperiments, scale
from .kernels import covariance_matrix, KernelSpec
from ..errors import ConditioningError, DomainError, StructuralError
from ..package_tools import Exporter

exporter = Exporter(globals())

log = logging.getLogger(__name__)

with exporter:
    NUGGET_LADDER = (1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
    LENGTHSCALE_BOUNDS = (1e-2, 10.0)


@exporter.export
@dataclass(frozen=True)
class TrendSpec:
    """Constant trend ``h(t) = 1`` with its coefficient."""

    beta: tuple = (0.0,)
    basis: str = 'constant'

    def __post_init__(self):
        """Only the constant basis is supported."""
        if self.basis != 'constant':
            raise DomainError(f'unsupported trend basis {self.basis!r}')
        beta = tuple(float(b) for b in np.atleast_1d(self.beta))
        if len(beta) != 1:
            raise StructuralError(f'a constant trend has one coefficient, got {len(beta)}')
        object.__setattr__(self, 'beta', beta)

    def regressors(self, T):
        """Basis functions evaluated at the rows of ``T``."""
        return np.ones((np.atleast_2d(T).shape[0], 1))

    def mean(self, T):
        """Trend value at the rows of ``T``."""
        return self.regressors(T) @ np.asarray(self.beta)


@exporter.export
@dataclass(frozen=True, eq=False)
class EmulatorModel:
    """
    A Gaussian process conditioned on simulator runs.

    Build instances with `fit_emulator` or `build_emulator`.

    Attributes
    ----------
    design : `numpy.ndarray`
        ``(n_d, q)`` training inputs in original units.
    outputs : `numpy.ndarray`
        Training outputs.
    kernel : `KernelSpec`
        Process variance and unit-cube lengthscales.
    trend : `TrendSpec`
        Trend coefficient.
    nugget : float
        Diagonal term added to the training correlation matrix.
    chol : `numpy.ndarray`
        Lower Cholesky factor of the training correlation matrix plus nugget.
    alpha : `numpy.ndarray`
        Correlation matrix inverse applied to the de-trended outputs.
    binf, bsup : `numpy.ndarray` or None
        Bounds defining the unit-cube map; inputs are used as given when absent.
    n_inputs : int, optional
        Number of leading input-variable columns of the design.
    log_likelihood : float
        Log marginal likelihood of the outputs under the fitted hyperparameters.
    """

    design: np.ndarray
    outputs: np.ndarray
    kernel: KernelSpec
    trend: TrendSpec
    nugget: float
    chol: np.ndarray
    alpha: np.ndarray
    binf: Optional[np.ndarray] = None
    bsup: Optional[np.ndarray] = None
    n_inputs: Optional[int] = None
    log_likelihood: float = float('nan')

    @property
    def n_points(self):
        """Number of training runs."""
        return self.design.shape[0]

    @property
    def dim(self):
        """Number of emulator input columns."""
        return self.design.shape[1]

    @property
    def family(self):
        """Kernel family name."""
        return self.kernel.family

    @property
    def correlation(self):
        """Unit variance copy of the kernel."""
        return self.kernel.with_params(variance=1.0)

    def to_unit(self, T):
        """Map points to the coordinates the kernel works in."""
        T = np.atleast_2d(np.asarray(T, dtype=float))
        if T.shape[1] != self.dim:
            raise StructuralError(f'emulator expects {self.dim} columns, got {T.shape[1]}')
        if self.binf is None:
            return T
        return scale(T, self.binf, self.bsup)

    def to_config(self):
        """JSON-ready description of everything except the training data."""
        return {'family': self.kernel.family, 'variance': self.kernel.variance,
                'lengthscales': list(self.kernel.lengthscales),
                'beta': list(self.trend.beta), 'nugget': self.nugget,
                'binf': None if self.binf is None else self.binf.tolist(),
                'bsup': None if self.bsup is None else self.bsup.tolist(),
                'n_inputs': self.n_inputs, 'log_likelihood': self.log_likelihood}

    @classmethod
    def from_config(cls, config, design, outputs):
        """Rebuild a model saved with `to_config`."""
        kernel = KernelSpec(config['family'], config['variance'], config['lengthscales'])
        bounds = None
        if config.get('binf') is not None:
            bounds = (config['binf'], config['bsup'])
        return build_emulator(design, outputs, kernel, TrendSpec(config['beta']),
                              nugget=config['nugget'], bounds=bounds,
                              n_inputs=config.get('n_inputs'))


def _check_training(design, outputs):
    design = np.array(design, dtype=float)
    if design.ndim == 1:
        design = design[:, np.newaxis]
    outputs = np.array(outputs, dtype=float).reshape(-1)
    if design.shape[0] != outputs.shape[0]:
        raise StructuralError(f'design has {design.shape[0]} rows but there are '
                              f'{outputs.shape[0]} outputs')
    if design.shape[0] < 1:
        raise DomainError('an emulator needs at least one training run')
    if not (np.all(np.isfinite(design)) and np.all(np.isfinite(outputs))):
        raise DomainError('training data contain non-finite values')
    return design, outputs


def _variance_floor(outputs):
    return 1e-12 * float(np.var(outputs)) + 1e-300


def _profile(unit_design, outputs, family, lengthscales, nugget):
    """Return ``(log_likelihood, beta, sigma2, chol)`` with beta and sigma2 profiled out."""
    corr = KernelSpec(family, 1.0, lengthscales)
    n = outputs.shape[0]
    R = covariance_matrix(corr, unit_design) + nugget * np.eye(n)
    chol = linalg.cholesky(R, lower=True)
    white_ones = linalg.solve_triangular(chol, np.ones(n), lower=True)
    white_y = linalg.solve_triangular(chol, outputs, lower=True)
    beta = float(white_ones @ white_y / (white_ones @ white_ones))
    resid = white_y - beta * white_ones
    quad = float(resid @ resid)
    sigma2 = max(quad / n, _variance_floor(outputs))
    loglik = (-0.5 * n * np.log(2 * np.pi * sigma2) - np.sum(np.log(np.diag(chol)))
              - 0.5 * quad / sigma2)
    return float(loglik), beta, sigma2, chol


@exporter.export
def profile_log_likelihood(unit_design, outputs, family, lengthscales, nugget=1e-8):
    """
    Concentrated log likelihood of a constant-trend GP.

    Parameters
    ----------
    unit_design : array-like
        ``(n_d, q)`` training inputs in kernel coordinates.
    outputs : array-like
        Training outputs.
    family : str
        Kernel family.
    lengthscales : float or array-like
        Lengthscales in the coordinates of ``unit_design``.
    nugget : float
        Term added to the diagonal of the correlation matrix.

    Returns
    -------
    log_likelihood : float
        Log likelihood with the trend coefficient and process variance at their
        generalized least squares estimates.
    """
    unit_design, outputs = _check_training(unit_design, outputs)
    try:
        return _profile(unit_design, outputs, family, lengthscales, nugget)[0]
    except linalg.LinAlgError as e:
        raise ConditioningError('correlation matrix not factorizable', lengthscales) from e


@exporter.export
def gp_log_marginal_likelihood(design, outputs, kernel, trend, nugget=1e-8):
    """
    Log density of the outputs under a fully specified Gaussian process.

    The covariance is ``sigma_f^2 (R + nugget I)`` and the mean is the trend. The nugget
    is escalated tenfold, up to ``1e-4``, when the covariance does not factorize.

    Parameters
    ----------
    design : array-like
        ``(n_d, q)`` training inputs, in the coordinates of the kernel lengthscales.
    outputs : array-like
        Training outputs.
    kernel : `KernelSpec`
        Process variance and lengthscales.
    trend : `TrendSpec` or float
        Constant trend.
    nugget : float
        Initial nugget on the correlation scale.

    Returns
    -------
    log_density : float
    """
    design, outputs = _check_training(design, outputs)
    if not isinstance(trend, TrendSpec):
        trend = TrendSpec((trend,))
    n = outputs.shape[0]
    corr = covariance_matrix(kernel.with_params(variance=1.0), design)
    resid = outputs - trend.mean(design)
    rungs = [nugget] + [g for g in NUGGET_LADDER if g > nugget]
    for g in rungs:
        try:
            chol = linalg.cholesky(kernel.variance * (corr + g * np.eye(n)), lower=True)
        except linalg.LinAlgError:
            log.debug('GP covariance not factorizable with nugget %g', g)
            continue
        if g != nugget:
            warnings.warn(f'nugget escalated from {nugget:g} to {g:g}')
        white = linalg.solve_triangular(chol, resid, lower=True)
        return float(-0.5 * white @ white - np.sum(np.log(np.diag(chol)))
                     - 0.5 * n * np.log(2 * np.pi))
    raise ConditioningError(f'GP covariance not factorizable with nugget up to {rungs[-1]:g}',
                            kernel.lengthscales)


def _resolve_bounds(design, bounds):
    if isinstance(design, DesignOfExperiments):
        return design.points, design.binf, design.bsup, design.n_inputs
    design = np.asarray(design, dtype=float)
    if design.ndim == 1:
        design = design[:, np.newaxis]
    if bounds is None:
        binf, bsup = design.min(axis=0), design.max(axis=0)
        flat = binf == bsup
        binf, bsup = np.where(flat, binf - 0.5, binf), np.where(flat, bsup + 0.5, bsup)
    else:
        binf, bsup = (np.atleast_1d(np.asarray(b, dtype=float)) for b in bounds)
    return design, binf, bsup, None


@exporter.export
def build_emulator(design, outputs, kernel, trend, nugget=0.0, bounds=None, n_inputs=None,
                   log_likelihood=float('nan')):
    """
    Condition a Gaussian process on training runs with given hyperparameters.

    Parameters
    ----------
    design : array-like or `DesignOfExperiments`
        Training inputs in original units.
    outputs : array-like
        Training outputs.
    kernel : `KernelSpec`
        Process variance and lengthscales in kernel coordinates.
    trend : `TrendSpec` or float
        Constant trend.
    nugget : float
        Term added to the diagonal of the training correlation matrix.
    bounds : pair of array-like, optional
        ``(binf, bsup)`` mapping inputs to the unit cube. Without bounds the inputs are
        used as given (a `DesignOfExperiments` always brings its own).
    n_inputs : int, optional
        Number of leading input-variable columns.

    Returns
    -------
    model : `EmulatorModel`
    """
    binf = bsup = None
    if isinstance(design, DesignOfExperiments):
        n_inputs = design.n_inputs if n_inputs is None else n_inputs
        design, binf, bsup = design.points, design.binf, design.bsup
    elif bounds is not None:
        binf, bsup = (np.atleast_1d(np.asarray(b, dtype=float)) for b in bounds)
    design, outputs = _check_training(design, outputs)
    if not isinstance(trend, TrendSpec):
        trend = TrendSpec((trend,))
    unit = design if binf is None else scale(design, binf, bsup)
    n = outputs.shape[0]
    R = covariance_matrix(kernel.with_params(variance=1.0), unit) + nugget * np.eye(n)
    try:
        chol = linalg.cholesky(R, lower=True)
    except linalg.LinAlgError as e:
        raise ConditioningError(f'training correlation not factorizable with nugget '
                                f'{nugget:g}', kernel.lengthscales) from e
    alpha = linalg.cho_solve((chol, True), outputs - trend.mean(unit))
    for arr in (design, outputs, chol, alpha):
        arr.flags.writeable = False
    return EmulatorModel(design, outputs, kernel, trend, float(nugget), chol, alpha,
                         binf, bsup, n_inputs, float(log_likelihood))


@exporter.export
def fit_emulator(design, outputs, family='matern5_2', restarts=5, seed=None,
                 lengthscales=None, nugget=None, bounds=None):
    """
    Fit a Gaussian process emulator by maximum likelihood.

    Parameters
    ----------
    design : array-like or `DesignOfExperiments`
        ``(n_d, q)`` simulator runs in original units.
    outputs : array-like
        Simulator outputs.
    family : str
        Kernel family.
    restarts : int
        Number of Nelder-Mead starts drawn log-uniformly in the lengthscale box.
    seed : int or `numpy.random.Generator`, optional
        Random source for the starts.
    lengthscales : array-like, optional
        Skip the search and profile the trend and variance at these unit-cube
        lengthscales.
    nugget : float, optional
        Fixed nugget. By default the nugget climbs `NUGGET_LADDER` until the
        correlation matrix factorizes. Nuggets live on the correlation scale, so the
        covariance nugget is this value times the fitted process variance rather than a
        fraction of ``var(outputs)``.
    bounds : pair of array-like, optional
        ``(binf, bsup)`` used for the unit-cube map, the design column ranges by default.

    Returns
    -------
    model : `EmulatorModel`
    """
    points, binf, bsup, n_inputs = _resolve_bounds(design, bounds)
    points, outputs = _check_training(points, outputs)
    unit = scale(points, binf, bsup)
    q = unit.shape[1]
    if np.ptp(outputs) == 0:
        warnings.warn('emulator outputs are constant; the process variance is floored')

    lo, hi = np.log(LENGTHSCALE_BOUNDS)
    ladder = NUGGET_LADDER if nugget is None else (nugget,)
    rng = np.random.default_rng(seed)
    if lengthscales is None:
        starts = rng.uniform(lo, hi, size=(max(restarts, 1), q))
    else:
        starts = None

    def objective(log_psi, g):
        try:
            value = _profile(unit, outputs, family, np.exp(np.clip(log_psi, lo, hi)), g)[0]
        except linalg.LinAlgError:
            return np.inf
        return -value if np.isfinite(value) else np.inf

    for g in ladder:
        if starts is None:
            best = np.log(np.broadcast_to(np.asarray(lengthscales, dtype=float), (q,)))
            if not np.isfinite(objective(best, g)):
                log.debug('fixed lengthscales not factorizable with nugget %g', g)
                continue
        else:
            best, best_value = None, np.inf
            for i, start in enumerate(starts):
                res = optimize.minimize(objective, start, args=(g,), method='Nelder-Mead',
                                        bounds=[(lo, hi)] * q,
                                        options={'xatol': 1e-8, 'fatol': 1e-8,
                                                 'maxiter': 400 * q})
                log.debug('restart %d with nugget %g: -loglik=%.10g at psi=%s', i, g,
                          res.fun, np.exp(res.x))
                if np.isfinite(res.fun) and res.fun < best_value:
                    best, best_value = np.clip(res.x, lo, hi), res.fun
            if best is None:
                log.debug('no restart factorized with nugget %g', g)
                continue
        if g != ladder[0]:
            warnings.warn(f'emulator nugget escalated to {g:g}')
        psi = np.exp(best)
        loglik, beta, sigma2, _ = _profile(unit, outputs, family, psi, g)
        log.info('fitted %s emulator on %d runs: sigma2=%.6g, psi=%s, nugget=%g',
                 family, outputs.shape[0], sigma2, np.array2string(psi, precision=4), g)
        return build_emulator(points, outputs, KernelSpec(family, sigma2, psi),
                              TrendSpec((beta,)), nugget=g, bounds=(binf, bsup),
                              n_inputs=n_inputs, log_likelihood=loglik)
    raise ConditioningError(f'emulator correlation not factorizable with nugget up to '
                            f'{ladder[-1]:g}')


@exporter.export
def gp_predict(model, T, full_cov=True):
    """
    Best linear unbiased prediction of the simulator.

    Parameters
    ----------
    model : `EmulatorModel`
        Fitted emulator.
    T : array-like
        ``(m, q)`` prediction points in original units.
    full_cov : bool
        Return the full predictive covariance rather than its diagonal.

    Returns
    -------
    mean : `numpy.ndarray`
        ``m`` predictive means.
    cov : `numpy.ndarray`
        ``(m, m)`` predictive covariance, or ``m`` variances when ``full_cov`` is false.
    """
    unit = model.to_unit(T)
    corr = model.correlation
    cross = covariance_matrix(corr, unit, model.to_unit(model.design))
    mean = model.trend.mean(unit) + cross @ model.alpha
    v = linalg.solve_triangular(model.chol, cross.T, lower=True)
    if full_cov:
        cov = model.kernel.variance * (covariance_matrix(corr, unit) - v.T @ v)
        return mean, 0.5 * (cov + cov.T)
    var = model.kernel.variance * (1.0 - np.sum(v * v, axis=0))
    return mean, np.maximum(var, 0.0)


@exporter.export
def emulator_loo(model):
    """
    Leave-one-out predictions at every training run without refitting.

    Returns
    -------
    mean : `numpy.ndarray`
        Prediction of each run from the others.
    var : `numpy.ndarray`
        Matching predictive variances.
    """
    inv = linalg.cho_solve((model.chol, True), np.eye(model.n_points))
    diag = np.diag(inv)
    return model.outputs - model.alpha / diag, model.kernel.variance / diag


@exporter.export
def emulator_rmse(model, T, y):
    """Root mean squared error of the predictive mean at held-out runs."""
    y = np.asarray(y, dtype=float).reshape(-1)
    mean, _ = gp_predict(model, T, full_cov=False)
    if mean.shape != y.shape:
        raise StructuralError(f'{mean.shape[0]} points but {y.shape[0]} outputs')
    return float(np.sqrt(np.mean((mean - y) ** 2)))
