# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Calibration runs, point estimators, cross-validation, forecasting and design enrichment."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
import logging
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .models import describe_model, LogPosterior, predictive_bands
from .sampler import ChainResult, default_workers, EstimOptions, gelman_rubin, run_chains
from ..calc.design import random_lhs, unscale
from ..calc.emulator import fit_emulator, gp_predict
from ..calc.priors import PriorSet
from ..core import ParameterVector
from ..errors import DomainError, StateError, StructuralError, UnsupportedOptionError
from ..package_tools import Exporter

exporter = Exporter(globals())

log = logging.getLogger(__name__)

with exporter:
    SHORT_BUDGET = (100, 600, 200)
    EI_TOLERANCE = 1e-12


@exporter.export
@dataclass(frozen=True)
class CVOptions:
    """
    Cross-validation settings.

    Parameters
    ----------
    n_cv : int
        Number of left-out observations.
    method : str
        Only ``loo`` is available.
    seed : int, optional
        Master seed for the fold selection, the sampler seed by default.
    """

    n_cv: int
    method: str = 'loo'
    seed: Optional[int] = None

    def __post_init__(self):
        """Only leave-one-out is implemented."""
        if self.method != 'loo':
            raise UnsupportedOptionError(f'unsupported cross-validation {self.method!r}; '
                                         f'only "loo" is available')


@exporter.export
@dataclass(frozen=True, eq=False)
class CVReport:
    """
    Leave-one-out cross-validation summary.

    Attributes
    ----------
    rows : `pandas.DataFrame`
        One row per fold: ``index``, ``predicted``, ``real``, ``error``, ``lo``, ``hi``.
    rmse : float
        Root mean squared prediction error.
    cover_rate : float
        Fraction of left-out observations inside their 95% band.
    method : str
        ``loo``.
    """

    rows: pd.DataFrame
    rmse: float
    cover_rate: float
    method: str = 'loo'

    @classmethod
    def from_rows(cls, rows, method='loo'):
        """Compute the summary statistics from the fold table."""
        rows = rows.sort_values('index').reset_index(drop=True)
        resid = rows['predicted'].to_numpy() - rows['real'].to_numpy()
        rmse = float(np.sqrt(np.mean(resid ** 2)))
        inside = (rows['real'] >= rows['lo']) & (rows['real'] <= rows['hi'])
        return cls(rows, rmse, float(inside.mean()), method)

    def summary(self, head=6):
        """Text in the layout printed by the ``validate`` command."""
        table = self.rows[['predicted', 'real', 'error']].head(head)
        table.columns = ['Predicted', 'Real', 'Error']
        return '\n'.join([f'Method: {self.method}', table.to_string(),
                          f'RMSE: {self.rmse!r}', f'Cover rate: {100 * self.cover_rate!r}'])


@exporter.export
@dataclass(frozen=True, eq=False)
class CalibrationResult:
    """
    Outcome of a calibration.

    Attributes
    ----------
    spec : `StatModelSpec`
        Calibrated model.
    priors : `PriorSet`
        Priors used.
    opts : `EstimOptions`
        Sampler settings, with the proposal covariance filled in.
    chains : list of `ChainResult`
        One entry per chain.
    map : `ParameterVector`
        Retained sample with the highest log posterior over all chains.
    mean : `ParameterVector`
        Average of the retained samples pooled over all chains.
    map_log_post : float
        Log posterior at ``map``.
    bands : `pandas.DataFrame`
        Predictive bands at ``map`` over the observation inputs.
    cv : `CVReport`, optional
        Cross-validation report.
    psrf : tuple, optional
        Per-coordinate and multivariate Gelman-Rubin factors with several chains.
    """

    spec: object
    priors: PriorSet
    opts: EstimOptions
    chains: List[ChainResult]
    map: ParameterVector
    mean: ParameterVector
    map_log_post: float
    bands: pd.DataFrame
    cv: Optional[CVReport] = None
    psrf: Optional[Tuple[np.ndarray, float]] = None

    @property
    def pooled(self):
        """Retained samples of all chains stacked."""
        return np.vstack([c.mh_samples for c in self.chains])

    def summary(self):
        """Text summary with acceptance rates and estimators."""
        rates_gibbs = np.mean([c.accept_gibbs for c in self.chains], axis=0)
        rate_mh = float(np.mean([c.accept_mh for c in self.chains]))
        lines = [describe_model(self.spec), '',
                 'Acceptation rate of the Metropolis within Gibbs algorithm:',
                 ' '.join(repr(float(r)) for r in rates_gibbs),
                 'Acceptation rate of the Metropolis Hastings algorithm:',
                 repr(rate_mh), '',
                 'Maximum a posteriori:', ' '.join(repr(float(v)) for v in self.map.values),
                 '', 'Mean a posteriori:', ' '.join(repr(float(v)) for v in self.mean.values)]
        if self.psrf is not None:
            lines += ['', 'Potential scale reduction factors:',
                      ' '.join(repr(float(v)) for v in self.psrf[0]),
                      f'Multivariate psrf: {self.psrf[1]!r}']
        return '\n'.join(lines)


@exporter.export
def pooled_estimators(chains, layout):
    """
    MAP and posterior mean from retained chain samples.

    Parameters
    ----------
    chains : sequence of `ChainResult`
        Chains to pool.
    layout : `ParameterLayout`
        Layout of the samples.

    Returns
    -------
    map : `ParameterVector`
    mean : `ParameterVector`
    map_log_post : float
    """
    if not chains or all(c.n_retained == 0 for c in chains):
        raise StateError('no retained samples to compute estimators from')
    samples = np.vstack([c.mh_samples for c in chains])
    lps = np.concatenate([c.log_post for c in chains])
    best = int(np.argmax(lps))
    return (ParameterVector(samples[best], layout),
            ParameterVector(samples.mean(axis=0), layout), float(lps[best]))


def _prepare(spec, priors, opts):
    if not isinstance(priors, PriorSet):
        priors = PriorSet(tuple(priors))
    if len(priors) != spec.layout.total:
        raise StructuralError(f'{len(priors)} priors for the {spec.layout.total} slots '
                              f'{spec.layout.names}')
    priors = priors.with_layout(spec.layout)
    if opts.dim != spec.layout.total:
        raise StructuralError(f'thetaInit has {opts.dim} values, the layout has '
                              f'{spec.layout.total} slots {spec.layout.names}')
    return priors, opts.with_default_sig(priors.variances)


def _sample(spec, priors, opts, workers):
    target = LogPosterior(spec, priors)
    chains = run_chains(target, opts, workers=workers)
    return chains, pooled_estimators(chains, spec.layout)


@exporter.export
def calibrate(spec, priors, opts, cv=None, workers=None):
    """
    Sample the posterior of a model and summarize it.

    Parameters
    ----------
    spec : `StatModelSpec`
        Model.
    priors : `PriorSet`
        One prior per layout slot.
    opts : `EstimOptions`
        Sampler settings.
    cv : `CVOptions`, optional
        Run leave-one-out cross-validation as well.
    workers : int, optional
        Maximum number of worker processes.

    Returns
    -------
    result : `CalibrationResult`
    """
    priors, opts = _prepare(spec, priors, opts)
    log.info('calibrating %s with %d chain(s)', spec.kind, opts.n_chains)
    chains, (map_v, mean_v, map_lp) = _sample(spec, priors, opts, workers)
    bands = predictive_bands(spec, map_v, which='all')
    psrf = None
    if opts.n_chains > 1 and chains[0].n_retained >= 10:
        psrf = gelman_rubin([c.mh_samples for c in chains])
    report = None
    if cv is not None:
        seed = opts.seed if cv.seed is None else cv.seed
        report = cross_validate_loo(spec, priors, opts, cv.n_cv, seed=seed, workers=workers)
    return CalibrationResult(spec, priors, opts, chains, map_v, mean_v, map_lp, bands,
                             report, psrf)


@exporter.export
def estimators(result):
    """
    MAP and posterior mean of a calibration.

    Parameters
    ----------
    result : `CalibrationResult`
        Calibration outcome.

    Returns
    -------
    map : `ParameterVector`
    mean : `ParameterVector`
    """
    if not result.chains or all(c.n_retained == 0 for c in result.chains):
        raise StateError('calibration result holds no retained samples')
    return result.map, result.mean


def fold_seed(seed, index):
    """Sampler seed of cross-validation fold ``index``."""
    state = np.random.SeedSequence(entropy=seed, spawn_key=(index,)).generate_state(2)
    return int(state[0]) << 32 | int(state[1])


def _fold_job(args):
    spec, priors, opts, index = args
    data = spec.data
    fold_spec = spec.with_data(data.without(index))
    fold_opts = replace(opts, seed=fold_seed(opts.seed, index), n_chains=1)
    log.info('LOO fold %d', index)
    _, (map_v, _, _) = _sample(fold_spec, priors, fold_opts, workers=1)
    band = predictive_bands(fold_spec, map_v, which='err', X=data.X[index:index + 1])
    predicted = float(band['mean'].iloc[0])
    real = float(data.y[index])
    return {'index': index, 'predicted': predicted, 'real': real,
            'error': abs(predicted - real), 'lo': float(band['lo'].iloc[0]),
            'hi': float(band['hi'].iloc[0])}


@exporter.export
def cross_validate_loo(spec, priors, opts, n_cv, seed=0, workers=None):
    """
    Leave-one-out cross-validation.

    Each fold recalibrates the model without one observation, with the same sampler
    settings, and predicts it at the fold MAP.

    Parameters
    ----------
    spec : `StatModelSpec`
        Model.
    priors : `PriorSet`
        One prior per layout slot.
    opts : `EstimOptions`
        Sampler settings; the fold sampler seed is derived from ``opts.seed`` and the
        fold index.
    n_cv : int
        Number of left-out observations, between 1 and ``n``.
    seed : int
        Seed of the fold selection.
    workers : int, optional
        Maximum number of worker processes running folds.

    Returns
    -------
    report : `CVReport`
    """
    n = spec.data.n
    if not 1 <= n_cv <= n:
        raise DomainError(f'nCV must lie between 1 and {n}, got {n_cv}')
    if n < 3:
        raise DomainError('leave-one-out needs at least three observations')
    priors, opts = _prepare(spec, priors, opts)
    indices = np.sort(np.random.default_rng(seed).choice(n, size=n_cv, replace=False))
    jobs = [(spec, priors, opts, int(i)) for i in indices]
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or len(jobs) == 1:
        rows = [_fold_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            rows = list(pool.map(_fold_job, jobs))
    return CVReport.from_rows(pd.DataFrame(rows))


@exporter.export
def forecast(result, x_new):
    """
    Predictive bands at new inputs with the MAP parameters.

    Parameters
    ----------
    result : `CalibrationResult`
        Calibration outcome.
    x_new : array-like
        ``(m, d)`` new inputs; ``m`` may be zero.

    Returns
    -------
    bands : `pandas.DataFrame`
        The calibration bands followed by the bands at ``x_new``, told apart by the
        ``region`` column (``calibration`` or ``forecast``).
    """
    x_new = np.asarray(x_new, dtype=float)
    d = result.spec.data.d
    if x_new.ndim == 1:
        x_new = x_new.reshape(-1, d) if x_new.size else np.empty((0, d))
    if x_new.shape[1] != d:
        raise StructuralError(f'new inputs have {x_new.shape[1]} columns, the model '
                              f'expects {d}')
    frames = [result.bands.assign(region='calibration')]
    if x_new.shape[0]:
        bands = predictive_bands(result.spec, result.map, which='all', X=x_new)
        frames.append(bands.assign(region='forecast'))
    return pd.concat(frames, ignore_index=True)


@exporter.export
def expected_improvement(objective_model, f_min, candidates):
    r"""
    Expected improvement below ``f_min`` of a minimized objective.

    Parameters
    ----------
    objective_model : `EmulatorModel`
        Gaussian process of the objective.
    f_min : float
        Best observed objective value.
    candidates : array-like
        ``(m, q)`` points in the emulator input space.

    Returns
    -------
    ei : `numpy.ndarray`
        :math:`(f_{min}-\mu)\Phi(z) + s\,\phi(z)` with :math:`z = (f_{min}-\mu)/s` and
        ``s`` floored at `EI_TOLERANCE`; ``max(0, f_min - mu)`` where ``s`` vanishes.
    """
    mu, var = gp_predict(objective_model, candidates, full_cov=False)
    s = np.sqrt(np.maximum(var, 0.0))
    gain = f_min - mu
    s_safe = np.maximum(s, EI_TOLERANCE)
    z = gain / s_safe
    ei = gain * stats.norm.cdf(z) + s_safe * stats.norm.pdf(z)
    ei = np.where(s <= EI_TOLERANCE, np.maximum(gain, 0.0), ei)
    return np.maximum(ei, 0.0)


def sum_of_squares(spec, thetas):
    """Emulated ``sum_i (y_i - F(x_i, theta))^2`` for every row of ``thetas``."""
    X, y = spec.data.X, spec.data.y
    out = np.empty(thetas.shape[0])
    for row, theta in enumerate(thetas):
        rows = np.column_stack([X, np.broadcast_to(theta, (X.shape[0], theta.shape[0]))])
        mean, _ = gp_predict(spec.emulator, rows, full_cov=False)
        out[row] = float(np.sum((y - mean) ** 2))
    return out


def _theta_box(spec, priors):
    em = spec.emulator
    d = spec.data.d
    if em.binf is not None:
        lo, hi = em.binf[d:].copy(), em.bsup[d:].copy()
    else:
        lo, hi = em.design[:, d:].min(axis=0), em.design[:, d:].max(axis=0)
    for j, prior in enumerate(priors.specs[:spec.layout.p]):
        low, high = prior.support
        lo[j], hi[j] = max(lo[j], low), min(hi[j], high)
    if not np.all(lo < hi):
        raise DomainError('prior support and emulator bounds do not overlap')
    return lo, hi


@exporter.export
def sequential_design(spec, priors, opts, k, n_candidates=500, seed=0,
                      budget=SHORT_BUDGET, workers=None):
    """
    Enrich the emulator design with expected improvement on the sum of squares.

    Each step runs a short calibration, emulates the sum of squared residuals over the
    parameter values already in the design, maximizes its expected improvement over a
    fresh Latin hypercube of candidates (plus the short-calibration MAP), runs the code at
    every observation input with the selected parameters and refits the emulator.

    Parameters
    ----------
    spec : `StatModelSpec`
        ``M2`` or ``M4`` model with a simulator code.
    priors : `PriorSet`
        One prior per layout slot.
    opts : `EstimOptions`
        Sampler settings of the short calibrations.
    k : int
        Number of steps.
    n_candidates : int
        Candidate set size per step.
    seed : int
        Master seed of the candidates, objective fits and emulator refits.
    budget : tuple of int, optional
        ``(Ngibbs, Nmh, burnIn)`` overriding ``opts`` for the short calibrations;
        ``None`` keeps ``opts`` unchanged.
    workers : int, optional
        Maximum number of worker processes of the short calibrations.

    Returns
    -------
    spec : `StatModelSpec`
        Model with the enriched emulator.
    trace : `pandas.DataFrame`
        One row per step: ``step``, ``theta1..thetap``, ``ei``, ``ss`` (code sum of
        squares at the selected parameters) and ``converged``.
    """
    if not spec.uses_emulator:
        raise UnsupportedOptionError('sequential design requires a surrogate model')
    if spec.code is None:
        raise UnsupportedOptionError('sequential design needs a simulator code to run')
    if k < 0:
        raise DomainError(f'k must be non-negative, got {k}')
    priors, opts = _prepare(spec, priors, opts)
    if budget is not None:
        n_gibbs, n_mh, burn_in = budget
        opts = replace(opts, n_gibbs=n_gibbs, n_mh=n_mh, burn_in=burn_in)
    p, d = spec.layout.p, spec.data.d
    lo, hi = _theta_box(spec, priors)
    columns = ['step'] + [f'theta{j + 1}' for j in range(p)] + ['ei', 'ss', 'converged']
    rows = []
    for step in range(k):
        streams = np.random.SeedSequence(entropy=seed, spawn_key=(step,)).spawn(3)
        step_opts = replace(opts, seed=int(streams[0].generate_state(1)[0]))
        _, (map_v, _, _) = _sample(spec, priors, step_opts, workers)

        em = spec.emulator
        thetas = np.unique(em.design[:, d:], axis=0)
        ss = sum_of_squares(spec, thetas)
        objective = fit_emulator(thetas, ss, family=em.family,
                                 seed=np.random.default_rng(streams[1]), bounds=(lo, hi))
        rng = np.random.default_rng(streams[2])
        candidates = unscale(random_lhs(n_candidates, p, rng), lo, hi)
        candidates = np.vstack([candidates, np.clip(map_v.values[:p], lo, hi)])
        ei = expected_improvement(objective, float(ss.min()), candidates)
        best = int(np.argmax(ei))
        theta_star, ei_star = candidates[best], float(ei[best])
        if ei_star < EI_TOLERANCE:
            log.info('sequential design converged at step %d (EI %.3g)', step, ei_star)
            rows.append([step, *theta_star, ei_star, np.nan, True])
            break

        X = spec.data.X
        outputs = spec.code.evaluate(X, theta_star)
        new_rows = np.column_stack([X, np.broadcast_to(theta_star, (X.shape[0], p))])
        design = np.vstack([em.design, new_rows])
        y_c = np.concatenate([em.outputs, outputs])
        bounds = None if em.binf is None else (em.binf, em.bsup)
        refit = fit_emulator(design, y_c, family=em.family, bounds=bounds,
                             seed=np.random.default_rng(streams[1].spawn(1)[0]))
        refit = replace(refit, n_inputs=d)
        spec = spec.with_emulator(refit)
        code_ss = float(np.sum((spec.data.y - outputs) ** 2))
        log.info('sequential design step %d: theta*=%s EI=%.4g SS=%.4g', step,
                 np.array2string(theta_star, precision=5), ei_star, code_ss)
        rows.append([step, *theta_star, ei_star, code_ss, False])
    trace = pd.DataFrame(rows, columns=columns)
    trace['converged'] = trace['converged'].astype(bool)
    return spec, trace
