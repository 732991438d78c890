# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""
Two-stage adaptive Markov chain Monte Carlo and convergence diagnostics.

Stage one is a Metropolis-within-Gibbs sampler updating one coordinate at a time. Its
samples give an estimate ``S`` of the posterior covariance, which shapes the joint
Gaussian proposals ``N(x, t S)`` of the Metropolis-Hastings second stage. In both stages
the proposal scales are adapted every 100 iterations from the cumulative acceptance
rate: below 0.25 a scale shrinks by ``1 - r``, above 0.5 it grows by ``1 + r``.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import os
from typing import Optional, Tuple
import warnings

import numpy as np
from scipy import linalg

from ..calc.linalg import cholesky_with_jitter
from ..errors import ConfigError, DomainError, InitializationError, StructuralError
from ..package_tools import Exporter

exporter = Exporter(globals())

log = logging.getLogger(__name__)

with exporter:
    ADAPT_EVERY = 100
    ACCEPT_LOW = 0.25
    ACCEPT_HIGH = 0.5
    PSRF_SENTINEL = 1e10


@exporter.export
@dataclass(frozen=True, eq=False)
class EstimOptions:
    """
    Settings of the two-stage sampler.

    Parameters
    ----------
    theta_init : array-like
        Starting point in layout order.
    n_gibbs : int
        Metropolis-within-Gibbs iterations.
    n_mh : int
        Metropolis-Hastings iterations.
    r : pair of float
        Adaptation factors of the two stages, each in ``[0, 1)``; zero disables
        adaptation.
    sig : array-like, optional
        Stage-one proposal covariance; a vector is read as a diagonal. When missing,
        calibration fills in the diagonal of the prior variances.
    n_chains : int
        Number of independent chains.
    burn_in : int
        Leading Metropolis-Hastings iterations discarded.
    mh_restart_init : bool
        Start stage two from ``theta_init`` instead of the last stage-one state.
    seed : int
        Master seed; chain ``c`` uses the stream spawned with key ``c``.
    """

    theta_init: np.ndarray
    n_gibbs: int = 1000
    n_mh: int = 5000
    r: Tuple[float, float] = (0.05, 0.05)
    sig: Optional[np.ndarray] = None
    n_chains: int = 1
    burn_in: int = 2000
    mh_restart_init: bool = False
    seed: int = 0

    def __post_init__(self):
        """Validate counts, factors and the proposal covariance."""
        theta = np.array(self.theta_init, dtype=float).reshape(-1)
        theta.flags.writeable = False
        object.__setattr__(self, 'theta_init', theta)
        if self.n_gibbs < 0:
            raise DomainError(f'Ngibbs must be non-negative, got {self.n_gibbs}')
        if not 0 <= self.burn_in < self.n_mh:
            raise DomainError(f'need 0 <= burnIn < Nmh, got burnIn={self.burn_in}, '
                              f'Nmh={self.n_mh}')
        if self.n_chains < 1:
            raise DomainError(f'Nchains must be at least 1, got {self.n_chains}')
        r = tuple(float(v) for v in self.r)
        if len(r) != 2 or not all(0 <= v < 1 for v in r):
            raise DomainError(f'r needs two factors in [0, 1), got {self.r}')
        object.__setattr__(self, 'r', r)
        if self.sig is not None:
            sig = np.array(self.sig, dtype=float)
            if sig.ndim <= 1:
                sig = np.diag(np.atleast_1d(sig))
            dim = theta.shape[0]
            if sig.shape != (dim, dim):
                raise StructuralError(f'sig has shape {sig.shape}, expected ({dim}, {dim})')
            if not np.allclose(sig, sig.T) or not np.all(np.diag(sig) > 0):
                raise DomainError('sig must be symmetric with a positive diagonal')
            sig.flags.writeable = False
            object.__setattr__(self, 'sig', sig)

    @property
    def dim(self):
        """Length of the sampled vectors."""
        return self.theta_init.shape[0]

    def with_default_sig(self, variances):
        """Fill a missing ``sig`` with ``diag(variances)``."""
        if self.sig is not None:
            return self
        return replace(self, sig=np.diag(np.asarray(variances, dtype=float)))

    def to_config(self):
        """Configuration entry using the option names of the ``estim`` block."""
        return {'Ngibbs': self.n_gibbs, 'Nmh': self.n_mh,
                'thetaInit': self.theta_init.tolist(), 'r': list(self.r),
                'sig': None if self.sig is None else self.sig.tolist(),
                'Nchains': self.n_chains, 'burnIn': self.burn_in,
                'mh_restart_init': self.mh_restart_init, 'seed': self.seed}

    @classmethod
    def from_config(cls, entry, **overrides):
        """Build options from an ``estim`` configuration block."""
        names = {'Ngibbs': 'n_gibbs', 'Nmh': 'n_mh', 'thetaInit': 'theta_init', 'r': 'r',
                 'sig': 'sig', 'Nchains': 'n_chains', 'burnIn': 'burn_in',
                 'mh_restart_init': 'mh_restart_init', 'seed': 'seed'}
        unknown = set(entry) - set(names)
        if unknown:
            raise ConfigError(f'unknown estim options {sorted(unknown)}')
        if 'thetaInit' not in entry:
            raise ConfigError('estim needs thetaInit')
        kwargs = {names[k]: v for k, v in entry.items()}
        kwargs.update(overrides)
        return cls(**kwargs)


@exporter.export
@dataclass(frozen=True, eq=False)
class ChainResult:
    """
    Output of one two-stage chain.

    Attributes
    ----------
    gibbs_samples : `numpy.ndarray`
        ``(Ngibbs, dim)`` stage-one states.
    mh_samples : `numpy.ndarray`
        ``(Nmh - burnIn, dim)`` retained stage-two states.
    log_post : `numpy.ndarray`
        Log posterior of every retained state.
    accept_gibbs : `numpy.ndarray`
        Per-coordinate stage-one acceptance rates.
    accept_mh : float
        Stage-two acceptance rate over all its iterations.
    S : `numpy.ndarray`
        Covariance learned from stage one.
    k_history : `numpy.ndarray`
        Stage-one scales after each adaptation window, one row per window.
    t_history : `numpy.ndarray`
        Stage-two scale after each adaptation window.
    seed : tuple of int
        ``(master seed, chain index)`` the chain was drawn with.
    gibbs_log_post : `numpy.ndarray`
        Log posterior of every stage-one state.
    degenerate_cov : bool
        Whether the stage-one samples gave a degenerate covariance.
    """

    gibbs_samples: np.ndarray
    mh_samples: np.ndarray
    log_post: np.ndarray
    accept_gibbs: np.ndarray
    accept_mh: float
    S: np.ndarray
    k_history: np.ndarray
    t_history: np.ndarray
    seed: Tuple[int, int] = (0, 0)
    gibbs_log_post: np.ndarray = field(default_factory=lambda: np.empty(0))
    degenerate_cov: bool = False

    @property
    def samples(self):
        """Retained samples."""
        return self.mh_samples

    @property
    def n_retained(self):
        """Number of retained samples."""
        return self.mh_samples.shape[0]


@exporter.export
def chain_rng(seed, chain_index):
    """Independent generator for chain ``chain_index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(chain_index,)))


def _accept(log_u, delta):
    return bool(np.isfinite(delta) and log_u <= delta)


def _log_uniform(rng):
    with np.errstate(divide='ignore'):
        return np.log(rng.random())


def _start(target, start, chain_index):
    x = np.array(start, dtype=float)
    lp = float(target(x))
    if not np.isfinite(lp):
        raise InitializationError(f'log posterior is {lp} at the starting point '
                                  f'{x.tolist()}', chain_index)
    return x, lp


def _adapt(scale, rate, r):
    scale = np.where(rate < ACCEPT_LOW, scale * (1 - r), scale)
    return np.where(rate > ACCEPT_HIGH, scale * (1 + r), scale)


@exporter.export
def metropolis_within_gibbs(target, start, sig, n_iter, r1, rng, chain_index=None):
    """
    Componentwise random-walk Metropolis with per-coordinate scale adaptation.

    Parameters
    ----------
    target : callable
        Log density of flat parameter arrays.
    start : array-like
        Starting point; ``target`` must be finite there.
    sig : array-like
        Proposal covariance; only its diagonal is used.
    n_iter : int
        Number of sweeps over all coordinates.
    r1 : float
        Adaptation factor.
    rng : `numpy.random.Generator`
        Random source; only ``standard_normal`` and ``random`` are used.
    chain_index : int, optional
        Reported in errors.

    Returns
    -------
    samples : `numpy.ndarray`
        ``(n_iter, dim)`` states after every sweep.
    log_post : `numpy.ndarray`
        Log density of every state.
    accept : `numpy.ndarray`
        Per-coordinate acceptance rates.
    k_history : `numpy.ndarray`
        Scales ``k_j`` after each adaptation window.
    """
    x, lp = _start(target, start, chain_index)
    dim = x.shape[0]
    sd = np.sqrt(np.diag(np.asarray(sig, dtype=float)))
    k = np.ones(dim)
    accepted = np.zeros(dim, dtype=int)
    samples = np.empty((n_iter, dim))
    trace = np.empty(n_iter)
    history = []
    for i in range(1, n_iter + 1):
        for j in range(dim):
            proposal = x.copy()
            proposal[j] += np.sqrt(k[j]) * sd[j] * rng.standard_normal()
            lp_prop = float(target(proposal))
            if _accept(_log_uniform(rng), lp_prop - lp):
                x, lp = proposal, lp_prop
                accepted[j] += 1
        samples[i - 1] = x
        trace[i - 1] = lp
        if i % ADAPT_EVERY == 0:
            k = _adapt(k, accepted / i, r1)
            history.append(k.copy())
            log.debug('MwG iteration %d: acceptance %s, k %s', i, accepted / i, k)
    rates = accepted / n_iter if n_iter else np.zeros(dim)
    return samples, trace, rates, np.array(history).reshape(-1, dim)


@exporter.export
def learned_covariance(samples, return_flag=False):
    """
    Empirical covariance of stage-one samples.

    Parameters
    ----------
    samples : array-like
        ``(n, dim)`` samples, ``n >= 2``.
    return_flag : bool
        Also return whether the samples were degenerate.

    Returns
    -------
    S : `numpy.ndarray`
        Symmetrized covariance with the diagonal floored at ``1e-12`` times its largest
        entry.
    degenerate : bool
        Only with ``return_flag``.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, np.newaxis]
    if samples.shape[0] < 2:
        raise DomainError('a covariance needs at least two samples')
    S = np.atleast_2d(np.cov(samples, rowvar=False, ddof=1))
    S = 0.5 * (S + S.T)
    diag = np.diag(S).copy()
    top = diag.max()
    degenerate = not top > 0
    floor = 1e-12 * top if not degenerate else 1e-12
    if degenerate:
        warnings.warn('stage-one samples are constant; using a floored diagonal covariance')
    np.fill_diagonal(S, np.maximum(diag, floor))
    if return_flag:
        return S, degenerate
    return S


@exporter.export
def metropolis_hastings(target, start, S, n_iter, burn_in, r2, rng, chain_index=None):
    """
    Random-walk Metropolis-Hastings with proposals ``N(x, t S)`` and scale adaptation.

    Parameters
    ----------
    target : callable
        Log density of flat parameter arrays.
    start : array-like
        Starting point; ``target`` must be finite there.
    S : array-like
        Proposal shape.
    n_iter : int
        Number of iterations.
    burn_in : int
        Leading iterations left out of the returned samples.
    r2 : float
        Adaptation factor.
    rng : `numpy.random.Generator`
        Random source; only ``standard_normal`` and ``random`` are used.
    chain_index : int, optional
        Reported in errors.

    Returns
    -------
    samples : `numpy.ndarray`
        ``(n_iter - burn_in, dim)`` retained states.
    log_post : `numpy.ndarray`
        Log density of the retained states.
    accept : float
        Acceptance rate over all iterations.
    t_history : `numpy.ndarray`
        Scale ``t`` after each adaptation window.
    """
    x, lp = _start(target, start, chain_index)
    dim = x.shape[0]
    chol, _ = cholesky_with_jitter(S)
    t = 1.0
    accepted = 0
    samples = np.empty((n_iter, dim))
    trace = np.empty(n_iter)
    history = []
    for i in range(1, n_iter + 1):
        proposal = x + np.sqrt(t) * (chol @ rng.standard_normal(dim))
        lp_prop = float(target(proposal))
        if _accept(_log_uniform(rng), lp_prop - lp):
            x, lp = proposal, lp_prop
            accepted += 1
        samples[i - 1] = x
        trace[i - 1] = lp
        if i % ADAPT_EVERY == 0:
            t = float(_adapt(t, accepted / i, r2))
            history.append(t)
            log.debug('MH iteration %d: acceptance %.4f, t %.6g', i, accepted / i, t)
    return samples[burn_in:], trace[burn_in:], accepted / n_iter, np.array(history)


@exporter.export
def run_chain(target, opts, chain_index=0, rng=None):
    """
    Run both stages of one chain.

    Parameters
    ----------
    target : callable
        Log density of flat parameter arrays.
    opts : `EstimOptions`
        Sampler settings; ``sig`` must be set.
    chain_index : int
        Index used to derive the random stream.
    rng : `numpy.random.Generator`, optional
        Overrides the stream derived from ``opts.seed`` and ``chain_index``.

    Returns
    -------
    result : `ChainResult`
    """
    if opts.sig is None:
        raise StructuralError('the proposal covariance sig is not set')
    if rng is None:
        rng = chain_rng(opts.seed, chain_index)
    log.info('chain %d: %d Gibbs and %d MH iterations', chain_index, opts.n_gibbs, opts.n_mh)
    gibbs, gibbs_lp, accept_gibbs, k_history = metropolis_within_gibbs(
        target, opts.theta_init, opts.sig, opts.n_gibbs, opts.r[0], rng, chain_index)
    degenerate = False
    if opts.n_gibbs >= 2:
        S, degenerate = learned_covariance(gibbs, return_flag=True)
    else:
        S = np.array(opts.sig)
    start = opts.theta_init if opts.mh_restart_init or opts.n_gibbs == 0 else gibbs[-1]
    samples, lp, accept_mh, t_history = metropolis_hastings(
        target, start, S, opts.n_mh, opts.burn_in, opts.r[1], rng, chain_index)
    log.info('chain %d done: MwG acceptance %s, MH acceptance %.4f', chain_index,
             np.array2string(accept_gibbs, precision=3), accept_mh)
    return ChainResult(gibbs, samples, lp, accept_gibbs, float(accept_mh), S, k_history,
                       t_history, (int(opts.seed), int(chain_index)), gibbs_lp, degenerate)


def _chain_job(args):
    target, opts, chain_index = args
    return run_chain(target, opts, chain_index)


@exporter.export
def default_workers():
    """Number of workers used when none is requested."""
    return os.cpu_count() or 1


@exporter.export
def run_chains(target, opts, workers=None):
    """
    Run ``opts.n_chains`` independent chains.

    Chain ``c`` depends only on ``(opts.seed, c)``, so the result does not depend on the
    number of workers.

    Parameters
    ----------
    target : callable
        Log density of flat parameter arrays; must be picklable when ``workers > 1``.
    opts : `EstimOptions`
        Sampler settings.
    workers : int, optional
        Maximum number of worker processes, all available processors by default.

    Returns
    -------
    chains : list of `ChainResult`
    """
    workers = default_workers() if workers is None else int(workers)
    jobs = [(target, opts, c) for c in range(opts.n_chains)]
    if workers <= 1 or opts.n_chains == 1:
        return [_chain_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, opts.n_chains)) as pool:
        return list(pool.map(_chain_job, jobs))


def _stack_chains(chains):
    arrays = [np.asarray(c, dtype=float) for c in chains]
    arrays = [a[:, np.newaxis] if a.ndim == 1 else a for a in arrays]
    if len(arrays) < 2:
        raise DomainError('the Gelman-Rubin diagnostic needs at least two chains')
    if len({a.shape for a in arrays}) != 1:
        raise StructuralError(f'chains have unequal shapes {[a.shape for a in arrays]}')
    if arrays[0].shape[0] < 10:
        raise DomainError('chains need at least 10 samples')
    return np.stack(arrays)


@exporter.export
def gelman_rubin(chains):
    r"""
    Potential scale reduction factors.

    Parameters
    ----------
    chains : sequence of array-like
        ``m >= 2`` chains of equal length ``n >= 10``, each ``(n, dim)`` or ``(n,)``.

    Returns
    -------
    psrf : `numpy.ndarray`
        Per-coordinate factor :math:`\sqrt{(W(n-1)/n + B/n)/W}`. A zero within-chain
        variance gives :math:`\sqrt{(n-1)/n}` when the chains agree and `PSRF_SENTINEL`
        otherwise.
    mpsrf : float
        Multivariate factor :math:`(n-1)/n + (m+1)/m\,\lambda_{max}(W^{-1}B/n)`;
        `PSRF_SENTINEL` when ``W`` is singular.
    """
    data = _stack_chains(chains)
    m, n, dim = data.shape
    means = data.mean(axis=1)
    W = np.mean(np.var(data, axis=1, ddof=1), axis=0)
    B = n * np.var(means, axis=0, ddof=1)
    psrf = np.empty(dim)
    for j in range(dim):
        if W[j] > 0:
            psrf[j] = np.sqrt((n - 1) / n + B[j] / (n * W[j]))
        elif B[j] == 0:
            psrf[j] = np.sqrt((n - 1) / n)
        else:
            psrf[j] = PSRF_SENTINEL

    W_mat = np.mean([np.atleast_2d(np.cov(c, rowvar=False, ddof=1)) for c in data], axis=0)
    B_n = np.atleast_2d(np.cov(means, rowvar=False, ddof=1))
    try:
        lam = float(linalg.eigh(B_n, W_mat, eigvals_only=True)[-1])
    except (linalg.LinAlgError, ValueError):
        log.debug('within-chain covariance singular; multivariate PSRF undefined')
        return psrf, PSRF_SENTINEL
    return psrf, float((n - 1) / n + (m + 1) / m * lam)


def _acf_full(x):
    n = x.shape[0]
    size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(x, size)
    return np.fft.irfft(spec * np.conj(spec), size)[:n]


@exporter.export
def autocorrelation(x, max_lag=40, return_flag=False):
    r"""
    Sample autocorrelation function.

    Parameters
    ----------
    x : array-like
        Series of length greater than ``max_lag``.
    max_lag : int
        Largest lag.
    return_flag : bool
        Also return whether the series was constant.

    Returns
    -------
    acf : `numpy.ndarray`
        :math:`\rho(\ell) = \sum_t (x_t-\bar x)(x_{t+\ell}-\bar x) / \sum_t (x_t-\bar x)^2`
        for ``ell = 0..max_lag``; zero beyond lag 0 for a constant series.
    degenerate : bool
        Only with ``return_flag``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] <= max_lag:
        raise DomainError(f'series of length {x.shape[0]} too short for lag {max_lag}')
    xc = x - x.mean()
    denom = float(xc @ xc)
    acf = np.zeros(max_lag + 1)
    acf[0] = 1.0
    degenerate = denom == 0
    if degenerate:
        warnings.warn('constant series; autocorrelation set to zero beyond lag 0')
    else:
        acf[1:] = _acf_full(xc)[1:max_lag + 1] / denom
    if return_flag:
        return acf, degenerate
    return acf


@exporter.export
def effective_sample_size(x):
    """
    Effective sample size of a chain.

    The autocorrelation sum is truncated with the initial positive sequence rule on
    pairs of consecutive lags. The result is capped at ``n log10(n)``.

    Parameters
    ----------
    x : array-like
        Series, or ``(n, dim)`` samples for one value per column.

    Returns
    -------
    ess : float or `numpy.ndarray`
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        return np.array([effective_sample_size(col) for col in x.T])
    n = x.shape[0]
    xc = x - x.mean()
    denom = float(xc @ xc)
    if n < 4 or denom == 0:
        return float(n)
    rho = _acf_full(xc) / denom
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2 * pair
    if tau <= 0:
        return float(n * np.log10(n))
    return float(min(n / tau, n * np.log10(n)))
