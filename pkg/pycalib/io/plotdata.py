# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Tables behind the diagnostic and result figures of a calibration."""

from pathlib import Path
import warnings

import numpy as np
import pandas as pd
from scipy import stats

from ..errors import StateError
from ..inference.sampler import autocorrelation
from ..package_tools import Exporter

exporter = Exporter(globals())

with exporter:
    MAX_LAG = 40
    DENSITY_POINTS = 512
    MAX_PAIRS = 2000


@exporter.export
def acf_table(chains, layout, max_lag=MAX_LAG):
    """Autocorrelation of the retained samples, one row per chain and lag."""
    frames = []
    for c, chain in enumerate(chains):
        lags = min(max_lag, chain.n_retained - 1)
        if lags < 0:
            continue
        frame = pd.DataFrame({'chain': c, 'lag': np.arange(lags + 1)})
        with warnings.catch_warnings():
            warnings.simplefilter('ignore')
            for j, name in enumerate(layout.names):
                frame[name] = autocorrelation(chain.mh_samples[:, j], lags)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


@exporter.export
def trace_table(chains, layout):
    """Every sampler state of both stages with its log posterior."""
    frames = []
    for c, chain in enumerate(chains):
        for stage, samples, lp in (('gibbs', chain.gibbs_samples, chain.gibbs_log_post),
                                   ('mh', chain.mh_samples, chain.log_post)):
            frame = pd.DataFrame(samples, columns=layout.names)
            frame.insert(0, 'iteration', np.arange(samples.shape[0]))
            frame.insert(0, 'stage', stage)
            frame.insert(0, 'chain', c)
            frame['log_post'] = lp
            frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def _kde_grid(samples, n_points):
    kde = stats.gaussian_kde(samples, bw_method='silverman')
    bandwidth = float(np.sqrt(kde.covariance[0, 0]))
    grid = np.linspace(samples.min() - 4 * bandwidth, samples.max() + 4 * bandwidth,
                       n_points)
    return grid, kde(grid)


@exporter.export
def density_table(samples, priors, names, n_points=DENSITY_POINTS):
    """
    Prior and posterior densities of every parameter on a common grid.

    The posterior density is a Gaussian kernel estimate with Silverman's bandwidth; the
    grid spans the sample range widened by four bandwidths on each side.

    Parameters
    ----------
    samples : array-like
        ``(N, dim)`` pooled posterior samples.
    priors : `PriorSet`
        Priors in the same order.
    names : list of str
        Column names.
    n_points : int
        Grid size per parameter.

    Returns
    -------
    densities : `pandas.DataFrame`
        Columns ``parameter``, ``x``, ``prior`` and ``posterior``.
    """
    samples = np.asarray(samples, dtype=float)
    frames = []
    for j, (name, prior) in enumerate(zip(names, priors)):
        column = samples[:, j]
        if np.ptp(column) > 0:
            grid, posterior = _kde_grid(column, n_points)
        else:
            warnings.warn(f'posterior samples of {name} are constant; no density estimate')
            grid = np.linspace(column[0] - 0.5, column[0] + 0.5, n_points)
            posterior = np.full(n_points, np.nan)
        frames.append(pd.DataFrame({'parameter': name, 'x': grid,
                                    'prior': prior.distribution.pdf(grid),
                                    'posterior': posterior}))
    return pd.concat(frames, ignore_index=True)


@exporter.export
def pairs_table(chains, layout, max_rows=MAX_PAIRS):
    """Pooled retained samples thinned to at most ``max_rows`` rows."""
    frames = [pd.DataFrame(c.mh_samples, columns=layout.names).assign(chain=i)
              for i, c in enumerate(chains)]
    pooled = pd.concat(frames, ignore_index=True)
    thin = max(1, -(-len(pooled) // max_rows))
    return pooled.iloc[::thin].reset_index(drop=True)


@exporter.export
def output_table(bands, data):
    """Bands over the observation inputs with the observed value of every row."""
    n_kinds = bands['band_kind'].nunique()
    out = bands.copy()
    out['y'] = np.tile(data.y, n_kinds) if len(out) == n_kinds * data.n else np.nan
    return out


@exporter.export
def write_plot_data(directory, result):
    """
    Write ``acf.csv``, ``trace.csv``, ``density.csv``, ``pairs.csv`` and ``out.csv``.

    Parameters
    ----------
    directory : str or `pathlib.Path`
        Destination, created when missing.
    result : `CalibrationResult`
        Calibration to describe.

    Returns
    -------
    paths : list of `pathlib.Path`
        Files written.
    """
    if not result.chains or all(c.n_retained == 0 for c in result.chains):
        raise StateError('calibration result holds no retained samples')
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    layout = result.spec.layout
    tables = {'acf.csv': acf_table(result.chains, layout),
              'trace.csv': trace_table(result.chains, layout),
              'density.csv': density_table(result.pooled, result.priors, layout.names),
              'pairs.csv': pairs_table(result.chains, layout),
              'out.csv': output_table(result.bands, result.spec.data)}
    paths = []
    for name, table in tables.items():
        path = directory / name
        table.to_csv(path, index=False)
        paths.append(path)
    return paths
