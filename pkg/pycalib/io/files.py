# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Read and write observations, designs, emulators, chains and result directories."""

import json
from pathlib import Path
import re

import numpy as np
import pandas as pd

from .. import __version__
from ..calc.design import DesignOfExperiments
from ..calc.emulator import EmulatorModel
from ..core import ObservationSet
from ..errors import ConfigError, StateError
from ..inference.calibration import CalibrationResult, CVReport, pooled_estimators
from ..inference.sampler import ChainResult, effective_sample_size
from ..package_tools import Exporter

exporter = Exporter(globals())


def _line_of(message):
    match = re.search(r'line (\d+)', message)
    return int(match.group(1)) if match else None


@exporter.export
def read_table(path, what='table'):
    """
    Read a headered numeric CSV file.

    Parameters
    ----------
    path : str or `pathlib.Path`
        File to read.
    what : str
        Description used in error messages.

    Returns
    -------
    frame : `pandas.DataFrame`
        Float columns, parsed with round-trip precision.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f'{what} file not found', path)
    try:
        frame = pd.read_csv(path, float_precision='round_trip', skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise ConfigError(f'{what} file is empty', path) from None
    except pd.errors.ParserError as e:
        raise ConfigError(f'malformed {what}: {e}', path, _line_of(str(e))) from None
    frame.columns = [str(c).strip() for c in frame.columns]
    for col in frame.columns:
        if frame[col].dtype.kind in 'fiu':
            continue
        for row, value in enumerate(frame[col]):
            try:
                float(value)
            except (TypeError, ValueError):
                raise ConfigError(f'non-numeric value {value!r} in column {col!r} of {what}',
                                  path, row + 2) from None
        frame[col] = frame[col].astype(float)
    frame = frame.astype(float)
    bad = ~np.isfinite(frame.to_numpy())
    if bad.any():
        row = int(np.argwhere(bad)[0, 0])
        raise ConfigError(f'missing or non-finite value in {what}', path, row + 2)
    return frame


def _input_columns(frame, path, what):
    names = [c for c in frame.columns if re.fullmatch(r'x\d+', c)]
    expected = [f'x{i + 1}' for i in range(len(names))]
    if names != expected:
        raise ConfigError(f'{what} needs input columns x1..xd in order, got '
                          f'{list(frame.columns)}', path, 1)
    return names


@exporter.export
def read_observations(path):
    """
    Read field observations.

    The file has columns ``x1..xd`` followed by ``y``.

    Returns
    -------
    data : `ObservationSet`
    """
    frame = read_table(path, 'observations')
    names = _input_columns(frame, path, 'observations')
    if not names or list(frame.columns) != names + ['y']:
        raise ConfigError(f'observations need columns x1..xd, y; got {list(frame.columns)}',
                          path, 1)
    try:
        return ObservationSet(frame[names].to_numpy(), frame['y'].to_numpy())
    except ValueError as e:
        raise ConfigError(str(e), path) from e


@exporter.export
def write_observations(path, data):
    """Write an `ObservationSet` in the layout read by `read_observations`."""
    frame = pd.DataFrame(data.X, columns=[f'x{i + 1}' for i in range(data.d)])
    frame['y'] = data.y
    frame.to_csv(path, index=False)


@exporter.export
def read_inputs(path, d):
    """
    Read new inputs with columns ``x1..xd``; an empty or header-only file gives no rows.

    Returns
    -------
    X : `numpy.ndarray`
        ``(m, d)`` inputs.
    """
    path = Path(path)
    if path.is_file() and path.stat().st_size == 0:
        return np.empty((0, d))
    frame = read_table(path, 'inputs')
    names = _input_columns(frame, path, 'inputs')
    if len(names) != d or len(frame.columns) != d:
        raise ConfigError(f'inputs need exactly the columns x1..x{d}, got '
                          f'{list(frame.columns)}', path, 1)
    return frame[names].to_numpy().reshape(-1, d)


def _sidecar(path):
    path = Path(path)
    return path.with_suffix('.json')


def _write_json(path, payload):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write('\n')


def _read_json(path, what):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f'{what} not found', path)
    with open(path, encoding='utf-8') as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f'invalid JSON in {what}: {e.msg}', path, e.lineno) from None


@exporter.export
def write_design(path, design, outputs=None):
    """
    Write a design of experiments and its provenance manifest.

    The CSV holds the design columns and, when given, the simulator outputs in a ``y``
    column. Bounds, provenance and the input count go to a JSON file next to it.
    """
    frame = pd.DataFrame(design.points, columns=design.column_names)
    if outputs is not None:
        frame['y'] = np.asarray(outputs, dtype=float)
    frame.to_csv(path, index=False)
    _write_json(_sidecar(path), {'binf': design.binf.tolist(), 'bsup': design.bsup.tolist(),
                                 'provenance': design.provenance,
                                 'n_inputs': design.n_inputs,
                                 'columns': design.column_names})


@exporter.export
def read_design(path):
    """
    Read a design written by `write_design` or supplied by the user.

    Without a manifest the design is marked ``user-supplied`` and its bounds are the
    column ranges.

    Returns
    -------
    design : `DesignOfExperiments`
    outputs : `numpy.ndarray` or None
        Content of the ``y`` column when present.
    """
    frame = read_table(path, 'design')
    outputs = frame.pop('y').to_numpy() if 'y' in frame.columns else None
    n_inputs = sum(1 for c in frame.columns if re.fullmatch(r'x\d+', c))
    points = frame.to_numpy()
    sidecar = _sidecar(path)
    if sidecar.is_file():
        meta = _read_json(sidecar, 'design manifest')
        return DesignOfExperiments(points, meta['binf'], meta['bsup'], meta['provenance'],
                                   meta.get('n_inputs')), outputs
    binf, bsup = points.min(axis=0), points.max(axis=0)
    flat = binf == bsup
    binf, bsup = np.where(flat, binf - 0.5, binf), np.where(flat, bsup + 0.5, bsup)
    return DesignOfExperiments(points, binf, bsup, 'user-supplied',
                               n_inputs if n_inputs else None), outputs


@exporter.export
def save_emulator(directory, model):
    """Write ``emulator.json`` and ``design.csv`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    q = model.dim
    d = model.n_inputs
    if d is None:
        columns = [f'u{i + 1}' for i in range(q)]
    else:
        columns = [f'x{i + 1}' for i in range(d)] + [f'theta{i + 1}' for i in range(q - d)]
    frame = pd.DataFrame(model.design, columns=columns)
    frame['y'] = model.outputs
    frame.to_csv(directory / 'design.csv', index=False)
    _write_json(directory / 'emulator.json', model.to_config())


@exporter.export
def load_emulator(directory):
    """Rebuild an emulator saved with `save_emulator`; predictions are reproduced exactly."""
    directory = Path(directory)
    config = _read_json(directory / 'emulator.json', 'emulator manifest')
    frame = read_table(directory / 'design.csv', 'emulator design')
    outputs = frame.pop('y').to_numpy()
    return EmulatorModel.from_config(config, frame.to_numpy(), outputs)


def _chain_frame(samples, log_post, names):
    frame = pd.DataFrame(samples, columns=names)
    frame['log_post'] = log_post
    return frame


@exporter.export
def write_chains(directory, chains, layout):
    """Write ``chain_<c>.csv`` (retained samples) and ``gibbs_<c>.csv`` per chain."""
    directory = Path(directory)
    for c, chain in enumerate(chains):
        _chain_frame(chain.mh_samples, chain.log_post, layout.names).to_csv(
            directory / f'chain_{c}.csv', index=False)
        _chain_frame(chain.gibbs_samples, chain.gibbs_log_post, layout.names).to_csv(
            directory / f'gibbs_{c}.csv', index=False)


def _chain_entry(chain):
    ess = (effective_sample_size(chain.mh_samples).tolist() if chain.n_retained >= 4
           else [])
    return {'seed': list(chain.seed), 'accept_gibbs': chain.accept_gibbs.tolist(),
            'accept_mh': chain.accept_mh, 'S': chain.S.tolist(),
            'k_history': chain.k_history.tolist(), 't_history': chain.t_history.tolist(),
            'degenerate_cov': chain.degenerate_cov, 'ess': ess}


@exporter.export
def result_manifest(result):
    """JSON-ready summary of a calibration: options, estimators, rates and diagnostics."""
    layout = result.spec.layout
    manifest = {'version': __version__, 'model': result.spec.kind,
                'parameters': layout.names, 'estim': result.opts.to_config(),
                'prior': result.priors.to_config(),
                'chains': [_chain_entry(c) for c in result.chains],
                'estimators': {'map': result.map.values.tolist(),
                               'mean': result.mean.values.tolist(),
                               'map_log_post': result.map_log_post}}
    if result.psrf is not None:
        manifest['psrf'] = {'per_coordinate': result.psrf[0].tolist(),
                            'multivariate': result.psrf[1]}
    if result.cv is not None:
        manifest['cv'] = {'method': result.cv.method, 'rmse': result.cv.rmse,
                          'cover_rate': result.cv.cover_rate}
    return manifest


@exporter.export
def save_result(directory, result, config=None):
    """
    Write a calibration result directory.

    Contents: ``config.json`` (when ``config`` is given), ``manifest.json``, chain CSVs,
    ``bands.csv``, ``cv.csv`` after cross-validation, and ``emulator/`` for the emulator
    models.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if config is not None:
        _write_json(directory / 'config.json', config)
    _write_json(directory / 'manifest.json', result_manifest(result))
    write_chains(directory, result.chains, result.spec.layout)
    result.bands.to_csv(directory / 'bands.csv', index=False)
    if result.cv is not None:
        result.cv.rows.to_csv(directory / 'cv.csv', index=False)
    if result.spec.uses_emulator:
        save_emulator(directory / 'emulator', result.spec.emulator)


@exporter.export
def read_manifest(directory):
    """Load ``manifest.json`` of a result directory."""
    return _read_json(Path(directory) / 'manifest.json', 'result manifest')


@exporter.export
def load_result(directory, spec, priors, opts):
    """
    Rebuild a `CalibrationResult` from a result directory.

    Parameters
    ----------
    directory : str or `pathlib.Path`
        Directory written by `save_result`.
    spec : `StatModelSpec`
        Model the directory was calibrated with.
    priors : `PriorSet`
        Priors of the run.
    opts : `EstimOptions`
        Sampler settings of the run.

    Returns
    -------
    result : `CalibrationResult`
    """
    directory = Path(directory)
    manifest = read_manifest(directory)
    layout = spec.layout
    chains = []
    for c, entry in enumerate(manifest['chains']):
        retained = _read_chain(directory / f'chain_{c}.csv', layout)
        gibbs = _read_chain(directory / f'gibbs_{c}.csv', layout)
        chains.append(ChainResult(
            gibbs[0], retained[0], retained[1], np.asarray(entry['accept_gibbs']),
            float(entry['accept_mh']), np.asarray(entry['S']),
            np.asarray(entry['k_history']).reshape(-1, layout.total),
            np.asarray(entry['t_history']), tuple(entry['seed']), gibbs[1],
            bool(entry['degenerate_cov'])))
    if not chains:
        raise StateError(f'{directory} holds no chains')
    map_v, mean_v, map_lp = pooled_estimators(chains, layout)
    bands_path = directory / 'bands.csv'
    if not bands_path.is_file():
        raise ConfigError('bands.csv missing from result directory', directory)
    bands = pd.read_csv(bands_path, float_precision='round_trip')
    cv = None
    if (directory / 'cv.csv').is_file():
        cv = CVReport.from_rows(pd.read_csv(directory / 'cv.csv',
                                            float_precision='round_trip'))
    psrf = None
    if 'psrf' in manifest:
        psrf = (np.asarray(manifest['psrf']['per_coordinate']),
                float(manifest['psrf']['multivariate']))
    return CalibrationResult(spec, priors.with_layout(layout), opts, chains, map_v, mean_v,
                             map_lp, bands, cv, psrf)


def _read_chain(path, layout):
    if not Path(path).is_file():
        raise ConfigError('chain file missing from result directory', path)
    frame = read_table(path, 'chain')
    expected = layout.names + ['log_post']
    if list(frame.columns) != expected:
        raise ConfigError(f'chain columns {list(frame.columns)} do not match {expected}',
                          path, 1)
    return (frame[layout.names].to_numpy(dtype=float).reshape(-1, layout.total),
            frame['log_post'].to_numpy(dtype=float))
