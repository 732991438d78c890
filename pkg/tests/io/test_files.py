# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Test the `files` module."""

import json

import numpy as np
import pandas as pd
import pytest

from pycalib.calc import fit_emulator, gp_predict, joint_design, PriorSet, PriorSpec
from pycalib.cbook import get_test_data
from pycalib.core import ObservationSet, SimulatorCode
from pycalib.errors import ConfigError
from pycalib.inference import calibrate, CVOptions, EstimOptions, StatModelSpec
from pycalib.io import (load_emulator, load_result, read_design, read_inputs, read_manifest,
                        read_observations, read_table, save_emulator, save_result,
                        write_design, write_observations)
from pycalib.testing import assert_array_almost_equal


def small_run(cv=None, n_chains=1):
    """A short linear M1 calibration."""
    x = np.linspace(0.1, 1.0, 6)
    data = ObservationSet(x, 0.8 * x + 0.01 * np.random.default_rng(1).standard_normal(6))
    spec = StatModelSpec('M1', data, SimulatorCode(lambda x, t: t[0] * x[0], p=1))
    priors = PriorSet([PriorSpec('gaussian', (1.0, 1.0)), PriorSpec('gamma', (1, 1e-3))])
    opts = EstimOptions([0.8, 1e-4], n_gibbs=100, n_mh=300, burn_in=100,
                        sig=[1e-3, 1e-9], n_chains=n_chains, seed=2)
    return calibrate(spec, priors, opts, cv=cv, workers=1)


def test_read_oscillator_field():
    """The packaged oscillator data have fifty observations on one input."""
    data = read_observations(get_test_data('oscillator_field.csv'))
    assert data.n == 50
    assert data.d == 1
    assert data.X[0, 0] == 0
    assert data.y[0] == pytest.approx(1.0, abs=0.05)


def test_observations_round_trip(tmp_path):
    """Observations written to CSV read back exactly."""
    data = ObservationSet([[0.1, 2.0], [0.3, 1.0]], [0.5, np.pi])
    write_observations(tmp_path / 'obs.csv', data)
    again = read_observations(tmp_path / 'obs.csv')
    assert np.array_equal(again.X, data.X)
    assert np.array_equal(again.y, data.y)


def test_observations_wrong_columns(tmp_path):
    """Observation files need x1..xd and y."""
    path = tmp_path / 'obs.csv'
    path.write_text('t,y\n0,1\n1,2\n')
    with pytest.raises(ConfigError, match='x1..xd'):
        read_observations(path)


def test_table_non_numeric_line(tmp_path):
    """A non-numeric cell is reported with its line number."""
    path = tmp_path / 'obs.csv'
    path.write_text('x1,y\n0,1\n1,abc\n')
    with pytest.raises(ConfigError) as err:
        read_table(path, 'observations')
    assert err.value.line == 3
    assert f'{path}:3:' in str(err.value)


def test_table_missing_value(tmp_path):
    """Empty cells are rejected."""
    path = tmp_path / 'obs.csv'
    path.write_text('x1,y\n0,1\n1,\n')
    with pytest.raises(ConfigError, match='non-finite'):
        read_table(path)


def test_table_missing_file(tmp_path):
    """A missing file is a configuration error naming the path."""
    with pytest.raises(ConfigError, match='not found'):
        read_table(tmp_path / 'nope.csv')


def test_read_inputs_empty(tmp_path):
    """An empty inputs file gives no rows."""
    path = tmp_path / 'new.csv'
    path.write_text('')
    assert read_inputs(path, 2).shape == (0, 2)


def test_read_inputs_header_only(tmp_path):
    """A header-only inputs file gives no rows."""
    path = tmp_path / 'new.csv'
    path.write_text('x1\n')
    assert read_inputs(path, 1).shape == (0, 1)


def test_read_inputs_columns(tmp_path):
    """Inputs must have exactly d columns."""
    path = tmp_path / 'new.csv'
    path.write_text('x1,x2\n1,2\n')
    with pytest.raises(ConfigError):
        read_inputs(path, 1)


def test_design_with_manifest(tmp_path):
    """A written design keeps its bounds, provenance and input split."""
    design = joint_design(([0.0], [1.0]), ([1.0, 5.0], [2.0, 6.0]), n=8, seed=0)
    write_design(tmp_path / 'doe.csv', design, np.arange(8.0))
    again, outputs = read_design(tmp_path / 'doe.csv')
    assert np.array_equal(again.points, design.points)
    assert np.array_equal(again.bsup, design.bsup)
    assert again.n_inputs == 1
    assert again.provenance == 'generated'
    assert np.array_equal(outputs, np.arange(8.0))
    header = (tmp_path / 'doe.csv').read_text().splitlines()[0]
    assert header == 'x1,theta1,theta2,y'


def test_user_design(tmp_path):
    """A design without manifest is user supplied and bounded by its ranges."""
    path = tmp_path / 'doe.csv'
    path.write_text('x1,theta1\n0,1\n2,1\n1,1\n')
    design, outputs = read_design(path)
    assert outputs is None
    assert design.provenance == 'user-supplied'
    assert design.n_inputs == 1
    assert_array_almost_equal(design.binf, [0.0, 0.5])
    assert_array_almost_equal(design.bsup, [2.0, 1.5])


def test_emulator_round_trip(tmp_path):
    """A saved emulator predicts exactly as the original."""
    design = joint_design(([0.0], [1.0]), ([0.0], [2.0]), n=12, seed=0)
    model = fit_emulator(design, design.points[:, 0] * design.points[:, 1], seed=0)
    save_emulator(tmp_path / 'emulator', model)
    again = load_emulator(tmp_path / 'emulator')
    T = [[0.2, 0.4], [0.7, 1.9]]
    assert np.array_equal(gp_predict(again, T)[0], gp_predict(model, T)[0])
    assert again.n_inputs == 1
    with open(tmp_path / 'emulator' / 'emulator.json') as f:
        assert json.load(f)['family'] == 'matern5_2'


def test_emulator_missing(tmp_path):
    """Loading from an empty directory fails with a configuration error."""
    with pytest.raises(ConfigError):
        load_emulator(tmp_path)


def test_result_round_trip(tmp_path):
    """A saved calibration reloads with identical chains and estimators."""
    result = small_run(cv=CVOptions(2, seed=0))
    save_result(tmp_path, result, config={'model': 'M1'})
    again = load_result(tmp_path, result.spec, result.priors, result.opts)
    assert np.array_equal(again.chains[0].mh_samples, result.chains[0].mh_samples)
    assert np.array_equal(again.map.values, result.map.values)
    assert np.array_equal(again.mean.values, result.mean.values)
    assert again.cv.rmse == result.cv.rmse
    pd.testing.assert_frame_equal(again.bands, result.bands)
    assert json.loads((tmp_path / 'config.json').read_text()) == {'model': 'M1'}


def test_chain_csv_columns(tmp_path):
    """Chain files have one column per slot and the log posterior."""
    result = small_run()
    save_result(tmp_path, result)
    frame = pd.read_csv(tmp_path / 'chain_0.csv')
    assert list(frame.columns) == ['theta1', 'sigma_e2', 'log_post']
    assert len(frame) == 200


def test_manifest_matches_summary(tmp_path):
    """Manifest estimators and rates are the values printed by the summary."""
    result = small_run(n_chains=2)
    save_result(tmp_path, result)
    manifest = read_manifest(tmp_path)
    text = result.summary()
    assert ' '.join(repr(v) for v in manifest['estimators']['map']) in text
    rates = [c['accept_mh'] for c in manifest['chains']]
    assert repr(float(np.mean(rates))) in text
    assert manifest['psrf']['multivariate'] == result.psrf[1]
    assert manifest['chains'][1]['seed'] == [2, 1]


def test_load_result_missing_chain(tmp_path):
    """A result directory without its chain files cannot be reloaded."""
    result = small_run()
    save_result(tmp_path, result)
    (tmp_path / 'chain_0.csv').unlink()
    with pytest.raises(ConfigError, match='chain file missing'):
        load_result(tmp_path, result.spec, result.priors, result.opts)
