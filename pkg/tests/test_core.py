# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Test the `core` module."""

import sys

import numpy as np
import pytest

from pycalib.core import (builtin_code, external_code, external_code_bridge, ObservationSet,
                          OSCILLATOR, oscillator_code, oscillator_parameters,
                          ParameterLayout, ParameterVector, SimulatorCode, split_parameters)
from pycalib.errors import ConfigError, DomainError, SimulatorError, StructuralError
from pycalib.testing import assert_array_almost_equal, OSCILLATOR_THETA
from pycalib.units import units

ECHO_SUM = [sys.executable, '-c',
            'import sys; print(sum(float(v) for v in sys.stdin.readline().split()))']
OSCILLATOR_CHILD = [sys.executable, '-c',
                    'import math, sys; '
                    't, a, xi, k, m, phi = map(float, sys.stdin.readline().split()); '
                    'w = math.sqrt(k / m); '
                    'print(repr(a * math.exp(-xi * w * t) '
                    '* math.sin(math.sqrt(1 - xi ** 2) * w * t + phi)))']


def test_observations_vector_input():
    """A one dimensional X is read as a single input column."""
    data = ObservationSet([0.0, 1.0, 2.0], [1.0, 2.0, 3.0])
    assert data.X.shape == (3, 1)
    assert data.n == 3
    assert data.d == 1


def test_observations_read_only():
    """Stored arrays cannot be modified in place."""
    data = ObservationSet([0.0, 1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        data.y[0] = 5.0


def test_observations_row_mismatch():
    """Rows of X and entries of y must agree."""
    with pytest.raises(StructuralError):
        ObservationSet(np.zeros((3, 2)), np.zeros(4))


def test_observations_too_few():
    """A single observation is rejected."""
    with pytest.raises(DomainError):
        ObservationSet([[0.0]], [1.0])


def test_observations_non_finite():
    """NaN measurements are rejected."""
    with pytest.raises(DomainError):
        ObservationSet([0.0, 1.0], [1.0, np.nan])


def test_observations_without():
    """Leaving one out drops the matching row."""
    data = ObservationSet([0.0, 1.0, 2.0], [10.0, 11.0, 12.0])
    sub = data.without(1)
    assert_array_almost_equal(sub.y, [10.0, 12.0])
    assert_array_almost_equal(sub.X[:, 0], [0.0, 2.0])


def test_layout_names():
    """Layout names follow the flat sampler ordering."""
    assert ParameterLayout(2).names == ['theta1', 'theta2', 'sigma_e2']
    assert ParameterLayout(2, True).names == ['theta1', 'theta2', 'sigma_delta2',
                                              'psi_delta', 'sigma_e2']
    assert ParameterLayout(5, True).total == 8
    assert ParameterLayout(5).positive_slots == (5,)


def test_layout_join_and_split():
    """Joined parts are split back into the same parts."""
    layout = ParameterLayout(2, has_discrepancy=True)
    v = layout.join([0.5, -1.0], (2.0, 0.3), 1e-3)
    theta, disc, noise = split_parameters(v)
    assert_array_almost_equal(theta, [0.5, -1.0])
    assert disc == (2.0, 0.3)
    assert noise == 1e-3


def test_layout_join_rejects_missing_discrepancy():
    """A discrepancy layout needs the discrepancy pair."""
    with pytest.raises(StructuralError):
        ParameterLayout(1, True).join([0.0], None, 1.0)


def test_parameter_vector_length():
    """A vector of the wrong length is rejected."""
    with pytest.raises(StructuralError):
        ParameterVector([1.0, 2.0, 3.0], ParameterLayout(1))


def test_parameter_vector_positive_variance():
    """Variance slots must be strictly positive."""
    with pytest.raises(DomainError):
        ParameterVector([1.0, 0.0], ParameterLayout(1))


def test_parameter_vector_as_array():
    """Vectors convert to numpy arrays."""
    v = ParameterVector([1.0, 2.0], ParameterLayout(1))
    assert_array_almost_equal(np.asarray(v), [1.0, 2.0])
    assert len(v) == 2


def test_split_requires_vector():
    """Plain arrays cannot be split without a layout."""
    with pytest.raises(StructuralError):
        split_parameters(np.ones(3))


def test_oscillator_initial_value():
    """At t=0 with a quarter-turn phase the displacement is the amplitude."""
    assert oscillator_code(0.0, OSCILLATOR_THETA) == pytest.approx(1.0)


def test_oscillator_closed_form():
    """The code matches the damped sine formula."""
    t = np.linspace(0, 2, 7)
    amplitude, xi, k, m, phi = OSCILLATOR_THETA
    omega = np.sqrt(k / m)
    truth = amplitude * np.exp(-xi * omega * t) * np.sin(np.sqrt(1 - xi ** 2) * omega * t
                                                         + phi)
    assert_array_almost_equal(oscillator_code(t, OSCILLATOR_THETA), truth, 12)


def test_oscillator_time_units():
    """Times given as quantities are converted to seconds."""
    t = np.array([100.0, 500.0]) * units.ms
    assert_array_almost_equal(oscillator_code(t, OSCILLATOR_THETA),
                              oscillator_code([0.1, 0.5], OSCILLATOR_THETA), 12)


def test_oscillator_overdamped():
    """Damping ratios outside the under-damped regime are rejected."""
    with pytest.raises(DomainError):
        oscillator_code(0.5, (1.0, 1.2, 6.0, 0.05, 0.0))


def test_oscillator_parameters_units():
    """United parameters are converted to SI magnitudes."""
    theta = oscillator_parameters(100 * units.cm, 0.3, 6 * units('N/m'), 50 * units.g,
                                  90 * units.degree)
    assert_array_almost_equal(theta, OSCILLATOR_THETA, 12)


def test_oscillator_code_pairs():
    """The vectorized code evaluates paired rows."""
    X = np.array([[0.0], [0.5]])
    Theta = np.array([OSCILLATOR_THETA, OSCILLATOR_THETA])
    assert_array_almost_equal(OSCILLATOR.evaluate_pairs(X, Theta),
                              OSCILLATOR.evaluate(X, OSCILLATOR_THETA), 12)


def test_simulator_scalar_evaluator():
    """A scalar evaluator is called once per row."""
    code = SimulatorCode(lambda x, theta: x[0] * theta[0] + theta[1], p=2)
    assert_array_almost_equal(code.evaluate([[1.0], [2.0]], [3.0, 1.0]), [4.0, 7.0])
    assert code([2.0], [3.0, 1.0]) == 7.0


def test_simulator_wrong_theta():
    """Parameter vectors of the wrong length are rejected."""
    code = SimulatorCode(lambda x, theta: 0.0, p=2)
    with pytest.raises(StructuralError):
        code.evaluate([[1.0]], [1.0])


def test_builtin_unknown():
    """Unknown built-in names are rejected."""
    with pytest.raises(DomainError):
        builtin_code('pendulum')


def test_external_bridge_sum():
    """The child reads x then theta on one line and prints one number."""
    assert external_code_bridge(ECHO_SUM, [1.0], [2.0, 3.5]) == pytest.approx(6.5)


def test_external_code_wrapper():
    """External commands behave as simulator codes."""
    code = external_code(ECHO_SUM, p=1)
    assert_array_almost_equal(code.evaluate([[1.0], [2.0]], [0.5]), [1.5, 2.5])


def test_external_oscillator_matches_builtin():
    """An oscillator run as a child process reproduces the built-in values."""
    code = external_code(OSCILLATOR_CHILD, p=5)
    t = np.linspace(0.0, 2.0, 7)
    expected = oscillator_code(t, OSCILLATOR_THETA)
    assert code.evaluate(t, OSCILLATOR_THETA) == pytest.approx(expected, abs=1e-12)


def test_external_bridge_failure():
    """A failing child raises with its output attached."""
    command = [sys.executable, '-c', 'import sys; print("boom"); sys.exit(3)']
    with pytest.raises(SimulatorError) as err:
        external_code_bridge(command, [0.0], [0.0])
    assert 'boom' in err.value.output


def test_external_bridge_not_a_number():
    """Non-numeric output is a simulator failure."""
    command = [sys.executable, '-c', 'print("nan")']
    with pytest.raises(SimulatorError):
        external_code_bridge(command, [0.0], [0.0])


def test_config_error_prefix():
    """Configuration errors name the file and the line."""
    assert str(ConfigError('bad', 'run.json', 4)) == 'run.json:4: bad'
    assert str(ConfigError('bad', 'run.json')) == 'run.json: bad'
    assert str(ConfigError('bad')) == 'bad'
