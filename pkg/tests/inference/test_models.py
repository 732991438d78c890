# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Test the `models` module."""

import numpy as np
import pytest

from pycalib.calc import (covariance_matrix, fit_emulator, joint_design, KernelSpec, PriorSet,
                          PriorSpec)
from pycalib.core import ObservationSet, OSCILLATOR, oscillator_code, SimulatorCode
from pycalib.errors import StructuralError, UnsupportedOptionError
from pycalib.inference import (describe_model, log_likelihood, log_posterior, LogPosterior,
                               metropolis_within_gibbs, model_mean_cov, normalize_kind,
                               predictive_bands, StatModelSpec)
from pycalib.testing import (assert_array_almost_equal, dense_gp_conditional,
                             dense_mvn_log_density, OSCILLATOR_THETA, oscillator_start,
                             simulate_oscillator)


def linear_code():
    """Code ``F(x, theta) = theta * x`` on one input."""
    return SimulatorCode(lambda x, theta: theta[0] * x[0], p=1, name='linear')


def linear_data(n=6):
    """Noisy observations of the linear code at slope 1.2."""
    x = np.linspace(0.05, 0.95, n)
    noise = 0.01 * np.random.default_rng(0).standard_normal(n)
    return ObservationSet(x, 1.2 * x + noise)


def linear_emulator():
    """Emulator of the linear code over [0, 1] x [0, 2]."""
    design = joint_design(([0.0], [1.0]), ([0.0], [2.0]), n=15, seed=0)
    outputs = design.points[:, 0] * design.points[:, 1]
    return fit_emulator(design, outputs, lengthscales=(0.5, 0.5), nugget=1e-6)


def test_normalize_kind():
    """Both naming styles are accepted."""
    assert normalize_kind('model3') == 'M3'
    assert normalize_kind('M2') == 'M2'


def test_code_model_needs_code():
    """M1 cannot be built without a code."""
    with pytest.raises(StructuralError):
        StatModelSpec('M1', linear_data())


def test_surrogate_model_needs_emulator():
    """M2 cannot be built without an emulator."""
    with pytest.raises(StructuralError):
        StatModelSpec('M2', linear_data(), code=linear_code())


def test_discrepancy_family_without_discrepancy():
    """A discrepancy kernel on M1 is rejected."""
    with pytest.raises(UnsupportedOptionError):
        StatModelSpec('M1', linear_data(), linear_code(), discrepancy_family='gauss')


def test_layouts():
    """Layouts follow the model kind."""
    data = linear_data()
    assert StatModelSpec('M1', data, linear_code()).layout.total == 2
    assert StatModelSpec('M3', data, linear_code()).layout.total == 4
    spec = StatModelSpec('M4', data, emulator=linear_emulator())
    assert spec.layout.p == 1
    assert spec.discrepancy_family == 'gauss'


def test_m1_mean_cov():
    """M1 at the truth has the code output as mean and a diagonal covariance."""
    data = simulate_oscillator(n=20)
    spec = StatModelSpec('M1', data, OSCILLATOR)
    v = np.append(OSCILLATOR_THETA, 1e-4)
    mean, cov = model_mean_cov(spec, v)
    assert_array_almost_equal(mean, oscillator_code(data.X[:, 0], OSCILLATOR_THETA), 12)
    assert_array_almost_equal(cov, 1e-4 * np.eye(20), 15)


def test_m1_zero_residual():
    """Exact data give -(n/2) log(2 pi sigma_e^2)."""
    t = np.linspace(0, 2, 10)
    data = ObservationSet(t, oscillator_code(t, OSCILLATOR_THETA))
    spec = StatModelSpec('M1', data, OSCILLATOR)
    value = log_likelihood(spec, np.append(OSCILLATOR_THETA, 1e-3))
    assert value == pytest.approx(-5 * np.log(2 * np.pi * 1e-3))


def test_m1_matches_dense():
    """The M1 shortcut matches the general Gaussian density."""
    data = simulate_oscillator(n=15, seed=3)
    spec = StatModelSpec('M1', data, OSCILLATOR)
    v = oscillator_start()
    mean, cov = model_mean_cov(spec, v)
    assert log_likelihood(spec, v) == pytest.approx(dense_mvn_log_density(data.y, mean, cov),
                                                    abs=1e-8)


def test_m3_matches_dense():
    """M3 on three observations matches an explicit 3x3 inverse."""
    data = ObservationSet([0.1, 0.4, 0.8], [0.2, 0.5, 1.1])
    spec = StatModelSpec('M3', data, linear_code(), discrepancy_family='matern5_2')
    v = [1.1, 0.05, 0.3, 0.01]
    cov = (covariance_matrix(KernelSpec('matern5_2', 0.05, 0.3), data.X)
           + 0.01 * np.eye(3))
    expected = dense_mvn_log_density(data.y, 1.1 * data.X[:, 0], cov)
    assert log_likelihood(spec, v) == pytest.approx(expected, abs=1e-8)


def test_m3_vanishing_discrepancy():
    """M3 tends to M1 as the discrepancy variance vanishes."""
    data = linear_data()
    m1 = log_likelihood(StatModelSpec('M1', data, linear_code()), [1.2, 1e-4])
    m3 = log_likelihood(StatModelSpec('M3', data, linear_code()), [1.2, 1e-12, 0.2, 1e-4])
    assert m3 == pytest.approx(m1, rel=1e-6)


def test_m2_matches_dense():
    """M2 matches conditioning the emulator through an explicit inverse."""
    data = linear_data(4)
    emulator = linear_emulator()
    spec = StatModelSpec('M2', data, emulator=emulator)
    rows = np.column_stack([data.X, np.full(4, 1.2)])
    mean, cov = dense_gp_conditional(emulator, rows)
    expected = dense_mvn_log_density(data.y, mean, cov + 1e-4 * np.eye(4))
    assert log_likelihood(spec, [1.2, 1e-4]) == pytest.approx(expected, rel=1e-7)


@pytest.mark.slow
def test_m2_dense_design_matches_m1():
    """A 200-run emulator around the true parameters gives the M1 log likelihood."""
    data = simulate_oscillator(n=50)
    theta = np.array(OSCILLATOR_THETA)
    design = joint_design(([0.0], [2.0]), (theta * 0.999, theta * 1.001), n=200, seed=0)
    outputs = OSCILLATOR.evaluate_pairs(design.points[:, :1], design.points[:, 1:])
    emulator = fit_emulator(design, outputs, seed=0)
    v = np.append(theta, 1e-4)
    m1 = log_likelihood(StatModelSpec('M1', data, OSCILLATOR), v)
    m2 = log_likelihood(StatModelSpec('M2', data, emulator=emulator), v)
    assert abs(m2 - m1) < 0.5


def test_posterior_short_circuit():
    """Outside the prior support the code is never run."""
    calls = []

    def code(x, theta):
        calls.append(1)
        return theta[0] * x[0]

    spec = StatModelSpec('M1', linear_data(), SimulatorCode(code, p=1))
    priors = PriorSet([PriorSpec('unif', (0, 2)), PriorSpec('gamma', (1, 1))])
    assert log_posterior(spec, priors, [3.0, 0.1]) == -np.inf
    assert not calls
    assert np.isfinite(log_posterior(spec, priors, [1.0, 0.1]))
    assert calls


def test_posterior_flat_priors():
    """With flat priors posterior differences equal likelihood differences."""
    spec = StatModelSpec('M1', linear_data(), linear_code())
    priors = PriorSet([PriorSpec('unif', (-10, 10)), PriorSpec('unif', (1e-6, 1))])
    a, b = [1.0, 0.01], [1.3, 0.02]
    assert (log_posterior(spec, priors, a) - log_posterior(spec, priors, b)
            == pytest.approx(log_likelihood(spec, a) - log_likelihood(spec, b)))


def test_posterior_prior_layout_mismatch():
    """Priors must cover every slot."""
    spec = StatModelSpec('M1', linear_data(), linear_code())
    with pytest.raises(StructuralError):
        log_posterior(spec, PriorSet([PriorSpec('unif', (0, 1))]), [0.5])


def wide_damping_priors():
    """Oscillator priors with a unit variance normal on the damping ratio."""
    return PriorSet([PriorSpec('gaussian', (1.0, 1e-3)), PriorSpec('gaussian', (0.3, 1.0)),
                     PriorSpec('gaussian', (6.0, 1e-3)), PriorSpec('gaussian', (0.05, 1e-5)),
                     PriorSpec('gaussian', (np.pi / 2, 1e-2)),
                     PriorSpec('gamma', (1.0, 1e-3))])


def test_posterior_outside_code_domain():
    """Parameters the simulator refuses have zero posterior density."""
    spec = StatModelSpec('M1', simulate_oscillator(n=20), OSCILLATOR)
    priors = wide_damping_priors()
    assert log_posterior(spec, priors, [1.0, 1.2, 6.0, 0.05, np.pi / 2, 1e-3]) == -np.inf
    assert log_posterior(spec, priors, [1.0, 0.3, 6.0, -0.05, np.pi / 2, 1e-3]) == -np.inf
    assert np.isfinite(log_posterior(spec, priors, oscillator_start()))


def test_chain_crosses_code_domain():
    """Proposals past |xi| = 1 are rejected without stopping the chain."""
    target = LogPosterior(StatModelSpec('M1', simulate_oscillator(n=20), OSCILLATOR),
                          wide_damping_priors())
    sig = np.diag([1e-6, 1.0, 1e-4, 1e-8, 1e-4, 1e-9])
    samples, log_post, rates, _ = metropolis_within_gibbs(target, oscillator_start(), sig,
                                                          200, 0.05,
                                                          np.random.default_rng(0))
    assert np.all(np.abs(samples[:, 1]) < 1)
    assert np.all(np.isfinite(log_post))
    assert rates[1] < 1


def test_m1_band_width():
    """M1 bands have a constant half width of 1.96 sigma_e."""
    spec = StatModelSpec('M1', linear_data(), linear_code())
    bands = predictive_bands(spec, [1.2, 4e-4])
    assert (bands['band_kind'] == 'err').all()
    assert_array_almost_equal(bands['hi'] - bands['mean'], np.full(6, 1.959964 * 0.02), 6)


def test_m1_no_gp_band():
    """Code based models have no GP band."""
    spec = StatModelSpec('M1', linear_data(), linear_code())
    with pytest.raises(UnsupportedOptionError):
        predictive_bands(spec, [1.2, 4e-4], which='GP')


def test_m4_bands_nested():
    """The GP band lies inside the combined band."""
    spec = StatModelSpec('M4', linear_data(), emulator=linear_emulator())
    bands = predictive_bands(spec, [1.2, 1e-3, 0.3, 1e-4], which='all')
    assert set(bands['band_kind']) == {'err', 'GP', 'combined'}
    gp = bands[bands['band_kind'] == 'GP'].reset_index(drop=True)
    combined = bands[bands['band_kind'] == 'combined'].reset_index(drop=True)
    assert (combined['lo'] <= gp['lo']).all()
    assert (combined['hi'] >= gp['hi']).all()


def test_err_band_coverage():
    """About 95% of noisy replicates fall inside the err band."""
    spec = StatModelSpec('M1', linear_data(), linear_code())
    bands = predictive_bands(spec, [1.2, 1e-2])
    rng = np.random.default_rng(42)
    replicates = bands['mean'].to_numpy() + 0.1 * rng.standard_normal((2000, 6))
    inside = (replicates >= bands['lo'].to_numpy()) & (replicates <= bands['hi'].to_numpy())
    assert inside.mean() == pytest.approx(0.95, abs=0.01)


def test_bands_at_new_inputs():
    """Bands can be evaluated away from the observations."""
    spec = StatModelSpec('M1', linear_data(), linear_code())
    bands = predictive_bands(spec, [1.0, 1e-2], X=[[2.0], [3.0]])
    assert_array_almost_equal(bands['mean'], [2.0, 3.0])
    assert list(bands.columns) == ['x1', 'mean', 'lo', 'hi', 'band_kind']


def test_describe_model():
    """The description names the model and the code."""
    text = describe_model(StatModelSpec('M3', linear_data(), linear_code()))
    assert 'model3' in text
    assert 'linear' in text
    assert 'sigma_delta2' in text
