# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Data model, parameter layout and simulator abstraction shared by the package."""

from dataclasses import dataclass, field
import logging
import shlex
import subprocess
from typing import Callable, Tuple, Union

import numpy as np

from .errors import DomainError, SimulatorError, StructuralError
from .package_tools import Exporter
from .units import magnitude

exporter = Exporter(globals())

log = logging.getLogger(__name__)


def _frozen_array(values, ndim):
    """Copy ``values`` to a read-only float array of the requested dimensionality."""
    arr = np.array(values, dtype=float)
    if ndim == 2 and arr.ndim == 1:
        arr = arr[:, np.newaxis]
    arr.flags.writeable = False
    return arr


@exporter.export
@dataclass(frozen=True, eq=False)
class ObservationSet:
    """
    Field measurements paired with the input variables at which they were taken.

    Parameters
    ----------
    X : array-like
        Input variables, ``n`` rows by ``d`` columns. A one dimensional array is read as a
        single input column.
    y : array-like
        The ``n`` measured outputs; ``y[i]`` pairs with row ``i`` of ``X``.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        """Validate and freeze the arrays."""
        X = _frozen_array(self.X, 2)
        y = _frozen_array(self.y, 1)
        if X.ndim != 2 or y.ndim != 1:
            raise StructuralError('X must be a matrix and y a vector')
        if X.shape[0] != y.shape[0]:
            raise StructuralError(f'X has {X.shape[0]} rows but y has {y.shape[0]} entries')
        if y.shape[0] < 2:
            raise DomainError('at least two observations are required')
        if X.shape[1] < 1:
            raise DomainError('at least one input variable is required')
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DomainError('observations contain non-finite values')
        object.__setattr__(self, 'X', X)
        object.__setattr__(self, 'y', y)

    @property
    def n(self):
        """Number of observations."""
        return self.y.shape[0]

    @property
    def d(self):
        """Number of input variables."""
        return self.X.shape[1]

    def without(self, index):
        """Return a copy with observation ``index`` left out."""
        keep = np.arange(self.n) != index
        return ObservationSet(self.X[keep], self.y[keep])


@exporter.export
@dataclass(frozen=True)
class SimulatorCode:
    """
    A deterministic numerical code mapping ``(x, theta)`` to a scalar output.

    Parameters
    ----------
    evaluator : callable
        ``evaluator(x, theta)``. With ``vectorized=False`` it receives one ``d`` vector
        and one ``p`` vector and returns a scalar. With ``vectorized=True`` it receives an
        ``(m, d)`` matrix and either a ``p`` vector or an ``(m, p)`` matrix and returns
        ``m`` outputs.
    p : int
        Number of calibration parameters.
    vectorized : bool
        Whether ``evaluator`` handles whole matrices at once.
    name : str
        Human readable description used in summaries.

    Notes
    -----
    Evaluators must be safe to call from several workers at once.
    """

    evaluator: Callable
    p: int
    vectorized: bool = False
    name: str = 'user code'

    def __post_init__(self):
        """Check the parameter count."""
        if int(self.p) < 1:
            raise DomainError('a simulator needs at least one calibration parameter')

    def __call__(self, x, theta):
        """Evaluate the code at a single input vector."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.vectorized:
            return float(self.evaluator(x[np.newaxis, :], np.asarray(theta, dtype=float))[0])
        return float(self.evaluator(x, np.asarray(theta, dtype=float)))

    def evaluate(self, X, theta):
        """
        Evaluate the code at every row of ``X`` with a common parameter vector.

        Parameters
        ----------
        X : array-like
            ``(m, d)`` inputs.
        theta : array-like
            ``p`` parameters.

        Returns
        -------
        outputs : `numpy.ndarray`
            ``m`` code outputs.
        """
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, np.newaxis]
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.p,):
            raise StructuralError(f'expected {self.p} parameters, got shape {theta.shape}')
        if self.vectorized:
            return np.asarray(self.evaluator(X, theta), dtype=float).reshape(X.shape[0])
        return np.array([self.evaluator(row, theta) for row in X], dtype=float)

    def evaluate_pairs(self, X, Theta):
        """Evaluate the code at paired rows ``(X[i], Theta[i])``."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, np.newaxis]
        Theta = np.atleast_2d(np.asarray(Theta, dtype=float))
        if Theta.shape != (X.shape[0], self.p):
            raise StructuralError(f'expected a ({X.shape[0]}, {self.p}) parameter matrix, '
                                  f'got shape {Theta.shape}')
        if self.vectorized:
            return np.asarray(self.evaluator(X, Theta), dtype=float).reshape(X.shape[0])
        return np.array([self.evaluator(x, t) for x, t in zip(X, Theta)], dtype=float)


@exporter.export
@dataclass(frozen=True)
class ParameterLayout:
    """
    Ordering of the flat sampler state.

    The order is ``[theta_1..theta_p, sigma_delta^2, psi_delta, sigma_e^2]`` where the
    discrepancy pair is present only when ``has_discrepancy`` is set.
    """

    p: int
    has_discrepancy: bool = False

    def __post_init__(self):
        """Check the parameter count."""
        if int(self.p) < 1:
            raise DomainError('a layout needs at least one physical parameter')

    @property
    def total(self):
        """Length of a flattened parameter vector."""
        return self.p + (3 if self.has_discrepancy else 1)

    @property
    def names(self):
        """Column names used in exported tables."""
        names = [f'theta{i + 1}' for i in range(self.p)]
        if self.has_discrepancy:
            names += ['sigma_delta2', 'psi_delta']
        return names + ['sigma_e2']

    @property
    def positive_slots(self):
        """Indices of the strictly positive variance components."""
        if self.has_discrepancy:
            return (self.p, self.p + 1, self.p + 2)
        return (self.p,)

    def vector(self, values):
        """Wrap ``values`` into a validated `ParameterVector`."""
        return ParameterVector(values, self)

    def join(self, theta, disc=None, noise_var=None):
        """Concatenate parts in layout order into a `ParameterVector`."""
        parts = [np.atleast_1d(np.asarray(theta, dtype=float))]
        if self.has_discrepancy:
            if disc is None:
                raise StructuralError('this layout needs the discrepancy pair')
            parts.append(np.asarray(disc, dtype=float).reshape(2))
        elif disc is not None:
            raise StructuralError('this layout has no discrepancy slots')
        parts.append(np.atleast_1d(np.asarray(noise_var, dtype=float)))
        return ParameterVector(np.concatenate(parts), self)


@exporter.export
@dataclass(frozen=True, eq=False)
class ParameterVector:
    """A flat parameter vector together with the layout that gives it meaning."""

    values: np.ndarray
    layout: ParameterLayout = field(compare=False)

    def __post_init__(self):
        """Validate length and positivity against the layout."""
        values = _frozen_array(self.values, 1)
        if values.ndim != 1 or values.shape[0] != self.layout.total:
            raise StructuralError(f'parameter vector has {values.size} entries, layout '
                                  f'expects {self.layout.total}')
        positive = values[list(self.layout.positive_slots)]
        if not np.all(positive > 0):
            raise DomainError('variance components must be strictly positive, got '
                              f'{positive.tolist()}')
        object.__setattr__(self, 'values', values)

    def __len__(self):
        """Return the layout length."""
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        """Expose the values to numpy."""
        return np.asarray(self.values, dtype=dtype)


@exporter.export
def split_parameters(v):
    """
    Split a parameter vector into its physical, discrepancy and noise parts.

    Parameters
    ----------
    v : `ParameterVector`
        Vector to split.

    Returns
    -------
    theta : `numpy.ndarray`
        The ``p`` physical parameters.
    disc : tuple of float or None
        ``(sigma_delta^2, psi_delta)`` when the layout has a discrepancy term.
    noise_var : float
        Measurement error variance ``sigma_e^2``.
    """
    if not isinstance(v, ParameterVector):
        raise StructuralError('split_parameters needs a ParameterVector')
    layout = v.layout
    theta = v.values[:layout.p]
    disc = None
    if layout.has_discrepancy:
        disc = (float(v.values[layout.p]), float(v.values[layout.p + 1]))
    return theta, disc, float(v.values[-1])


@exporter.export
def oscillator_code(t, theta):
    r"""
    Displacement of a damped harmonic oscillator.

    Parameters
    ----------
    t : float, array-like or `pint.Quantity`
        Time; plain numbers are read as seconds.
    theta : array-like
        ``(A, xi, k, m, phi)`` in SI units, or an ``(m, 5)`` matrix of such rows
        broadcast against ``t``.

    Returns
    -------
    displacement : float or `numpy.ndarray`

    Notes
    -----
    .. math:: x(t) = A e^{-\xi\omega_0 t}\sin(\sqrt{1-\xi^2}\,\omega_0 t + \phi),
              \qquad \omega_0 = \sqrt{k/m}

    Only the under-damped regime ``|xi| < 1`` is supported.
    """
    t = np.asarray(magnitude(t, 's'), dtype=float)
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != 5:
        raise StructuralError(f'the oscillator has 5 parameters, got {theta.shape[-1]}')
    amplitude, xi, k, m, phi = np.moveaxis(theta, -1, 0)
    if np.any(m <= 0) or np.any(k <= 0):
        raise DomainError('mass and spring constant must be positive')
    if np.any(np.abs(xi) >= 1):
        raise DomainError('the damping ratio must satisfy |xi| < 1')
    omega0 = np.sqrt(k / m)
    omega_d = np.sqrt(1 - xi ** 2) * omega0
    out = amplitude * np.exp(-xi * omega0 * t) * np.sin(omega_d * t + phi)
    if np.ndim(out) == 0:
        return float(out)
    return out


@exporter.export
def oscillator_parameters(amplitude, damping, stiffness, mass, phase):
    """
    Build an oscillator parameter vector from (possibly united) values.

    Parameters
    ----------
    amplitude : float or `pint.Quantity`
        Amplitude in metres.
    damping : float
        Damping ratio.
    stiffness : float or `pint.Quantity`
        Spring constant, N/m when given as a plain number.
    mass : float or `pint.Quantity`
        Mass, kg when given as a plain number.
    phase : float or `pint.Quantity`
        Phase, radians when given as a plain number.

    Returns
    -------
    theta : `numpy.ndarray`
        ``(A, xi, k, m, phi)`` in SI magnitudes.
    """
    return np.array([magnitude(amplitude, 'm'), magnitude(damping, 'dimensionless'),
                     magnitude(stiffness, 'N/m'), magnitude(mass, 'kg'),
                     magnitude(phase, 'radian')], dtype=float)


def _oscillator_rows(X, theta):
    return oscillator_code(X[:, 0], theta)


with exporter:
    OSCILLATOR = SimulatorCode(_oscillator_rows, p=5, vectorized=True,
                               name='damped harmonic oscillator x(t; A, xi, k, m, phi)')


def _command_args(command):
    if isinstance(command, str):
        try:
            args = shlex.split(command)
        except ValueError as e:
            raise StructuralError(f'malformed command template {command!r}: {e}') from e
    else:
        args = [str(a) for a in command]
    if not args:
        raise StructuralError('empty command template')
    return args


@exporter.export
def external_code_bridge(command, x, theta, timeout=60.0):
    """
    Evaluate an external simulator through a line oriented subprocess protocol.

    The child receives one line ``x_1 ... x_d theta_1 ... theta_p`` on standard input and
    must print a single finite number on standard output.

    Parameters
    ----------
    command : str or sequence of str
        Command template, split with shell rules when given as a string.
    x : array-like
        Input vector.
    theta : array-like
        Parameter vector.
    timeout : float
        Seconds to wait for the child.

    Returns
    -------
    output : float
    """
    args = _command_args(command)
    values = np.concatenate([np.atleast_1d(np.asarray(x, dtype=float)),
                             np.atleast_1d(np.asarray(theta, dtype=float))])
    line = ' '.join(repr(float(v)) for v in values) + '\n'
    try:
        proc = subprocess.run(args, input=line, capture_output=True, text=True,
                              timeout=timeout, check=False)
    except subprocess.TimeoutExpired as e:
        raw = (e.stdout or '') if isinstance(e.stdout, str) else ''
        raise SimulatorError(f'{args[0]} timed out after {timeout} s', raw) from e
    except OSError as e:
        raise SimulatorError(f'could not start {args[0]}: {e}') from e
    raw = proc.stdout + proc.stderr
    if proc.returncode != 0:
        raise SimulatorError(f'{args[0]} exited with status {proc.returncode}', raw)
    try:
        value = float(proc.stdout.strip())
    except ValueError:
        raise SimulatorError(f'{args[0]} did not print a single number', raw) from None
    if not np.isfinite(value):
        raise SimulatorError(f'{args[0]} printed a non-finite value', raw)
    log.debug('external code %s(%s) -> %r', args[0], line.strip(), value)
    return value


@exporter.export
@dataclass(frozen=True)
class ExternalCode:
    """Picklable evaluator calling `external_code_bridge` with a fixed command."""

    command: Union[str, Tuple[str, ...]]
    timeout: float = 60.0

    def __call__(self, x, theta):
        """Run the child once."""
        return external_code_bridge(self.command, x, theta, timeout=self.timeout)


@exporter.export
def external_code(command, p, timeout=60.0):
    """
    Wrap an external command as a `SimulatorCode`.

    Parameters
    ----------
    command : str or sequence of str
        Command template.
    p : int
        Number of calibration parameters the child expects.
    timeout : float
        Seconds to wait for each evaluation.

    Returns
    -------
    code : `SimulatorCode`
    """
    if not isinstance(command, str):
        command = tuple(command)
    _command_args(command)
    return SimulatorCode(ExternalCode(command, timeout), p=p,
                         name=f'external command {command!r}')


@exporter.export
def builtin_code(name):
    """Look up a built-in simulator by name."""
    codes = {'oscillator': OSCILLATOR}
    try:
        return codes[name]
    except KeyError:
        raise DomainError(f'unknown built-in code {name!r}; available: '
                          f'{sorted(codes)}') from None
