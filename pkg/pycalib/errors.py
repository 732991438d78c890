# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Exceptions raised by pycalib."""

import numpy as np

from .package_tools import Exporter

exporter = Exporter(globals())


@exporter.export
class CalibrationError(Exception):
    """Base class of every error raised by pycalib."""


@exporter.export
class StructuralError(CalibrationError, ValueError):
    """Shapes, lengths or layouts do not agree."""


@exporter.export
class DomainError(CalibrationError, ValueError):
    """A value lies outside the domain where an operation is defined."""


@exporter.export
class ConditioningError(CalibrationError, np.linalg.LinAlgError):
    """
    A covariance matrix could not be factorized.

    Parameters
    ----------
    message : str
        Description of the failure.
    values : array-like, optional
        Parameter vector at which the failure happened.
    """

    def __init__(self, message, values=None):
        """Store the offending parameter values next to the message."""
        if values is not None:
            values = np.asarray(values, dtype=float).copy()
            message = f'{message} (parameters: {np.array2string(values, precision=17)})'
        super().__init__(message)
        self.values = values


@exporter.export
class SimulatorError(CalibrationError, RuntimeError):
    """
    An external simulator failed.

    Parameters
    ----------
    message : str
        Description of the failure.
    output : str
        Raw standard output and standard error of the child process.
    """

    def __init__(self, message, output=''):
        """Keep the raw child output for inspection."""
        super().__init__(f'{message}\n--- child output ---\n{output}' if output else message)
        self.output = output


@exporter.export
class InitializationError(CalibrationError, RuntimeError):
    """A Markov chain cannot start because its target is not finite at the start point."""

    def __init__(self, message, chain_index=None):
        """Record which chain failed."""
        if chain_index is not None:
            message = f'chain {chain_index}: {message}'
        super().__init__(message)
        self.chain_index = chain_index


@exporter.export
class UnsupportedOptionError(CalibrationError, ValueError):
    """An option was requested that does not apply to the model at hand."""


@exporter.export
class StateError(CalibrationError, RuntimeError):
    """An object is not in a state that allows the requested operation."""


@exporter.export
class ConfigError(CalibrationError, ValueError):
    """
    A configuration or input file is invalid.

    Parameters
    ----------
    message : str
        Description of the problem.
    path : str or `pathlib.Path`, optional
        File in which the problem was found.
    line : int, optional
        One based line number of the problem inside ``path``.
    """

    def __init__(self, message, path=None, line=None):
        """Prefix the message with ``path:line:`` when known."""
        prefix = ''
        if path is not None:
            prefix = f'{path}:{line}: ' if line is not None else f'{path}: '
        super().__init__(prefix + message)
        self.path = path
        self.line = line
