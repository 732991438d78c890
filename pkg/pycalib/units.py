# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""
Module to provide unit support.

This makes use of the :mod:`pint` library. Simulator inputs and calibration parameters
are plain floats inside the samplers; quantities are accepted at the edges (building a
parameter vector, evaluating the built-in oscillator) and converted to SI magnitudes.

Attributes
----------
units : :class:`pint.UnitRegistry`
    The unit registry used throughout the package.
"""
import logging
import warnings

import pint

log = logging.getLogger(__name__)

UndefinedUnitError = pint.UndefinedUnitError
DimensionalityError = pint.DimensionalityError

units = pint.UnitRegistry(autoconvert_offset_to_baseunit=True)

# Capture the NEP 18 warning raised on first creation by some pint versions
with warnings.catch_warnings():
    warnings.simplefilter('ignore')
    units.Quantity([])

if hasattr(pint, 'UnitStrippedWarning'):
    warnings.simplefilter('ignore', category=pint.UnitStrippedWarning)


def magnitude(value, unit):
    """
    Return the magnitude of ``value`` expressed in ``unit``.

    Plain numbers and arrays are assumed to already be expressed in ``unit``.

    Parameters
    ----------
    value : `pint.Quantity` or array-like
        Value to convert.
    unit : str
        Target unit.

    Returns
    -------
    magnitude : float or `numpy.ndarray`
    """
    if hasattr(value, 'units'):
        return value.to(unit).magnitude
    return value


del pint
