# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Bayesian calibration of numerical simulators against field measurements."""

import sys

if sys.version_info < (3, 8):
    raise ImportError(
        """
        You are running a version of Python older than 3.8, which is not supported by
        pycalib.
        """)

from ._version import get_version  # noqa: E402
__version__ = get_version()
del get_version
