# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Read and write the files exchanged by pycalib runs."""

from .files import *  # noqa: F403
from .plotdata import *  # noqa: F403

__all__ = files.__all__[:]  # noqa: F405
__all__.extend(plotdata.__all__)  # noqa: F405
