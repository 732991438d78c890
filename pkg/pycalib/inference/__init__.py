# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Statistical models, adaptive MCMC and calibration workflows."""

from .calibration import *  # noqa: F403
from .models import *  # noqa: F403
from .sampler import *  # noqa: F403

__all__ = calibration.__all__[:]  # noqa: F405
__all__.extend(models.__all__)  # noqa: F405
__all__.extend(sampler.__all__)  # noqa: F405
