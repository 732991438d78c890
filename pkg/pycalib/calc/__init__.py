# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Kernels, designs of experiments, Gaussian process emulators and priors."""

from .design import *  # noqa: F403
from .emulator import *  # noqa: F403
from .kernels import *  # noqa: F403
from .linalg import *  # noqa: F403
from .priors import *  # noqa: F403

__all__ = design.__all__[:]  # noqa: F405
__all__.extend(emulator.__all__)  # noqa: F405
__all__.extend(kernels.__all__)  # noqa: F405
__all__.extend(linalg.__all__)  # noqa: F405
__all__.extend(priors.__all__)  # noqa: F405
