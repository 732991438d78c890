# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause
"""Tools for versioning."""


def get_version():
    """Get the package version.

    Use version control information for a development checkout, otherwise the installed
    distribution metadata. A bare source tree without either reports ``0+unknown``.
    """
    try:
        from setuptools_scm import get_version
        return get_version(root='..', relative_to=__file__,
                           version_scheme='post-release', local_scheme='dirty-tag')
    except (ImportError, LookupError):
        from importlib.metadata import PackageNotFoundError, version
        try:
            return version(__package__)
        except PackageNotFoundError:
            return '0+unknown'
