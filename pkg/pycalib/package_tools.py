# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""Public namespace bookkeeping for the pycalib sub-packages."""

__all__ = ('Exporter',)


class Exporter:
    """
    Record the public names of a pycalib module.

    Each pycalib module creates one instance over its ``globals()``. Decorating a
    function or class with :meth:`export` appends it to the module's ``__all__``, which
    `pycalib.calc`, `pycalib.inference` and `pycalib.io` concatenate into their own.
    Module level constants such as `MODEL_KINDS` or `NUGGET_LADDER` are published by
    defining them inside a ``with exporter:`` block.
    """

    def __init__(self, globls):
        """Attach to the namespace of a module."""
        self.globls = globls
        self.exports = globls.setdefault('__all__', [])

    def export(self, defn):
        """Add a function or class to ``__all__`` and return it unchanged."""
        self.exports.append(defn.__name__)
        return defn

    def __enter__(self):
        """Snapshot the current global names."""
        self.start_vars = set(self.globls)

    def __exit__(self, exc_type, exc_val, exc_tb):
        """Export every global created since :meth:`__enter__`."""
        self.exports.extend(sorted(set(self.globls) - self.start_vars))
        del self.start_vars
