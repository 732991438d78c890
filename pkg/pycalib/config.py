# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""
Run configuration files.

A run is described by one JSON document whose keys follow the option names of the
calibration workflow (``model``, ``prior``, ``estim``, ``valid`` ...). Relative paths are
read relative to the configuration file, the way ``read`` commands of an r-file are.
"""

from contextlib import contextmanager
from dataclasses import dataclass, field, replace
import json
import logging
from pathlib import Path
import re

import numpy as np

from .calc.design import joint_design
from .calc.emulator import fit_emulator
from .calc.priors import PriorSet
from .core import builtin_code, external_code, ParameterVector
from .errors import ConfigError, DomainError, StructuralError, UnsupportedOptionError
from .inference.calibration import CVOptions
from .inference.models import normalize_kind, StatModelSpec
from .inference.sampler import EstimOptions
from .io import files
from .package_tools import Exporter

exporter = Exporter(globals())

log = logging.getLogger(__name__)

with exporter:
    CONFIG_KEYS = ('model', 'data', 'code', 'emulator', 'discrepancy', 'prior', 'estim',
                   'valid', 'design', 'preview_params', 'output', 'seed', 'mh_restart_init')

_BLOCK_KEYS = {'code': ('builtin', 'command', 'p', 'timeout'),
               'emulator': ('kernel', 'doe', 'n_emul', 'binf', 'bsup', 'x_bounds',
                            'restarts'),
               'discrepancy': ('kernel',),
               'valid': ('type', 'nCV', 'seed'),
               'design': ('k', 'candidates')}

# spawn_key prefix of the streams used while building a run; chains use one-element keys
_RUN_STREAM = 0xE0


def _key_line(text, key):
    match = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    if match is None:
        return None
    return text.count('\n', 0, match.start()) + 1


@exporter.export
@dataclass(frozen=True)
class RunConfig:
    """
    A parsed configuration file.

    Build instances with `load_config`.

    Attributes
    ----------
    path : `pathlib.Path`
        Configuration file.
    entries : dict
        Decoded document.
    text : str
        Raw document, used to point error messages at the offending line.
    """

    path: Path
    entries: dict = field(repr=False)
    text: str = field(default='', repr=False)

    def error(self, message, key=None):
        """`ConfigError` located at the line of ``key``."""
        line = _key_line(self.text, key) if key is not None else None
        return ConfigError(message, self.path, line)

    @contextmanager
    def block(self, key):
        """Report validation errors raised inside the block at the line of ``key``."""
        try:
            yield
        except (StructuralError, DomainError, UnsupportedOptionError) as e:
            raise self.error(str(e), key) from e

    def resolve(self, value):
        """Path relative to the configuration file."""
        path = Path(value)
        return path if path.is_absolute() else self.path.parent / path

    def _section(self, key):
        value = self.entries.get(key)
        if value is None:
            return {}
        if not isinstance(value, dict):
            raise self.error(f'"{key}" must be an object', key)
        return value

    def _stream(self, index):
        return np.random.default_rng(np.random.SeedSequence(
            entropy=self.seed, spawn_key=(_RUN_STREAM, index)))

    @property
    def kind(self):
        """Model kind, ``M1``..``M4``."""
        with self.block('model'):
            return normalize_kind(self.entries['model'])

    @property
    def seed(self):
        """Master seed."""
        return int(self.entries.get('seed', self._section('estim').get('seed', 0)))

    @property
    def output(self):
        """Result directory."""
        return self.resolve(self.entries.get('output', 'results'))

    def observations(self):
        """Field data named by ``data``."""
        if 'data' not in self.entries:
            raise self.error('missing "data" entry')
        return files.read_observations(self.resolve(self.entries['data']))

    def simulator_code(self):
        """The code binding, or None when the configuration has none."""
        block = self.entries.get('code')
        if block is None:
            return None
        if not isinstance(block, dict):
            raise self.error('"code" must be an object or null', 'code')
        with self.block('code'):
            if 'builtin' in block:
                return builtin_code(block['builtin'])
            if 'command' in block:
                if 'p' not in block:
                    raise self.error('an external code needs "p", its parameter count',
                                     'command')
                return external_code(block['command'], int(block['p']),
                                     float(block.get('timeout', 60.0)))
        raise self.error('"code" needs either "builtin" or "command"', 'code')

    @property
    def binding(self):
        """Which of the three code bindings the configuration uses."""
        has_code = self.entries.get('code') is not None
        has_doe = self._section('emulator').get('doe') is not None
        if has_code:
            return 'code with DOE' if has_doe else 'code without DOE'
        return 'no code'

    def emulator_model(self, data, code=None):
        """
        Fit the emulator described by the ``emulator`` block.

        With a design file the runs are read from it; missing outputs are computed with
        the code. Without one a joint maximin design of ``n_emul`` points is generated over
        ``x_bounds`` (the data range by default) and ``binf``/``bsup``.
        """
        block = self._section('emulator')
        d = data.d
        with self.block('emulator'):
            if block.get('doe') is not None:
                design, outputs = files.read_design(self.resolve(block['doe']))
                if design.n_inputs is None:
                    design = replace(design, n_inputs=d)
                if design.n_inputs != d:
                    raise self.error(f'design has {design.n_inputs} input columns, the data '
                                     f'has {d}', 'doe')
                if outputs is None:
                    if code is None:
                        raise self.error('design has no y column and there is no code to '
                                         'run', 'doe')
                    outputs = code.evaluate_pairs(design.points[:, :d], design.points[:, d:])
            else:
                if code is None:
                    raise self.error('an emulator needs a code or a design with outputs',
                                     'emulator')
                if 'binf' not in block or 'bsup' not in block:
                    raise self.error('generating a design needs "binf" and "bsup"',
                                     'emulator')
                x_bounds = block.get('x_bounds')
                if x_bounds is None:
                    x_bounds = (data.X.min(axis=0), data.X.max(axis=0))
                design = joint_design(x_bounds, (block['binf'], block['bsup']),
                                      n=block.get('n_emul'), seed=self._stream(0))
                log.info('generated a %d point design for the emulator', design.shape[0])
                outputs = code.evaluate_pairs(design.points[:, :d], design.points[:, d:])
            model = fit_emulator(design, outputs, family=block.get('kernel', 'matern5_2'),
                                 restarts=int(block.get('restarts', 5)),
                                 seed=self._stream(1))
        return model

    def model_spec(self, emulator=None):
        """
        Bind the model to its data, code and emulator.

        Parameters
        ----------
        emulator : `EmulatorModel`, optional
            Use this emulator instead of fitting one.
        """
        kind = self.kind
        data = self.observations()
        code = self.simulator_code()
        uses_emulator = kind in ('M2', 'M4')
        if not uses_emulator:
            if code is None:
                raise self.error(f'{kind} runs the code directly and needs a "code" entry',
                                 'model')
            if self._section('emulator'):
                raise self.error(f'{kind} uses no emulator', 'emulator')
        elif emulator is None:
            emulator = self.emulator_model(data, code)
        disc = self._section('discrepancy').get('kernel')
        with self.block('discrepancy' if disc is not None else 'model'):
            return StatModelSpec(kind, data, code, emulator, disc)

    def prior_set(self, layout):
        """Priors of the ``prior`` list checked against ``layout``."""
        entries = self.entries.get('prior')
        if not isinstance(entries, list):
            raise self.error('"prior" must be a list of {"type", "opt"} entries',
                             'prior' if 'prior' in self.entries else None)
        if len(entries) < layout.total:
            raise self.error(f'missing prior for {layout.names[len(entries)]}: '
                             f'{len(entries)} priors for the slots {layout.names}', 'prior')
        if len(entries) > layout.total:
            raise self.error(f'{len(entries)} priors for the {layout.total} slots '
                             f'{layout.names}', 'prior')
        with self.block('prior'):
            return PriorSet.from_config(entries, layout)

    def estim_options(self):
        """Sampler settings; the master seed and the restart flag come from the top level."""
        if 'estim' not in self.entries:
            raise self.error('missing "estim" entry')
        overrides = {'seed': self.seed}
        if 'mh_restart_init' in self.entries:
            overrides['mh_restart_init'] = bool(self.entries['mh_restart_init'])
        entry = self._section('estim')
        with self.block('estim'):
            try:
                return EstimOptions.from_config(entry, **overrides)
            except ConfigError as e:
                raise self.error(e.args[0], 'estim') from e

    def cv_options(self):
        """Cross-validation settings, None without a ``valid`` block."""
        block = self._section('valid')
        if not block:
            return None
        if 'nCV' not in block:
            raise self.error('"valid" needs "nCV"', 'valid')
        with self.block('valid'):
            return CVOptions(int(block['nCV']), block.get('type', 'loo'), block.get('seed'))

    def design_options(self):
        """``(k, n_candidates)`` of the ``design`` block."""
        block = self._section('design')
        return int(block.get('k', 5)), int(block.get('candidates', 500))

    def preview_params(self, layout):
        """Parameter vector of the ``preview_params`` entry."""
        if self.entries.get('preview_params') is None:
            raise self.error('previewing a model needs "preview_params"')
        with self.block('preview_params'):
            return ParameterVector(self.entries['preview_params'], layout)

    def to_dict(self):
        """Document with resolved paths, written next to the results."""
        out = {k: v for k, v in self.entries.items() if k != 'output'}
        out['seed'] = self.seed
        if 'data' in out:
            out['data'] = str(self.resolve(out['data']).resolve())
        emulator = self._section('emulator')
        if emulator.get('doe') is not None:
            out['emulator'] = dict(emulator, doe=str(self.resolve(emulator['doe']).resolve()))
        return out


@exporter.export
def load_config(path, output=None, seed=None, mh_restart_init=None):
    """
    Read and check a configuration file.

    Parameters
    ----------
    path : str or `pathlib.Path`
        JSON configuration.
    output : str or `pathlib.Path`, optional
        Overrides the ``output`` entry.
    seed : int, optional
        Overrides the master seed.
    mh_restart_init : bool, optional
        Overrides the stage-two starting point flag.

    Returns
    -------
    config : `RunConfig`
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError('configuration file not found', path)
    text = path.read_text(encoding='utf-8')
    try:
        entries = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f'invalid JSON: {e.msg}', path, e.lineno) from None
    if not isinstance(entries, dict):
        raise ConfigError('configuration must be a JSON object', path, 1)
    if output is not None:
        entries['output'] = str(Path(output).resolve())
    if seed is not None:
        entries['seed'] = int(seed)
    if mh_restart_init is not None:
        entries['mh_restart_init'] = bool(mh_restart_init)
    config = RunConfig(path, entries, text)

    for key in entries:
        if key not in CONFIG_KEYS:
            raise config.error(f'unknown configuration entry "{key}"', key)
    for key, allowed in _BLOCK_KEYS.items():
        block = config._section(key)
        for sub in block:
            if sub not in allowed:
                raise config.error(f'unknown option "{sub}" in "{key}"', sub)
    if 'model' not in entries:
        raise config.error('missing "model" entry')
    kind = config.kind
    if config.seed < 0:
        raise config.error(f'seed must be non-negative, got {config.seed}', 'seed')
    log.debug('loaded %s: %s, %s', path, kind, config.binding)
    return config


@exporter.export
def load_saved_run(directory):
    """
    Rebuild the calibration stored in a result directory.

    The model is rebuilt from the saved ``config.json`` with the saved emulator, the
    sampler settings from the manifest.

    Returns
    -------
    config : `RunConfig`
    result : `CalibrationResult`
    """
    directory = Path(directory)
    config = load_config(directory / 'config.json', output=directory)
    emulator = None
    if config.kind in ('M2', 'M4'):
        emulator = files.load_emulator(directory / 'emulator')
    spec = config.model_spec(emulator=emulator)
    manifest = files.read_manifest(directory)
    opts = EstimOptions.from_config(manifest['estim'])
    priors = config.prior_set(spec.layout)
    return config, files.load_result(directory, spec, priors, opts)
