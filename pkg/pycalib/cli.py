# Copyright (c) 2024 pycalib developers.
# Distributed under the terms of the BSD 3-Clause License.
# SPDX-License-Identifier: BSD-3-Clause

"""
Command line interface.

``pycalib calibrate|validate|forecast|design|plotdata``. The exit status is 0 on success,
2 when a configuration or input file is rejected and 1 when the computation fails.
"""

import argparse
from contextlib import contextmanager
import logging
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .calc.design import DesignOfExperiments
from .config import load_config, load_saved_run
from .errors import (CalibrationError, ConfigError, DomainError, StateError, StructuralError,
                     UnsupportedOptionError)
from .inference.calibration import calibrate, forecast, sequential_design
from .inference.models import predictive_bands
from .io import files, plotdata

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INPUT = 2

_INPUT_ERRORS = (ConfigError, StructuralError, DomainError, UnsupportedOptionError,
                 StateError, FileNotFoundError)
_RUNTIME_ERRORS = (CalibrationError, ArithmeticError, ValueError, OSError,
                   np.linalg.LinAlgError)
_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


class InputFailure(Exception):
    """An input of a command was rejected; the original error is the cause."""


@contextmanager
def reading_inputs():
    """Mark errors raised in the block as input errors."""
    try:
        yield
    except _INPUT_ERRORS as e:
        raise InputFailure(str(e)) from e


def _config(args):
    return load_config(args.config, output=args.out, seed=args.seed,
                       mh_restart_init=True if args.mh_restart_init else None)


def _calibration_inputs(args):
    config = _config(args)
    spec = config.model_spec()
    return config, spec, config.prior_set(spec.layout), config.estim_options()


def cmd_calibrate(args):
    """Calibrate the configured model and write the result directory."""
    with reading_inputs():
        config, spec, priors, opts = _calibration_inputs(args)
    result = calibrate(spec, priors, opts, workers=args.workers)
    files.save_result(config.output, result, config.to_dict())
    print(result.summary())
    log.info('results written to %s', config.output)
    return EXIT_OK


def cmd_validate(args):
    """Calibrate with leave-one-out cross-validation and print the report."""
    with reading_inputs():
        config, spec, priors, opts = _calibration_inputs(args)
        cv = config.cv_options()
        if cv is None:
            raise config.error('validation needs a "valid" block')
        n = spec.data.n
        if not 1 <= cv.n_cv <= n:
            raise config.error(f'nCV must lie between 1 and {n}, got {cv.n_cv}', 'nCV')
        if n < 3:
            raise config.error('leave-one-out needs at least three observations', 'data')
    result = calibrate(spec, priors, opts, cv=cv, workers=args.workers)
    files.save_result(config.output, result, config.to_dict())
    print(result.cv.summary())
    return EXIT_OK


def cmd_forecast(args):
    """Write calibration and forecast bands of a saved calibration."""
    with reading_inputs():
        _, result = load_saved_run(args.result)
        x_new = files.read_inputs(args.inputs, result.spec.data.d)
    bands = forecast(result, x_new)
    out = Path(args.out) if args.out is not None else Path(args.result)
    out.mkdir(parents=True, exist_ok=True)
    bands.to_csv(out / 'forecast.csv', index=False)
    print(f'Forecast bands: {out / "forecast.csv"}')
    return EXIT_OK


def cmd_design(args):
    """Enrich the emulator design by expected improvement."""
    with reading_inputs():
        config = _config(args)
        if config.kind not in ('M2', 'M4'):
            raise config.error('sequential design requires a surrogate model', 'model')
        if config.simulator_code() is None:
            raise config.error('sequential design needs a code binding to run new points',
                               'model')
        spec = config.model_spec()
        priors, opts = config.prior_set(spec.layout), config.estim_options()
        k, n_candidates = config.design_options()
        if args.k is not None:
            k = args.k
        if k < 0:
            raise config.error(f'k must be non-negative, got {k}', 'k')
    spec, trace = sequential_design(spec, priors, opts, k, n_candidates=n_candidates,
                                    seed=config.seed, workers=args.workers)
    out = config.output
    out.mkdir(parents=True, exist_ok=True)
    em = spec.emulator
    provenance = 'generated' if config.binding == 'code without DOE' else 'user-supplied'
    design = DesignOfExperiments(em.design, em.binf, em.bsup, provenance, em.n_inputs)
    files.write_design(out / 'doe.csv', design, em.outputs)
    trace.to_csv(out / 'design_trace.csv', index=False)
    files.save_emulator(out / 'emulator', em)
    print(trace.to_string(index=False))
    return EXIT_OK


def cmd_plotdata(args):
    """Export the data behind the result figures, or preview a model before calibrating."""
    with reading_inputs():
        if args.result is not None:
            _, result = load_saved_run(args.result)
            out = Path(args.out) if args.out is not None else Path(args.result)
        else:
            config = _config(args)
            spec = config.model_spec()
            preview = config.preview_params(spec.layout)
            out = config.output
    if args.result is not None:
        paths = plotdata.write_plot_data(out, result)
    else:
        out.mkdir(parents=True, exist_ok=True)
        bands = predictive_bands(spec, preview, which='all')
        paths = [out / 'out.csv']
        plotdata.output_table(bands, spec.data).to_csv(paths[0], index=False)
    for path in paths:
        print(path)
    return EXIT_OK


def build_parser():
    """Argument parser of the ``pycalib`` command."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--out', help='output directory, overrides the configuration')
    common.add_argument('--seed', type=int, help='master seed, overrides the configuration')
    common.add_argument('--workers', type=int, default=None,
                        help='maximum number of worker processes')
    common.add_argument('--mh-restart-init', action='store_true',
                        help='start the Metropolis-Hastings stage from thetaInit')
    common.add_argument('-v', '--verbose', action='count', default=0,
                        help='-v for progress, -vv for sampler detail')

    parser = argparse.ArgumentParser(
        prog='pycalib',
        description='Bayesian calibration of numerical codes against field data')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    for name, handler in (('calibrate', cmd_calibrate), ('validate', cmd_validate)):
        cmd = sub.add_parser(name, parents=[common], help=handler.__doc__)
        cmd.add_argument('--config', required=True, help='JSON run configuration')
        cmd.set_defaults(handler=handler)

    cmd = sub.add_parser('forecast', parents=[common], help=cmd_forecast.__doc__)
    cmd.add_argument('--result', required=True, help='result directory of a calibration')
    cmd.add_argument('--inputs', required=True, help='CSV of new inputs x1..xd')
    cmd.set_defaults(handler=cmd_forecast, config=None)

    cmd = sub.add_parser('design', parents=[common], help=cmd_design.__doc__)
    cmd.add_argument('--config', required=True, help='JSON run configuration')
    cmd.add_argument('--k', type=int, default=None, help='number of points to add')
    cmd.set_defaults(handler=cmd_design)

    cmd = sub.add_parser('plotdata', parents=[common], help=cmd_plotdata.__doc__)
    source = cmd.add_mutually_exclusive_group(required=True)
    source.add_argument('--result', help='result directory of a calibration')
    source.add_argument('--config', help='configuration with preview_params')
    cmd.set_defaults(handler=cmd_plotdata)
    return parser


def main(argv=None):
    """Run the command line and return the exit status."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=_LEVELS[min(args.verbose, 2)],
                        format='%(levelname)s %(name)s: %(message)s')
    if args.workers is not None and args.workers < 1:
        print('pycalib: error: --workers must be at least 1', file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.handler(args)
    except InputFailure as e:
        print(f'pycalib {args.command}: error: {e}', file=sys.stderr)
        return EXIT_INPUT
    except _RUNTIME_ERRORS as e:
        log.debug('%s failed', args.command, exc_info=True)
        print(f'pycalib {args.command}: {type(e).__name__}: {e}', file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
