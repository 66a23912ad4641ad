"""
Command line entry point: ``fddmimo <experiment> [options]``.

Each subcommand runs one experiment family and writes ``<out>/<name>.csv``
plus a ``<name>.json`` sidecar. Flags override keys of ``--config``.
Failures print one JSON object on stderr and exit nonzero.
"""

import argparse
import json
import logging
import sys

from .. import __version__
from .config import (PARAMETER_MODES, PRECODERS, SCHEMA_VERSION, ConfigError,
                     ExperimentConfig, load_config)
from .experiments import EXPERIMENTS
from .records import write_records

EXIT_CONFIG = 2
EXIT_RUNTIME = 1


def _parser():
    p = argparse.ArgumentParser(prog='fddmimo', description=__doc__.strip().splitlines()[0])
    p.add_argument('--version', action='version',
                   version=f'fddmimo {__version__} (config schema {SCHEMA_VERSION})')
    sub = p.add_subparsers(dest='experiment', metavar='EXPERIMENT')
    sub.required = True
    for name, fn in EXPERIMENTS.items():
        sp = sub.add_parser(name, help=fn.__doc__.strip().splitlines()[0])
        sp.add_argument('--config', help='JSON config file')
        sp.add_argument('--out', default='results', help='output directory')
        sp.add_argument('--seed', type=int)
        sp.add_argument('--trials', type=int)
        sp.add_argument('--workers', type=int)
        sp.add_argument('--N', type=int, dest='N')
        sp.add_argument('--N-sweep', type=int, nargs='+', dest='N_sweep')
        sp.add_argument('--K', type=int, dest='K')
        sp.add_argument('--L', type=int, dest='L')
        sp.add_argument('--L-sweep', type=int, nargs='+', dest='L_sweep')
        sp.add_argument('--delta-L-sweep', type=int, nargs='+', dest='delta_L_sweep')
        sp.add_argument('--kappas', type=float, nargs='+')
        sp.add_argument('--f-ul-hz', type=float, dest='f_ul_hz')
        sp.add_argument('--f-dl-hz', type=float, dest='f_dl_hz')
        sp.add_argument('--edge-snr-db', type=float, nargs='+', dest='edge_snr_db')
        sp.add_argument('--noise-db', type=float, dest='noise_db')
        sp.add_argument('--estimator-kind', choices=['MMSE', 'L-MMSE'],
                        dest='estimator_kind')
        sp.add_argument('--parameter-mode', choices=PARAMETER_MODES,
                        dest='parameter_mode')
        sp.add_argument('--pilot-snr-db', type=float, dest='pilot_snr_db')
        sp.add_argument('--precoders', nargs='+', choices=PRECODERS)
        sp.add_argument('--epsilon', type=float)
        sp.add_argument('--epsilons', type=float, nargs='+')
        sp.add_argument('--convergence-N', type=int, nargs='+', dest='convergence_N')
        sp.add_argument('--no-certify', action='store_false', dest='certify',
                        default=None, help='skip second-order certification')
        sp.add_argument('--phase-model', dest='phase_model')
        sp.add_argument('-v', '--verbose', action='store_true')
    return p


_NON_CONFIG = {'experiment', 'config', 'out', 'verbose'}


def _fail(kind, message, code):
    print(json.dumps({'error': kind, 'message': message}), file=sys.stderr)
    return code


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        base = load_config(args.config) if args.config else ExperimentConfig()
        overrides = {k: v for k, v in vars(args).items() if k not in _NON_CONFIG}
        config = base.with_overrides(**overrides)
    except ConfigError as exc:
        return _fail('ConfigError', str(exc), EXIT_CONFIG)
    try:
        records = EXPERIMENTS[args.experiment](config)
        csv_path, json_path = write_records(records, args.out, config,
                                            name=args.experiment)
    except Exception as exc:                                  # noqa: BLE001
        return _fail(type(exc).__name__, str(exc), EXIT_RUNTIME)
    print(json.dumps({'csv': csv_path, 'sidecar': json_path,
                      'records': len(records), 'config_hash': config.config_hash()}))
    return 0


if __name__ == '__main__':
    sys.exit(main())
