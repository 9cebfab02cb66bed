import argparse
import json
import logging
import os
import sys

from . import __version__, harness, selftest, utils
from .automaton import export_dot, get_trace_paths
from .config import load_config
from .ltlf import compile_dfa, parse_ltlf


def _dump(data, path=None):
    text = json.dumps(data, indent=2, sort_keys=True) + '\n'
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, 'w', encoding='utf-8') as fd:
            fd.write(text)


def cmd_compile(args):
    ap = [p.strip() for p in args.ap.split(',') if p.strip()]
    d = compile_dfa(parse_ltlf(args.formula, ap), ap)
    summary = d.to_dict()
    summary['paths'] = [list(p.nodes) for p in get_trace_paths(d)]
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _dump(summary, os.path.join(args.out, 'dfa.json'))
        with open(os.path.join(args.out, 'dfa.dot'), 'w',
                  encoding='utf-8') as fd:
            fd.write(export_dot(d))
    else:
        _dump(summary)


def cmd_plan(args):
    config = load_config(args.config, modes=args.mode)
    d = compile_dfa(config.parsed_formula(), config.ap)
    dags = {mode: harness.plan(config, mode, d) for mode in config.modes}
    manifest = {
        'manifest_version': harness.MANIFEST_VERSION,
        'tool': {'name': 'agcl', 'version': __version__},
        'created': utils.utc_stamp(),
        'config': config.to_dict(),
        'dfa': d.to_dict(),
        'curricula': {mode: dag.to_dict() for mode, dag in dags.items()},
        'decisions': harness.DECISIONS,
    }
    if not args.out:
        _dump(manifest)
        return

    os.makedirs(args.out, exist_ok=True)
    _dump(manifest, os.path.join(args.out, 'manifest.json'))
    with open(os.path.join(args.out, 'dfa.dot'), 'w', encoding='utf-8') as fd:
        fd.write(export_dot(d))
    for mode, dag in dags.items():
        name = f'curriculum-{mode}.dot'
        with open(os.path.join(args.out, name), 'w', encoding='utf-8') as fd:
            fd.write(dag.to_dot())


def cmd_run(args):
    config = load_config(args.config, seeds=args.seeds, budget=args.budget,
                         modes=args.mode)
    harness.run_experiment(config, args.out, jobs=args.jobs)
    for row in harness.report(args.out):
        print(json.dumps(row, sort_keys=True))


def cmd_report(args):
    for row in harness.report(args.dir):
        print(json.dumps(row, sort_keys=True))


def cmd_selftest(args):
    failed = False
    for check in selftest.run(args.only):
        print(json.dumps(check._asdict(), sort_keys=True))
        failed |= not check.ok
    return 1 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog='agcl',
        description='Automaton-guided curriculum synthesis and training.')
    parser.add_argument('--version', action='version', version=__version__)
    parser.add_argument('-v', '--verbose', action='store_true',
                        help='log debug output')
    parser.add_argument('-q', '--quiet', action='store_true',
                        help='only log warnings and errors')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('compile', help='compile a formula into a DFA')
    p.add_argument('formula')
    p.add_argument('--ap', required=True,
                   help='comma separated atomic propositions')
    p.add_argument('--out', help='directory for dfa.json and dfa.dot')
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser('plan', help='synthesize curricula for a config')
    p.add_argument('config')
    p.add_argument('--mode', action='append',
                   choices=('sequence', 'graph'))
    p.add_argument('--out', help='directory for the manifest and DOT files')
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser('run', help='plan, train and compare')
    p.add_argument('config', help='config file or run manifest')
    p.add_argument('--out', required=True)
    p.add_argument('--mode', action='append',
                   choices=('sequence', 'graph'))
    p.add_argument('--seeds', help='number of replicate seeds')
    p.add_argument('--budget', help='total steps per run, e.g. 200k')
    p.add_argument('-j', '--jobs', type=int, default=1,
                   help='worker processes training independent runs')
    p.set_defaults(func=cmd_run)

    p = sub.add_parser('report', help='summarize a finished run')
    p.add_argument('dir')
    p.set_defaults(func=cmd_report)

    p = sub.add_parser('selftest', help='run the oracle and property checks')
    p.add_argument('--only', action='append',
                   choices=[name for name, _ in selftest.CHECKS])
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.quiet:
        level = logging.WARNING
    else:
        level = logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(
        level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    try:
        return args.func(args) or 0
    except Exception as e:
        logging.debug('command failed', exc_info=True)
        sys.stderr.write(json.dumps({
            'error': type(e).__name__,
            'message': str(e),
            'field': getattr(e, 'field', None),
        }) + '\n')
        return 1


if __name__ == '__main__':
    sys.exit(main())
