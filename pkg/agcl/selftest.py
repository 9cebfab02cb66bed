"""
Oracle and property checks that can run without a test framework,
behind ``agcl selftest``. Each check returns a ``Check`` record.
"""
import collections
import itertools
import logging
import time

import numpy as np

from . import learner
from .automaton import get_trace_paths
from .constants import GRADCHECK_TOLERANCE, TRACE_LEN
from .curriculum import Scorer, beta_weights, sim_g, sim_t
from .gridworld import POGO_AP, POGO_FORMULA
from .ltlf import compile_dfa, eval_trace, parse_ltlf
from .oomdp import OomdpState, make_task

Check = collections.namedtuple('Check', 'name ok detail seconds')

SUITE = (
    ('F p', ('p',)),
    ('G p', ('p',)),
    ('!p U r', ('p', 'r')),
    ('F(tree) & F(rock)', ('rock', 'tree')),
)

RANDOM_TRACES = 10_000


def _symbols(ap):
    return [frozenset(c) for n in range(len(ap) + 1)
            for c in itertools.combinations(ap, n)]


def _mismatches(text, ap, traces):
    f = parse_ltlf(text, ap)
    d = compile_dfa(f, ap)
    bad = 0
    for trace in traces:
        if d.accepts(trace) != eval_trace(f, trace):
            bad += 1
            logging.debug('%s disagrees on %s', text, trace)
    return bad


def check_semantics(seed=0):
    """
    Compiled automata against trace semantics: every trace up to the
    oracle length for the small formulas, random ones for the pogo task.
    """
    bad = 0
    total = 0
    for text, ap in SUITE:
        symbols = _symbols(ap)
        traces = [t for n in range(1, TRACE_LEN + 1)
                  for t in itertools.product(symbols, repeat=n)]
        bad += _mismatches(text, ap, traces)
        total += len(traces)

    rng = np.random.default_rng(seed)
    symbols = _symbols(POGO_AP)
    traces = []
    for _ in range(RANDOM_TRACES):
        n = int(rng.integers(1, TRACE_LEN + 1))
        traces.append([symbols[i] for i in rng.integers(len(symbols), size=n)])
    bad += _mismatches(POGO_FORMULA, POGO_AP, traces)
    total += len(traces)
    return bad == 0, f'{bad} mismatches over {total} traces'


def check_tree_rock():
    d = compile_dfa(parse_ltlf('F(tree) & F(rock)', ('rock', 'tree')))
    paths = get_trace_paths(d)
    ok = d.n_states == 4 and len(d.accepting) == 1 and len(paths) == 2
    return ok, (f'{d.n_states} states, {len(d.accepting)} accepting, '
                f'{len(paths)} paths')


def _random_task(rng, names, is_target=False):
    s0 = OomdpState(tuple((n, int(rng.integers(0, 5))) for n in names))
    sf = OomdpState(tuple((n, int(rng.integers(0, 5))) for n in names))
    return make_task(s0, sf, 0, is_target=is_target)


def check_telescoping(seed=0, lists=1_000):
    rng = np.random.default_rng(seed)
    names = ('width', 'height', 'trees_env', 'trees_inv')
    worst = 0.0
    for _ in range(lists):
        target = _random_task(rng, names, is_target=True)
        tasks = [_random_task(rng, names)
                 for _ in range(int(rng.integers(0, 5)))] + [target]
        scorer = Scorer(target)
        pairs = sum(scorer.jump(a, b) for a, b in zip(tasks, tasks[1:]))
        first = tasks[0]
        expected = (2 - sim_t(first, target) - sim_g(first, target)) / 2
        worst = max(worst, abs(pairs - expected))

    beta = beta_weights([(None, 0.2), (None, 0.3)])
    ok = (worst <= 1e-9 and abs(sum(beta) - 1) <= 1e-12
          and abs(beta[0] - 0.6) <= 1e-12 and abs(beta[1] - 0.4) <= 1e-12)
    return ok, f'worst telescoping error {worst:.3g}, beta {beta}'


def check_gradients(seed=0):
    err = learner.gradient_check(seed=seed)
    return err <= GRADCHECK_TOLERANCE, f'relative error {err:.3g}'


def check_transfer(seed=0):
    a = learner.QParams.init((4, 5, 3), seed)
    b = learner.QParams.init((4, 5, 3), seed + 1)
    copied = learner.transfer_sequence(a)
    blend = learner.transfer_weighted([(a, 0.25), (b, 0.75)])
    expected = 0.25 * a.data + 0.75 * b.data
    ok = (np.array_equal(copied.data, a.data)
          and np.allclose(blend.data, expected, rtol=0, atol=1e-12))
    return ok, f'blend error {np.abs(blend.data - expected).max():.3g}'


CHECKS = (
    ('dfa-semantics', check_semantics),
    ('tree-rock', check_tree_rock),
    ('jump-algebra', check_telescoping),
    ('gradients', check_gradients),
    ('transfer', check_transfer),
)


def run(names=None):
    results = []
    for name, fn in CHECKS:
        if names and name not in names:
            continue
        start = time.perf_counter()
        ok, detail = fn()
        seconds = time.perf_counter() - start
        logging.info('%s: %s (%s)', name, 'ok' if ok else 'FAILED', detail)
        results.append(Check(name, ok, detail, round(seconds, 3)))
    return results
