"""
Experiment orchestration: plan curricula, train through them and the
baselines, and write everything a run produced to its directory.

Curriculum runs are charged for every source step ("strong transfer"):
the target's learning curve starts at the sum of the steps spent on
all source tasks.
"""
import collections
import concurrent.futures
import json
import logging
import math
import os
import statistics

import numpy as np
from scipy import stats

from . import __version__, database, learner, utils
from .automaton import export_dot
from .constants import VARIANCE_FLOOR
from .curriculum import agcg
from .gridworld import OBS_SIZE, Action, make_env_factory
from .heap import Heap, Ready
from .ltlf import compile_dfa
from .oomdp import apply_range_noise

MANIFEST_VERSION = 1

SCRATCH = 'scratch'
GSRS = 'gsrs'

# Choices the run makes where the method leaves room, kept in the manifest.
DECISIONS = {
    'similarity_ratio': 'min/max per parameter, 1 when both are zero',
    'average_divisor': 'number of tasks in the candidate',
    'beta_floor': 'jumps at or below zero count as 1e-6',
    'eta_default': '40th percentile of candidate scores',
    'graph_fallback': 'best sequence when no candidate is within eta',
    'task_identity': 'equal initial and goal states',
    'transfer': 'convex combination of parameter vectors',
    'labels': 'events, true only on the step they happen',
    'break': 'acts on the faced adjacent cell',
    'beams': '8 beams, 5 channels, distance over grid diagonal',
    'source_reward': '+1000 when the goal inventory is reached',
    'per_source_budget': 'total / (2 |V|) unless configured',
    'target_budget': 'total minus the steps spent on sources',
    'not_reached': 'counts as the total budget in the t-test',
    'variance_floor': VARIANCE_FLOOR,
}


class DegenerateVarianceError(ValueError):
    pass


RunResult = collections.namedtuple('RunResult', 'method seed phases ttt')
RunResult.__doc__ = """
One trained method for one seed: its ``(Phase, points)`` pairs in
training order and its time to threshold (``None`` if never reached).
"""


# Statistics

def time_to_threshold(curve, delta, offset=0):
    """
    ``offset`` plus the first step count whose success reaches ``delta``,
    or ``None`` when no point of ``curve`` does.
    """
    if not curve:
        raise ValueError('the curve has no points')
    if not 0 < delta <= 1:
        raise ValueError(f'threshold must be in (0, 1], not {delta}')
    for steps, success in curve:
        if success >= delta:
            return offset + steps
    return None


def welch_t_test(a, b):
    """
    Two-sided unequal-variance t-test, returning ``(t, p)``.

    Sample variances are floored at ``VARIANCE_FLOOR`` so constant
    samples with different means still give a finite statistic.
    """
    if len(a) < 2 or len(b) < 2:
        raise ValueError('each sample needs at least two values')
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0 and vb == 0 and a.mean() == b.mean():
        raise DegenerateVarianceError(
            'both samples are constant and equal, the test is undefined')

    va, vb = max(va, VARIANCE_FLOOR), max(vb, VARIANCE_FLOOR)
    sa, sb = va / len(a), vb / len(b)
    t = float((a.mean() - b.mean()) / math.sqrt(sa + sb))
    df = (sa + sb) ** 2 / (sa ** 2 / (len(a) - 1) + sb ** 2 / (len(b) - 1))
    p = float(min(1.0, 2 * stats.t.sf(abs(t), df)))
    return t, p


# Planning

def planning_spec(config):
    """
    The task space the curriculum is planned over: the configured one,
    or its noised version anchored at the target task.
    """
    spec = config.oomdp
    if config.noise.enabled:
        spec = apply_range_noise(spec, config.noise.seed,
                                 anchors=(config.target.s0, config.target.sf))
    return spec


def plan(config, mode, dfa=None):
    dfa = dfa or compile_dfa(config.parsed_formula(), config.ap)
    s = config.sampling
    dag = agcg(dfa, planning_spec(config), config.target, mode=mode,
               eta=config.eta, seed=config.seeds.master, b=s.b,
               subset_fraction=s.subset_fraction, grid_cap=s.grid_cap,
               candidate_cap=s.candidate_cap, graph_per_path=s.graph_per_path)
    dag.validate()
    return dag


# Training

def _layers(config):
    return config.learner.layers(OBS_SIZE, len(Action))


def _factory(config, task, dfa):
    return make_env_factory(task, spec=config.oomdp, dfa=dfa,
                            step_cap=config.budget.step_cap)


@utils.log_exc
def _train_vertex(config, dfa, task, init, budget, seed, threshold,
                  shaper=None):
    return learner.train(_factory(config, task, dfa), init, budget,
                         hyper=config.learner, shaper=shaper,
                         seed=utils.derive_seed(seed, 'train', task.id),
                         threshold=threshold)


def run_curriculum(dag, config, seed, dfa, method='curriculum', threads=1):
    """
    Train every task of ``dag`` leaves first, then the target.

    A task starts from the parameters of its single predecessor, from
    the weighted blend of several, or from the seeded random init when
    it has none. Tasks that become ready together may train on
    ``threads`` workers; their results are taken in vertex order. The
    learner holds the GIL outside numpy kernels, so threads overlap
    little; whole runs parallelize in ``run_experiment``.
    """
    total = config.budget.total
    per_source = config.budget.per_source or max(1, total // (2 * len(dag)))
    init = learner.QParams.init(_layers(config), utils.derive_seed(seed, 'init'))
    index = {v: i for i, v in enumerate(dag.order())}

    waiting = {v: dag.graph.in_degree(v) for v in dag.graph.nodes}
    ready = Heap(Ready(index[v], v) for v, n in waiting.items() if n == 0)
    trained = {}
    phases = []
    offset = 0
    ttt = None

    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        while ready:
            wave = [r.vertex for r in ready.drain()]
            jobs = []
            for v in wave:
                task = dag.task(v)
                preds = dag.in_edges(v)
                if not preds:
                    start = learner.transfer_sequence(init)
                elif len(preds) == 1:
                    start = learner.transfer_sequence(trained[preds[0][0]])
                else:
                    start = learner.transfer_weighted(
                        [(trained[u], beta) for u, beta in preds])

                if v == dag.sink:
                    # Runs last: every source has been charged by now.
                    budget = max(1, total - offset)
                    threshold = config.budget.threshold
                else:
                    budget = per_source
                    threshold = config.learner.source_threshold

                jobs.append(pool.submit(_train_vertex, config, dfa, task,
                                        start, budget, seed, threshold))

            for v, job in zip(wave, jobs):
                report = job.result()
                trained[v] = report.params
                is_target = v == dag.sink
                phase = database.Phase(
                    method, seed, len(phases), v, is_target, report.steps,
                    report.eval_steps, offset, report.final_success,
                    report.early_stopped)
                points = [(offset + s, rate) for s, rate in report.checkpoints]
                phases.append((phase, points))
                logging.info('%s seed %d: %s %s took %s steps', method, seed,
                             'target' if is_target else 'source', v,
                             utils.spell_count(report.steps))
                if is_target:
                    ttt = time_to_threshold(report.checkpoints,
                                            config.budget.threshold, offset)
                offset += report.steps

                for succ in dag.graph.successors(v):
                    waiting[succ] -= 1
                    if waiting[succ] == 0:
                        ready.push(Ready(index[succ], succ))

    return RunResult(method, seed, phases, ttt)


def run_baseline(kind, config, seed, dfa):
    """
    Train the target alone from the seeded random init; ``gsrs`` adds the
    automaton distance bonus to every step's reward.
    """
    if kind not in (SCRATCH, GSRS):
        raise ValueError(f'unknown baseline {kind!r}')
    init = learner.QParams.init(_layers(config), utils.derive_seed(seed, 'init'))
    shaper = (learner.GsrsShaper(dfa, config.learner.gsrs_scale)
              if kind == GSRS else None)
    report = _train_vertex(config, dfa, config.target, init,
                           config.budget.total, seed, config.budget.threshold,
                           shaper)

    phase = database.Phase(kind, seed, 0, config.target.id, True,
                           report.steps, report.eval_steps, 0,
                           report.final_success, report.early_stopped)
    ttt = time_to_threshold(report.checkpoints, config.budget.threshold)
    return RunResult(kind, seed, [(phase, list(report.checkpoints))], ttt)


# Runs

def _write(path, text):
    with open(path, 'w', encoding='utf-8') as fd:
        fd.write(text)


def _dump(path, data):
    _write(path, json.dumps(data, indent=2, sort_keys=True) + '\n')


def _run_seed(config, r):
    return utils.derive_seed(config.seeds.master, 'replicate', r)


def compare(results, budget):
    """
    Welch tests of time to threshold between every pair of methods, not
    reached counting as ``budget``.
    """
    samples = {
        m: [budget if r.ttt is None else r.ttt for r in runs]
        for m, runs in results.items()
    }
    tests = []
    methods = list(samples)
    for i, a in enumerate(methods):
        for b in methods[i + 1:]:
            entry = {'a': a, 'b': b}
            try:
                entry['t'], entry['p'] = welch_t_test(samples[a], samples[b])
            except ValueError as e:
                entry['error'] = str(e)
            tests.append(entry)
    return {'budget': budget, 'samples': samples, 'tests': tests}


def _run_job(config, dfa, dags, method, r):
    seed = _run_seed(config, r)
    if method in dags:
        result = run_curriculum(dags[method], config, seed, dfa, method)
    else:
        result = run_baseline(method, config, seed, dfa)
    return result._replace(seed=r, phases=[
        (phase._replace(seed=r), points) for phase, points in result.phases
    ])


def run_experiment(config, out_dir, jobs=1):
    """
    Plan every configured mode, train it and the baselines for every
    replicate seed, and write the run directory.

    With ``jobs`` above one the runs are spread over that many worker
    processes. Each run is seeded on its own, so the results do not
    depend on ``jobs``.
    """
    os.makedirs(out_dir, exist_ok=True)
    dfa = compile_dfa(config.parsed_formula(), config.ap)
    dags = {mode: plan(config, mode, dfa) for mode in config.modes}

    _write(os.path.join(out_dir, 'dfa.dot'), export_dot(dfa))
    for i, (mode, dag) in enumerate(dags.items()):
        dot = dag.to_dot()
        if i == 0:
            _write(os.path.join(out_dir, 'curriculum.dot'), dot)
        _write(os.path.join(out_dir, f'curriculum-{mode}.dot'), dot)

    seeds = list(range(config.seeds.replicates))
    _dump(os.path.join(out_dir, 'manifest.json'), {
        'manifest_version': MANIFEST_VERSION,
        'tool': {'name': 'agcl', 'version': __version__},
        'created': utils.utc_stamp(),
        'config': config.to_dict(),
        'dfa': dfa.to_dict(),
        'curricula': {mode: dag.to_dict() for mode, dag in dags.items()},
        'replicate_seeds': {r: _run_seed(config, r) for r in seeds},
        'decisions': DECISIONS,
    })

    work = [(m, r) for m in (*config.modes, *config.baselines) for r in seeds]
    logging.info('training %d runs in %d process(es)', len(work), jobs)
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_job, config, dfa, dags, m, r)
                       for m, r in work]
            results = [f.result() for f in futures]
    else:
        results = [_run_job(config, dfa, dags, m, r) for m, r in work]

    grouped = collections.OrderedDict()
    with database.Database(os.path.join(out_dir, 'runs.db')) as db:
        for result in results:
            db.clear_run(result.method, result.seed)
            for phase, points in result.phases:
                db.add_phase(phase, points)
            db.set_result(result.method, result.seed, result.ttt)
            grouped.setdefault(result.method, []).append(result)

        db.export_curves(os.path.join(out_dir, 'curves.csv'))
        db.export_summary(os.path.join(out_dir, 'summary.csv'),
                          config.budget.total)

    _dump(os.path.join(out_dir, 'stats.json'),
          compare(grouped, config.budget.total))
    return grouped


def report(out_dir):
    """
    Re-export the CSVs of a finished run and summarize each method: the
    median time to threshold (not reached counting as the budget) and
    how many seeds reached it.
    """
    with open(os.path.join(out_dir, 'manifest.json'), encoding='utf-8') as fd:
        manifest = json.load(fd)
    budget = manifest['config']['budget']['total']

    rows = []
    with database.Database(os.path.join(out_dir, 'runs.db')) as db:
        db.export_curves(os.path.join(out_dir, 'curves.csv'))
        db.export_summary(os.path.join(out_dir, 'summary.csv'), budget)
        for method in db.methods():
            results = list(db.iter_results(method))
            values = [r.time_to_threshold if r.reached else budget
                      for r in results]
            rows.append({
                'method': method,
                'seeds': len(results),
                'reached': sum(r.reached for r in results),
                'median_time_to_threshold': statistics.median(values),
            })
    return rows
