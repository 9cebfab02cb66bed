"""
Curriculum synthesis from the automaton of the objective.

Every trace path of the automaton gives a family of candidate task
sequences, one task per node after the initial one and the target task
last. Candidates are scored by how smoothly their tasks approach the
target (the average jump score); the best one becomes a sequence
curriculum, or the good ones are merged into a graph curriculum.
"""
import bisect
import collections
import heapq
import itertools
import logging
import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from . import oomdp, utils
from .automaton import occ, require_trace_paths
from .constants import (
    BETA_FLOOR, CANDIDATE_CAP, ETA_PERCENTILE, GRAPH_PER_PATH, GRID_CAP,
    NODE_SAMPLES, SUBSET_FRACTION, WEIGHT_TOLERANCE
)


class SchemaMismatchError(ValueError):
    pass


class EmptyCandidatesError(ValueError):
    pass


class CandidateCapError(RuntimeError):
    pass


SEQUENCE = 'sequence'
GRAPH = 'graph'
MODES = (SEQUENCE, GRAPH)


# Scoring

def _ratio(a, b):
    if a == 0 and b == 0:
        return 1.0
    if a * b < 0:
        return 0.0
    a, b = abs(a), abs(b)
    return min(a, b) / max(a, b)


def _similarity(state, reference):
    if state.names != reference.names:
        raise SchemaMismatchError(
            f'parameters differ: {state.names} against {reference.names}')
    n = len(state.items)
    if n == 0:
        return 1.0
    return sum(_ratio(v, w) for (_, v), (_, w)
               in zip(state.items, reference.items)) / n


def sim_t(task, target):
    """
    Mean per-parameter ratio between the initial states of ``task`` and
    ``target``.

    The ratio is ``min / max`` of the two values (1 when both are zero),
    so it stays within ``[0, 1]`` and is 1 only on equal values.
    """
    return _similarity(task.s0, target.s0)


def sim_g(task, target):
    return _similarity(task.sf, target.sf)


def jump_score(mi, mj, target):
    return ((sim_t(mj, target) - sim_t(mi, target))
            + (sim_g(mj, target) - sim_g(mi, target))) / 2


class Scorer:
    """
    Jump scores against one target, memoizing per-task similarities.

    Candidates of one path share most of their tasks, so the similarity
    of each task is computed once however many candidates hold it.
    """
    def __init__(self, target):
        self.target = target
        self._sims = {}

    def sims(self, task):
        key = task.key
        found = self._sims.get(key)
        if found is None:
            found = self._sims[key] = (sim_t(task, self.target),
                                       sim_g(task, self.target))
        return found

    def jump(self, mi, mj):
        ti, gi = self.sims(mi)
        tj, gj = self.sims(mj)
        return ((tj - ti) + (gj - gi)) / 2

    def avg(self, tasks):
        total = 0.0
        for mi, mj in zip(tasks, tasks[1:]):
            total += self.jump(mi, mj)
        return total / len(tasks)


@dataclass
class CandidateList:
    tasks: tuple
    path_index: int = 0
    score: float = field(default=None, compare=False)

    def __post_init__(self):
        if not self.tasks or not self.tasks[-1].is_target:
            raise ValueError('a candidate must end at the target task')

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    @property
    def target(self):
        return self.tasks[-1]


def avg_jump(psi, target, scorer=None):
    """
    Sum of the jump scores between consecutive tasks over ``len(psi)``.

    The divisor is the number of tasks, not the number of pairs. The
    result is cached on the candidate.
    """
    if psi.score is None:
        scorer = scorer or Scorer(target)
        psi.score = scorer.avg(psi.tasks)
    return psi.score


def beta_weights(in_edges):
    """
    Transfer weights for the ``(source, jump)`` edges into one vertex.

    A weight is proportional to the inverse jump, jumps at or below zero
    count as ``BETA_FLOOR``, and the weights sum to one.
    """
    if not in_edges:
        raise ValueError('need at least one in-edge')
    inverse = [1 / max(j, BETA_FLOOR) for _, j in in_edges]
    total = math.fsum(inverse)
    return [x / total for x in inverse]


# Candidates

class CandidateSpace:
    """
    The candidates of one trace path: the product of its per-node task
    sets, in path order, indexed without being built.
    """
    def __init__(self, path_index, per_node):
        self.path_index = path_index
        self.per_node = tuple(tuple(tasks) for tasks in per_node)
        self._sizes = [len(tasks) for tasks in self.per_node]
        self._len = math.prod(self._sizes)

    def __len__(self):
        return self._len

    def __getitem__(self, i):
        if not 0 <= i < self._len:
            raise IndexError(i)
        picks = []
        for tasks, size in zip(reversed(self.per_node), reversed(self._sizes)):
            i, j = divmod(i, size)
            picks.append(tasks[j])
        return CandidateList(tuple(reversed(picks)), self.path_index)

    def __iter__(self):
        for tasks in itertools.product(*self.per_node):
            yield CandidateList(tasks, self.path_index)


class CandidatePool:
    """Several candidate spaces seen as one sequence."""
    def __init__(self, spaces):
        self.spaces = tuple(spaces)
        self._ends = list(itertools.accumulate(len(s) for s in self.spaces))

    def __len__(self):
        return self._ends[-1] if self._ends else 0

    def __getitem__(self, i):
        if not 0 <= i < len(self):
            raise IndexError(i)
        k = bisect.bisect_right(self._ends, i)
        start = self._ends[k - 1] if k else 0
        return self.spaces[k][i - start]

    def __iter__(self):
        return itertools.chain.from_iterable(self.spaces)


def list_candidates(path, node_tasks, path_index=0):
    """
    Every way of picking one task per node after the initial one.

    ``node_tasks`` maps each node of ``path`` to its task set; the
    accepting node should map to the target alone.
    """
    per_node = []
    for node in path.nodes[1:]:
        tasks = node_tasks.get(node, ())
        if not tasks:
            raise EmptyCandidatesError(f'node {node} has no tasks')
        per_node.append(tasks)
    return CandidateSpace(path_index, per_node)


def sample_candidate_subset(candidates, fraction, seed):
    """
    ``ceil(fraction * len(candidates))`` candidates drawn uniformly
    without replacement, kept in enumeration order.
    """
    if not 0 < fraction <= 1:
        raise ValueError(f'fraction must be in (0, 1], not {fraction}')
    n = len(candidates)
    if fraction == 1:
        return list(candidates)

    k = math.ceil(fraction * n)
    rng = np.random.default_rng(seed)
    picked = np.sort(rng.choice(n, size=k, replace=False))
    return [candidates[int(i)] for i in picked]


def select_sequence(candidates, target, scorer=None):
    """
    The candidate with the lowest average jump, the first one on ties.
    """
    scorer = scorer or Scorer(target)
    best = None
    for psi in candidates:
        score = avg_jump(psi, target, scorer)
        if best is None or score < best.score:
            best = psi
    if best is None:
        raise EmptyCandidatesError('no candidates to select from')
    return best


def select_graph(candidates, eta, target, per_path=GRAPH_PER_PATH,
                 scorer=None):
    """
    Merge every candidate scoring at most ``eta`` into one graph.

    ``per_path`` keeps only that many of the best such candidates from
    each trace path (``None`` keeps all). With none left the best
    sequence is returned as a chain.
    """
    if not math.isfinite(eta):
        raise ValueError(f'eta must be finite, not {eta}')
    scorer = scorer or Scorer(target)

    # Per path, a max-heap of the best candidates seen so far.
    kept = collections.defaultdict(list)
    for order, psi in enumerate(candidates):
        score = avg_jump(psi, target, scorer)
        if score > eta:
            continue
        best = kept[psi.path_index]
        entry = (-score, -order, psi)
        if per_path is None or len(best) < per_path:
            heapq.heappush(best, entry)
        elif entry[:2] > best[0][:2]:
            heapq.heapreplace(best, entry)

    chosen = [(-s, -o, psi) for path_index in sorted(kept)
              for s, o, psi in kept[path_index]]

    if not chosen:
        logging.warning('no candidate scores within eta=%g, falling back '
                        'to the best sequence', eta)
        return CurriculumDag.chain(select_sequence(candidates, target, scorer),
                                   scorer)

    chosen.sort(key=lambda x: x[1])
    return CurriculumDag.merge([psi for _, _, psi in chosen], scorer)


# Curricula

class CurriculumDag:
    """
    Tasks linked by the direction knowledge is transferred, ending at the
    target task.

    Vertices are named by task id and tasks with the same initial and
    goal states are one vertex. Edges carry the jump between their ends
    and the transfer weight ``beta`` of the source.
    """
    def __init__(self, target):
        self.graph = nx.DiGraph()
        self.meta = {}
        self._by_key = {}
        self.target = target
        self.add_task(target)

    def add_task(self, task):
        vertex = self._by_key.get(task.key)
        if vertex is None:
            vertex = self._by_key[task.key] = task.id
            self.graph.add_node(vertex, task=task,
                                index=self.graph.number_of_nodes())
        return vertex

    def add_edge(self, src, dst, jump):
        u, v = self.add_task(src), self.add_task(dst)
        if u == v or self.graph.has_edge(u, v):
            return
        if nx.has_path(self.graph, v, u):
            logging.debug('skipping edge %s -> %s, it would close a cycle',
                          u, v)
            return
        self.graph.add_edge(u, v, jump=jump, beta=None)

    def assign_betas(self):
        for v in self.graph.nodes:
            preds = sorted(self.graph.predecessors(v), key=self._index)
            if not preds:
                continue
            jumps = [(u, self.graph.edges[u, v]['jump']) for u in preds]
            for u, beta in zip(preds, beta_weights(jumps)):
                self.graph.edges[u, v]['beta'] = beta

    @classmethod
    def chain(cls, psi, scorer=None):
        return cls.merge([psi], scorer, chain=True)

    @classmethod
    def merge(cls, candidates, scorer=None, chain=False):
        target = candidates[0].target
        scorer = scorer or Scorer(target)
        dag = cls(target)
        for psi in candidates:
            for task in psi.tasks:
                dag.add_task(task)
        for psi in candidates:
            for mi, mj in zip(psi.tasks, psi.tasks[1:]):
                dag.add_edge(mi, mj, scorer.jump(mi, mj))
        dag.assign_betas()
        dag.meta['shape'] = 'chain' if chain else 'graph'
        return dag

    def _index(self, vertex):
        return self.graph.nodes[vertex]['index']

    def task(self, vertex):
        return self.graph.nodes[vertex]['task']

    @property
    def sink(self):
        return self._by_key[self.target.key]

    @property
    def roots(self):
        return sorted((v for v, d in self.graph.in_degree() if d == 0),
                      key=self._index)

    @property
    def vertices(self):
        return self.order()

    def __len__(self):
        return self.graph.number_of_nodes()

    def order(self):
        """
        A topological order, ties broken by the order vertices were added.
        """
        return list(nx.lexicographical_topological_sort(
            self.graph, key=self._index))

    def in_edges(self, vertex):
        return [(u, self.graph.edges[u, vertex]['beta'])
                for u in sorted(self.graph.predecessors(vertex),
                                key=self._index)]

    def validate(self):
        g = self.graph
        if not nx.is_directed_acyclic_graph(g):
            raise ValueError('curriculum has a cycle')
        sinks = [v for v, d in g.out_degree() if d == 0]
        if sinks != [self.sink]:
            raise ValueError(f'curriculum must have one sink, has {sinks}')
        reaching = nx.ancestors(g, self.sink) | {self.sink}
        if len(reaching) != len(g):
            raise ValueError('some tasks never reach the target')
        for v in g.nodes:
            betas = [b for _, b in self.in_edges(v)]
            if betas and abs(math.fsum(betas) - 1) > WEIGHT_TOLERANCE:
                raise ValueError(f'weights into {v} sum to {math.fsum(betas)}')
        return True

    def to_dict(self):
        return {
            'vertices': [self.task(v).to_dict() for v in self.order()],
            'edges': [{
                'from': u,
                'to': v,
                'jump': self.graph.edges[u, v]['jump'],
                'beta': self.graph.edges[u, v]['beta'],
            } for u, v in sorted(self.graph.edges,
                                 key=lambda e: (self._index(e[0]),
                                                self._index(e[1])))],
            'sink': self.sink,
            'roots': self.roots,
            'meta': self.meta,
        }

    @classmethod
    def from_dict(cls, data, spec=None):
        tasks = {v['id']: oomdp.TaskConfig.from_dict(v, spec)
                 for v in data['vertices']}
        dag = cls(tasks[data['sink']])
        for vertex in data['vertices']:
            dag.add_task(tasks[vertex['id']])
        for edge in data['edges']:
            u, v = edge['from'], edge['to']
            dag.graph.add_edge(u, v, jump=edge['jump'], beta=edge['beta'])
        dag.meta = dict(data.get('meta', {}))
        return dag

    def to_dot(self, name='curriculum'):
        lines = [f'digraph {name} {{', '  rankdir=LR;',
                 '  node [shape=box, fontsize=10];']
        for v in self.order():
            task = self.task(v)
            shape = ', peripheries=2' if v == self.sink else ''
            label = (f'{v}\\ns0: {task.s0.summary()}'
                     f'\\nsf: {task.sf.summary()}')
            lines.append(f'  "{v}" [label="{label}"{shape}];')
        for edge in self.to_dict()['edges']:
            lines.append(f'  "{edge["from"]}" -> "{edge["to"]}" '
                         f'[label="{edge["beta"]:.3f}"];')
        lines.append('}')
        return '\n'.join(lines) + '\n'


# Synthesis

def _node_tasks(d, path, spec, target, seed, b, grid_cap):
    tasks = {}
    for i, node in enumerate(path.nodes[1:], start=1):
        if b:
            tasks[node] = oomdp.sample_node_tasks(d, path, i, spec, b, seed,
                                                  target=target)
        else:
            tasks[node] = oomdp.tasks_for_node(d, path, i, spec, target,
                                               seed=seed, grid_cap=grid_cap)
    return tasks


def agcg(d, spec, target, mode=SEQUENCE, eta=None, seed=0, b=None,
         subset_fraction=SUBSET_FRACTION, grid_cap=GRID_CAP,
         candidate_cap=CANDIDATE_CAP, graph_per_path=GRAPH_PER_PATH):
    """
    Synthesize a curriculum for ``target`` from the automaton ``d``.

    ``b`` samples that many tasks per node instead of enumerating them.
    Paths whose candidates outnumber ``candidate_cap`` are sampled with
    the default per-node sample size. ``eta`` defaults to a percentile
    of the candidate scores; the value used is kept in ``dag.meta``.
    """
    if mode not in MODES:
        raise ValueError(f'mode must be one of {MODES}, not {mode!r}')
    spec.validate(d.ap)
    paths = require_trace_paths(d)
    logging.info('%d trace paths cover %d nodes', len(paths),
                 len(frozenset().union(*map(occ, paths))))

    spaces = []
    sampled = []
    error = None
    for i, path in enumerate(paths):
        try:
            tasks = _node_tasks(d, path, spec, target, seed, b, grid_cap)
            space = list_candidates(path, tasks, path_index=i)
            if len(space) > candidate_cap and b != NODE_SAMPLES:
                logging.warning('path %d has %s candidates, sampling %d '
                                'tasks per node', i, utils.spell_count(len(space)),
                                NODE_SAMPLES)
                tasks = _node_tasks(d, path, spec, target, seed,
                                    NODE_SAMPLES, grid_cap)
                space = list_candidates(path, tasks, path_index=i)
                sampled.append(i)
        except oomdp.InfeasibleError as e:
            logging.warning('path %d is infeasible: %s', i, e)
            error = e
            continue

        if len(space) > candidate_cap:
            raise CandidateCapError(
                f'path {i} still has {len(space)} candidates, more than '
                f'{candidate_cap}')
        spaces.append(space)

    if not spaces:
        raise error

    candidates = CandidatePool(spaces)
    logging.info('%s candidates over %d paths',
                 utils.spell_count(len(candidates)), len(spaces))
    if subset_fraction < 1:
        candidates = sample_candidate_subset(
            candidates, subset_fraction, utils.derive_seed(seed, 'subset'))
        logging.info('kept a subset of %d candidates', len(candidates))

    scorer = Scorer(target)
    scores = np.fromiter((avg_jump(psi, target, scorer) for psi in candidates),
                         dtype=float, count=len(candidates))
    if eta is None:
        eta = float(np.percentile(scores, ETA_PERCENTILE))

    if mode == SEQUENCE:
        best = select_sequence(candidates, target, scorer)
        dag = CurriculumDag.chain(best, scorer)
    else:
        dag = select_graph(candidates, eta, target, per_path=graph_per_path,
                           scorer=scorer)

    dag.meta.update({
        'mode': mode,
        'eta': eta,
        'candidates': len(candidates),
        'paths': len(paths),
        'sampled_paths': sampled,
        'best_score': float(scores.min()),
    })
    logging.info('%s curriculum with %d tasks (eta=%.4g)', mode, len(dag), eta)
    return dag
