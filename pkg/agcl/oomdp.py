"""
Object-oriented task-space descriptions.

A spec lists classes, their parameters and ranges, and binds every
atomic proposition to the counts it moves: a consuming event such as
``tree`` takes one object out of ``trees_env`` and puts it into
``trees_inv``, a terminal event such as ``pogo`` only needs some
objects present. Tasks for a node of the automaton follow from the
events on the path prefix that reaches it.
"""
import collections
import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import utils
from .automaton import path_events
from .constants import GRID_CAP, NODE_SAMPLES, SAMPLE_RETRIES


class SpecError(ValueError):
    pass


class InfeasibleError(ValueError):
    pass


class RetryExhaustedError(RuntimeError):
    pass


INTEGER = 'integer'
REAL = 'real'


@dataclass(frozen=True)
class Param:
    name: str
    kind: str
    lo: float
    hi: float
    count: bool = False

    def __post_init__(self):
        if self.kind not in (INTEGER, REAL):
            raise SpecError(f'{self.name}: kind must be {INTEGER!r} or {REAL!r}')
        if self.lo > self.hi:
            raise SpecError(f'{self.name}: range [{self.lo}, {self.hi}] is empty')
        if self.kind == INTEGER and (self.lo != int(self.lo)
                                     or self.hi != int(self.hi)):
            raise SpecError(f'{self.name}: integer range needs integer ends')

    def span(self, lo=None):
        lo = self.lo if lo is None else max(lo, self.lo)
        if self.kind == REAL:
            return None
        return range(int(lo), int(self.hi) + 1)


@dataclass(frozen=True)
class ClassSpec:
    name: str
    params: tuple


@dataclass(frozen=True)
class Binding:
    """
    What one event of a proposition does to the OOMDP state.

    Consuming bindings move one object from ``env`` to ``inv``; terminal
    bindings leave counts alone and need each ``requires`` parameter to
    start at its minimum.
    """
    prop: str
    consumes: str = None
    env: str = None
    inv: str = None
    terminal: bool = False
    requires: tuple = ()

    def to_dict(self):
        if self.terminal:
            return {'terminal': True, 'requires': dict(self.requires)}
        return {'consumes': self.consumes, 'env': self.env, 'inv': self.inv}


@dataclass(frozen=True)
class OomdpSpec:
    classes: tuple
    bindings: tuple

    def __post_init__(self):
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            dupes = sorted(n for n, c in collections.Counter(names).items()
                           if c > 1)
            raise SpecError(f'duplicate parameters: {", ".join(dupes)}')

        props = [b.prop for b in self.bindings]
        if len(set(props)) != len(props):
            raise SpecError('a proposition has more than one binding')

        for b in self.bindings:
            if b.terminal:
                for name, _ in b.requires:
                    self.param(name)
            else:
                for name in (b.env, b.inv):
                    if self.param(name).kind != INTEGER:
                        raise SpecError(f'{b.prop}: bound parameter {name} '
                                        f'must be an integer count')

    @property
    def params(self):
        return tuple(p for c in self.classes for p in c.params)

    @property
    def names(self):
        return tuple(p.name for p in self.params)

    def param(self, name):
        for p in self.params:
            if p.name == name:
                return p
        raise SpecError(f'unknown parameter {name!r}')

    def binding(self, prop):
        for b in self.bindings:
            if b.prop == prop:
                return b
        raise SpecError(f'proposition {prop!r} has no binding')

    @property
    def bound_inventory(self):
        return frozenset(b.inv for b in self.bindings if not b.terminal)

    def validate(self, ap):
        for prop in ap:
            self.binding(prop)
        extra = {b.prop for b in self.bindings} - set(ap)
        if extra:
            raise SpecError(f'bindings for unknown propositions: '
                            f'{", ".join(sorted(extra))}')

    def has_real(self):
        return any(p.kind == REAL for p in self.params)

    def to_dict(self):
        return {
            'classes': [{
                'name': c.name,
                'params': [{
                    'name': p.name,
                    'kind': p.kind,
                    'range': [p.lo, p.hi],
                    'count': p.count,
                } for p in c.params]
            } for c in self.classes],
            'bindings': {b.prop: b.to_dict() for b in self.bindings},
        }

    @classmethod
    def from_dict(cls, data):
        classes = []
        for c in data['classes']:
            params = []
            for p in c['params']:
                kind = p.get('kind', INTEGER)
                lo, hi = p['range']
                if kind == INTEGER:
                    lo, hi = _integral(lo), _integral(hi)
                params.append(Param(p['name'], kind, lo, hi,
                                    bool(p.get('count', False))))
            classes.append(ClassSpec(c['name'], tuple(params)))

        bindings = []
        for prop, b in sorted(data.get('bindings', {}).items()):
            if b.get('terminal'):
                bindings.append(Binding(
                    prop, terminal=True,
                    requires=tuple(sorted(b.get('requires', {}).items()))))
            else:
                bindings.append(Binding(
                    prop, consumes=b.get('consumes'), env=b['env'],
                    inv=b['inv']))

        return cls(tuple(classes), tuple(bindings))


def _integral(x):
    return int(x) if float(x) == int(x) else x


@dataclass(frozen=True)
class OomdpState:
    items: tuple

    @classmethod
    def of(cls, values, spec=None):
        if spec is None:
            return cls(tuple(values.items()))
        missing = set(spec.names) - set(values)
        if missing:
            raise SpecError(f'state misses {", ".join(sorted(missing))}')
        return cls(tuple((n, values[n]) for n in spec.names))

    @property
    def names(self):
        return tuple(n for n, _ in self.items)

    def __getitem__(self, name):
        for n, v in self.items:
            if n == name:
                return v
        raise KeyError(name)

    def get(self, name, default=None):
        try:
            return self[name]
        except KeyError:
            return default

    def as_dict(self):
        return dict(self.items)

    def replace(self, **changes):
        return OomdpState(tuple((n, changes.get(n, v)) for n, v in self.items))

    def summary(self):
        return ' '.join(f'{n}={_fmt(v)}' for n, v in self.items)


def _fmt(v):
    return f'{v:.3g}' if isinstance(v, float) else str(v)


@dataclass(frozen=True)
class TaskConfig:
    id: str
    s0: OomdpState
    sf: OomdpState
    seed: int
    is_target: bool = False

    @property
    def key(self):
        return self.s0, self.sf

    def to_dict(self):
        return {
            'id': self.id,
            's0': self.s0.as_dict(),
            'sf': self.sf.as_dict(),
            'seed': self.seed,
            'is_target': self.is_target,
        }

    @classmethod
    def from_dict(cls, data, spec=None):
        return cls(data['id'], OomdpState.of(data['s0'], spec),
                   OomdpState.of(data['sf'], spec), int(data['seed']),
                   bool(data.get('is_target', False)))


def task_id(s0, sf):
    return 't' + utils.short_digest(repr((s0.items, sf.items)))


def make_task(s0, sf, seed, is_target=False):
    layout = utils.derive_seed(seed, 'layout', s0.items, sf.items)
    return TaskConfig('target' if is_target else task_id(s0, sf),
                      s0, sf, layout, is_target)


# Requirements along a path

Requirement = collections.namedtuple('Requirement', 'minimum fixed delta')


def prefix_events(path, node_index):
    if not 0 <= node_index < len(path.nodes):
        raise IndexError(f'node index {node_index} is not on the path')
    return collections.Counter(
        e for e in path_events(path)[:node_index] if e is not None)


def requirements(spec, events):
    """
    Turn an event multiset into what a task's initial state must provide.

    Returns the minimum of every constrained parameter, the parameters
    fixed to their lower bound (bound inventories start empty-handed)
    and the change from initial to goal state.
    """
    minimum = {}
    delta = collections.Counter()
    fixed = {name: spec.param(name).lo for name in spec.bound_inventory}

    for prop, k in sorted(events.items()):
        b = spec.binding(prop)
        if b.terminal:
            for name, need in b.requires:
                minimum[name] = max(minimum.get(name, 0), need)
        else:
            minimum[b.env] = max(minimum.get(b.env, 0), k)
            delta[b.env] -= k
            delta[b.inv] += k

    for name, need in minimum.items():
        p = spec.param(name)
        if need > p.hi:
            raise InfeasibleError(f'needs {name} >= {need}, but its range '
                                  f'ends at {p.hi}')
    for name, change in delta.items():
        if name in fixed and fixed[name] + change > spec.param(name).hi:
            raise InfeasibleError(
                f'needs {name} to reach {fixed[name] + change}, but its '
                f'range ends at {spec.param(name).hi}')

    return Requirement(minimum, fixed, dict(delta))


def goal_state(s0, req):
    return s0.replace(**{n: s0[n] + d for n, d in req.delta.items()})


def grid_size(spec, req):
    size = 1
    for p in spec.params:
        if p.name in req.fixed:
            continue
        span = p.span(req.minimum.get(p.name))
        if span is None:
            return math.inf
        size *= len(span)
    return size


def _on_target(d, path, node_index, target):
    node = path.nodes[node_index]
    if node in d.accepting:
        if target is None:
            raise ValueError('the accepting node maps to the target task, '
                             'but no target was given')
        return True
    return False


def tasks_for_node(d, path, node_index, spec, target=None, seed=0,
                   grid_cap=GRID_CAP):
    """
    Every task that can reach ``path.nodes[node_index]``.

    Parameters the prefix does not constrain range over their whole
    grid. Specs with real parameters, or grids above ``grid_cap``, are
    sampled instead.
    """
    if _on_target(d, path, node_index, target):
        return (target,)

    events = prefix_events(path, node_index)
    req = requirements(spec, events)
    size = grid_size(spec, req)
    if size > grid_cap:
        logging.info('node %d has %s tasks, sampling %d instead',
                     path.nodes[node_index], size, NODE_SAMPLES)
        return sample_node_tasks(d, path, node_index, spec, NODE_SAMPLES,
                                 seed, target=target)

    domains = []
    for p in spec.params:
        if p.name in req.fixed:
            domains.append((req.fixed[p.name],))
        else:
            domains.append(p.span(req.minimum.get(p.name)))

    tasks = []
    for values in itertools.product(*domains):
        s0 = OomdpState(tuple(zip(spec.names, values)))
        tasks.append(make_task(s0, goal_state(s0, req), seed))
    return tuple(tasks)


def sample_node_tasks(d, path, node_index, spec, b, seed, target=None,
                      retries=SAMPLE_RETRIES):
    """
    ``b`` distinct tasks drawn uniformly from what can reach the node.

    The stream is keyed by the prefix event multiset, so two nodes that
    need the same events draw the same tasks.
    """
    if b < 1:
        raise ValueError('b must be positive')
    if _on_target(d, path, node_index, target):
        return (target,)

    events = prefix_events(path, node_index)
    req = requirements(spec, events)
    rng = np.random.default_rng(
        utils.derive_seed(seed, 'node-sample', sorted(events.items())))

    seen = set()
    tasks = []
    for _ in range(b * retries):
        values = []
        for p in spec.params:
            if p.name in req.fixed:
                values.append(req.fixed[p.name])
                continue
            lo = max(req.minimum.get(p.name, p.lo), p.lo)
            if p.kind == INTEGER:
                values.append(int(rng.integers(lo, p.hi + 1)))
            else:
                values.append(float(rng.uniform(lo, p.hi)))

        s0 = OomdpState(tuple(zip(spec.names, values)))
        if s0 in seen:
            continue
        seen.add(s0)
        tasks.append(make_task(s0, goal_state(s0, req), seed))
        if len(tasks) == b:
            return tuple(tasks)

    raise RetryExhaustedError(
        f'found {len(tasks)} distinct tasks for node '
        f'{path.nodes[node_index]}, wanted {b}')


def map_w(env_state, spec=None):
    """
    Project an environment state onto its OOMDP state.

    Only world size and per-class counts are read, never positions or
    the agent's pose. With a ``spec`` the result has exactly its
    parameters (missing counts are zero).
    """
    values = {'width': env_state.width, 'height': env_state.height}
    for cls, n in env_state.env_counts().items():
        values[f'{cls}_env'] = n
    for cls, n in env_state.inventory.items():
        values[f'{cls}_inv'] = n

    if spec is None:
        return OomdpState(tuple(sorted(values.items())))
    return OomdpState(tuple((n, values.get(n, 0)) for n in spec.names))


def noise_sigma(p):
    # The given range covers six standard deviations.
    return (p.hi - p.lo) / 6


def apply_range_noise(spec, seed, anchors=()):
    """
    Perturb every range to ``[a - N(0, s), b + N(0, s)]`` with ``s = (b - a) / 6``.

    Integer ranges round outward and count ranges stay non-negative.
    Each range is then widened to contain every ``anchors`` state, the
    tasks known to exist whatever the true ranges are.
    """
    rng = np.random.default_rng(seed)
    classes = []
    for c in spec.classes:
        params = []
        for p in c.params:
            g1, g2 = rng.normal(0.0, noise_sigma(p), size=2)
            lo, hi = p.lo - g1, p.hi + g2
            if p.kind == INTEGER:
                lo, hi = math.floor(lo), math.ceil(hi)
            else:
                lo, hi = float(lo), float(hi)
            if p.count:
                lo, hi = max(lo, 0), max(hi, 0)
            lo, hi = min(lo, hi), max(lo, hi)
            for state in anchors:
                v = state.get(p.name)
                if v is not None:
                    lo, hi = min(lo, v), max(hi, v)
            params.append(Param(p.name, p.kind, lo, hi, p.count))
        classes.append(ClassSpec(c.name, tuple(params)))

    noisy = OomdpSpec(tuple(classes), spec.bindings)
    logging.debug('noised ranges: %s', ', '.join(
        f'{p.name}=[{p.lo}, {p.hi}]' for p in noisy.params))
    return noisy
