"""
Deterministic finite automata over ``2^AP`` and the operations the
curriculum needs from them: stepping, synchronous monitoring, trace
path enumeration and distance to acceptance.

Symbols are subsets of the atomic propositions. Internally a symbol is
the bitmask over the sorted proposition tuple ``ap``, so symbol ``0`` is
the empty set and ``delta[node][symbol]`` is the successor.
"""
import collections
import itertools
import logging
import math
from dataclasses import dataclass, field


class UnsatisfiableError(ValueError):
    pass


class MultiPropositionEdgeError(ValueError):
    """
    A node leaves for a live node on a joint symbol that no order of its
    single events reproduces.
    """
    def __init__(self, node, succ, symbol):
        names = ', '.join(sorted(symbol))
        super().__init__(
            f'node {node} reaches {succ} only on the joint symbol '
            f'{{{names}}}, and the environment emits one event per step')
        self.node = node
        self.succ = succ
        self.symbol = frozenset(symbol)


TracePath = collections.namedtuple('TracePath', 'nodes labels')
TracePath.__doc__ = """
A simple path ``nodes[0] .. nodes[n]`` from the initial node.

``labels[i]`` holds the propositions whose single-event symbol moves
``nodes[i]`` to ``nodes[i + 1]``; an empty tuple marks a silent step
taken on the empty symbol.
"""


def path_events(path):
    """
    The event taken on each step of the path (``None`` for silent steps).

    When several propositions move along the same edge the first one in
    alphabetical order stands for the step.
    """
    return tuple(labels[0] if labels else None for labels in path.labels)


@dataclass(frozen=True)
class Dfa:
    ap: tuple
    initial: int
    accepting: frozenset
    delta: tuple
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if tuple(sorted(self.ap)) != tuple(self.ap):
            raise ValueError('ap must be sorted')
        width = 1 << len(self.ap)
        if not 0 <= self.initial < len(self.delta):
            raise ValueError(f'initial node {self.initial} out of range')
        for node, row in enumerate(self.delta):
            if len(row) != width:
                raise ValueError(f'node {node} has {len(row)} transitions, '
                                 f'expected {width}')
            for succ in row:
                if not 0 <= succ < len(self.delta):
                    raise ValueError(f'node {node} points to missing {succ}')
        if any(not 0 <= n < len(self.delta) for n in self.accepting):
            raise ValueError('accepting nodes out of range')

    @property
    def n_states(self):
        return len(self.delta)

    @property
    def nodes(self):
        return range(len(self.delta))

    @property
    def symbols(self):
        """
        Every symbol of the alphabet as a frozenset, indexed by bitmask.
        """
        return [symbol_set(self.ap, s) for s in range(1 << len(self.ap))]

    def symbol_index(self, labels):
        index = 0
        for name in labels:
            try:
                index |= 1 << self.ap.index(name)
            except ValueError:
                raise ValueError(f'{name!r} is not an atomic proposition '
                                 f'of this automaton') from None
        return index

    def step(self, node, labels):
        return self.delta[node][self.symbol_index(labels)]

    def run(self, trace, node=None):
        node = self.initial if node is None else node
        for labels in trace:
            node = self.step(node, labels)
        return node

    def accepts(self, trace):
        return self.run(trace) in self.accepting

    def minimize(self):
        return minimize(self)

    def to_dict(self):
        edges = {}
        for node, succ, symbols in _grouped_edges(self):
            edges.setdefault(str(node), []).append({
                'to': succ,
                'on': [_render_symbol(self.ap, s) for s in symbols],
            })
        return {
            'ap': list(self.ap),
            'states': self.n_states,
            'initial': self.initial,
            'accepting': sorted(self.accepting),
            'edges': edges,
        }

    @classmethod
    def from_dict(cls, data):
        ap = tuple(data['ap'])
        delta = [[None] * (1 << len(ap)) for _ in range(data['states'])]
        for node, outgoing in data['edges'].items():
            for edge in outgoing:
                for text in edge['on']:
                    delta[int(node)][_parse_symbol(ap, text)] = edge['to']
        return cls(ap, data['initial'], frozenset(data['accepting']),
                   tuple(tuple(row) for row in delta))


def symbol_set(ap, index):
    return frozenset(p for i, p in enumerate(ap) if index >> i & 1)


def _render_symbol(ap, index):
    names = sorted(symbol_set(ap, index))
    return '&'.join(names) if names else '-'


def _parse_symbol(ap, text):
    if text == '-':
        return 0
    return sum(1 << ap.index(name) for name in text.split('&'))


def _grouped_edges(d):
    for node in d.nodes:
        grouped = {}
        for s, succ in enumerate(d.delta[node]):
            grouped.setdefault(succ, []).append(s)
        for succ in sorted(grouped):
            yield node, succ, grouped[succ]


def renumber(d):
    """
    Drop unreachable nodes and number the rest in breadth-first order
    from the initial node, visiting symbols by increasing bitmask.
    """
    order = {d.initial: 0}
    queue = collections.deque([d.initial])
    while queue:
        node = queue.popleft()
        for succ in d.delta[node]:
            if succ not in order:
                order[succ] = len(order)
                queue.append(succ)

    delta = [None] * len(order)
    for old, new in order.items():
        delta[new] = tuple(order[s] for s in d.delta[old])

    return Dfa(d.ap, 0, frozenset(order[n] for n in d.accepting if n in order),
               tuple(delta))


def minimize(d):
    """
    Hopcroft partition refinement, followed by stable renumbering.
    """
    d = renumber(d)
    width = 1 << len(d.ap)
    inverse = collections.defaultdict(set)
    for node, row in enumerate(d.delta):
        for s, succ in enumerate(row):
            inverse[s, succ].add(node)

    accepting = frozenset(d.accepting)
    rejecting = frozenset(d.nodes) - accepting
    partition = {block for block in (accepting, rejecting) if block}
    block_of = {n: block for block in partition for n in block}

    # seed the worklist with the smaller group (that's the Hopcroft trick)
    work = {min(partition, key=len)} if len(partition) > 1 else set()
    while work:
        splitter = work.pop()
        for s in range(width):
            affected = {}
            for target in splitter:
                for pred in inverse.get((s, target), ()):
                    affected.setdefault(block_of[pred], set()).add(pred)

            for block, inside in affected.items():
                if len(inside) == len(block):
                    continue

                part1 = frozenset(inside)
                part2 = block - part1
                partition.remove(block)
                partition.update((part1, part2))
                for n in part1:
                    block_of[n] = part1
                for n in part2:
                    block_of[n] = part2

                if block in work:
                    work.remove(block)
                    work.update((part1, part2))
                else:
                    work.add(min(part1, part2, key=len))

    # Number blocks by their smallest member, then renumber again by BFS.
    blocks = sorted(partition, key=min)
    index = {block: i for i, block in enumerate(blocks)}
    delta = tuple(
        tuple(index[block_of[succ]] for succ in d.delta[min(block)])
        for block in blocks
    )
    merged = Dfa(d.ap, index[block_of[d.initial]],
                 frozenset(index[block_of[n]] for n in d.accepting), delta)
    return renumber(merged)


def step(d, node, symbol):
    return d.step(node, symbol)


def advance_monitor(d, node, labels):
    """
    Advance the monitor by the labels of one MDP transition.

    Labels outside the automaton's propositions are ignored, since the
    environment may report events the objective never mentions.
    """
    node = d.delta[node][d.symbol_index(p for p in labels if p in d.ap)]
    return node, node in d.accepting


def progress_edges(d):
    """
    Map each node to its ``(successor, labels)`` progress edges.

    A progress edge changes the node and is taken by a single event (a
    one-proposition symbol), or silently by the empty symbol. The
    environment emits at most one event per step, so a joint symbol
    leading somewhere no order of its events leads raises
    ``MultiPropositionEdgeError``; joint symbols into dead ends are
    ignored.
    """
    cached = d._cache.get('progress')
    if cached is not None:
        return cached

    edges = {}
    for node in d.nodes:
        row = d.delta[node]
        found = {}
        for i, p in enumerate(d.ap):
            succ = row[1 << i]
            if succ != node:
                found.setdefault(succ, []).append(p)
        if row[0] != node and row[0] not in found:
            found[row[0]] = []
        edges[node] = [(succ, tuple(sorted(found[succ])))
                       for succ in sorted(found)]

    _check_joint_symbols(d, edges)
    d._cache['progress'] = edges
    return edges


def _live_nodes(d):
    """Nodes from which some word reaches an accepting node."""
    reverse = collections.defaultdict(set)
    for node in d.nodes:
        for succ in d.delta[node]:
            reverse[succ].add(node)
    live = set(d.accepting)
    queue = collections.deque(live)
    while queue:
        for pred in reverse[queue.popleft()]:
            if pred not in live:
                live.add(pred)
                queue.append(pred)
    return live


def _check_joint_symbols(d, edges):
    reached = {d.initial}
    queue = collections.deque(reached)
    while queue:
        for succ, _ in edges[queue.popleft()]:
            if succ not in reached:
                reached.add(succ)
                queue.append(succ)

    live = _live_nodes(d)
    for node in sorted(reached):
        for symbol in range(1 << len(d.ap)):
            bits = [1 << i for i in range(len(d.ap)) if symbol >> i & 1]
            succ = d.delta[node][symbol]
            if len(bits) < 2 or succ == node or succ not in live:
                continue
            if any(_after_events(d, node, order) == succ
                   for order in itertools.permutations(bits)):
                continue
            raise MultiPropositionEdgeError(node, succ,
                                            symbol_set(d.ap, symbol))


def _after_events(d, node, order):
    for single in order:
        node = d.delta[node][single]
    return node


def get_trace_paths(d):
    """
    Every simple path of progress edges from the initial node that ends
    on its first accepting node, in lexicographic node order.
    """
    edges = progress_edges(d)
    paths = []

    def visit(nodes, labels):
        node = nodes[-1]
        if node in d.accepting:
            paths.append(TracePath(tuple(nodes), tuple(labels)))
            return
        for succ, names in edges[node]:
            if succ in nodes:
                continue
            nodes.append(succ)
            labels.append(names)
            visit(nodes, labels)
            nodes.pop()
            labels.pop()

    visit([d.initial], [])
    paths.sort(key=lambda p: p.nodes)
    logging.debug('found %d trace paths', len(paths))
    return paths


def require_trace_paths(d):
    paths = get_trace_paths(d)
    if not paths:
        raise UnsatisfiableError(
            'no accepting node is reachable through single events')
    return paths


def occ(path):
    return frozenset(path.nodes)


def _distances(d):
    cached = d._cache.get('distance')
    if cached is not None:
        return cached

    reverse = collections.defaultdict(list)
    for node, outgoing in progress_edges(d).items():
        for succ, _ in outgoing:
            reverse[succ].append(node)

    dist = {n: 0 for n in d.accepting}
    queue = collections.deque(sorted(d.accepting))
    while queue:
        node = queue.popleft()
        for pred in reverse[node]:
            if pred not in dist:
                dist[pred] = dist[node] + 1
                queue.append(pred)

    result = tuple(dist.get(n, math.inf) for n in d.nodes)
    d._cache['distance'] = result
    return result


def accept_distance(d, node):
    return _distances(d)[node]


def export_dot(d, name='dfa'):
    lines = [
        f'digraph {name} {{',
        '  rankdir=LR;',
        '  node [shape=circle];',
        '  start [shape=point];',
        f'  start -> {d.initial};',
    ]
    for node in d.nodes:
        shape = 'doublecircle' if node in d.accepting else 'circle'
        lines.append(f'  {node} [label="q{node}", shape={shape}];')

    full = 1 << len(d.ap)
    for node, succ, symbols in _grouped_edges(d):
        if len(symbols) == full:
            label = 'true'
        else:
            label = ' | '.join(_render_symbol(d.ap, s) for s in symbols)
        lines.append(f'  {node} -> {succ} [label="{label}"];')

    lines.append('}')
    return '\n'.join(lines) + '\n'

