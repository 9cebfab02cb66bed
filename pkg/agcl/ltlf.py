"""
Finite-trace temporal logic: parsing, trace semantics and compilation
into minimal automata.

Compilation progresses the formula over every symbol of ``2^AP``. A
state is the pair ``(obligation, accepting)``: the obligation the rest
of the trace still has to meet, and whether the trace read so far
already satisfies the formula if it ends right there. The empty trace
satisfies nothing, so the initial state is never accepting.
"""
import functools
import logging
import re
from dataclasses import dataclass

from .automaton import Dfa, minimize, symbol_set
from .constants import STATE_CAP


class LtlfSyntaxError(ValueError):
    def __init__(self, message, position):
        super().__init__(f'{message} at position {position}')
        self.position = position


class UnknownAtomError(ValueError):
    def __init__(self, name, position=None):
        super().__init__(f'unknown atomic proposition {name!r}')
        self.name = name
        self.position = position


class StateCapError(RuntimeError):
    pass


ATOM = 'atom'
TRUE = 'true'
FALSE = 'false'
NOT = 'not'
AND = 'and'
OR = 'or'
IMPLIES = 'implies'
NEXT = 'next'
ALWAYS = 'always'
EVENTUALLY = 'eventually'
UNTIL = 'until'

_UNARY = {NOT: '!', NEXT: 'X', ALWAYS: 'G', EVENTUALLY: 'F'}
_BINARY = {AND: '&', OR: '|', IMPLIES: '->', UNTIL: 'U'}


@dataclass(frozen=True)
class Formula:
    kind: str
    children: tuple = ()
    name: str = None

    def __str__(self):
        return _render(self)

    def atoms(self):
        if self.kind == ATOM:
            return frozenset((self.name,))
        return frozenset().union(*(c.atoms() for c in self.children))


def Atom(name):
    return Formula(ATOM, name=name)


def Not(f):
    return Formula(NOT, (f,))


def And(a, b):
    return Formula(AND, (a, b))


def Or(a, b):
    return Formula(OR, (a, b))


def Implies(a, b):
    return Formula(IMPLIES, (a, b))


def Next(f):
    return Formula(NEXT, (f,))


def Always(f):
    return Formula(ALWAYS, (f,))


def Eventually(f):
    return Formula(EVENTUALLY, (f,))


def Until(a, b):
    return Formula(UNTIL, (a, b))


TOP = Formula(TRUE)
BOTTOM = Formula(FALSE)


@functools.lru_cache(maxsize=None)
def _render(f):
    if f.kind == ATOM:
        return f.name
    if f.kind in (TRUE, FALSE):
        return f.kind
    if f.kind in _UNARY:
        return f'{_UNARY[f.kind]}({_render(f.children[0])})'
    op = f' {_BINARY[f.kind]} '
    return '(' + op.join(_render(c) for c in f.children) + ')'


# Parsing

_TOKEN = re.compile(
    r'\s*(?:'
    r'(?P<arrow>->)'
    r'|(?P<op>[!&|()])'
    r'|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)'
    r')'
)

_KEYWORDS = {'X', 'F', 'G', 'U'}
_CONSTANTS = {'true': TOP, 'false': BOTTOM}


def _tokenize(text):
    tokens = []
    pos = 0
    while True:
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            rest = text[pos:]
            if rest.strip():
                raise LtlfSyntaxError(
                    f'unexpected {rest.strip()[0]!r}',
                    pos + len(rest) - len(rest.lstrip()))
            break

        value = m.group(m.lastgroup)
        tokens.append((value, m.start(m.lastgroup), m.lastgroup))
        pos = m.end()

    tokens.append(('', len(text), 'end'))
    return tokens


class _Parser:
    def __init__(self, text, ap):
        self._tokens = _tokenize(text)
        self._i = 0
        self._ap = ap

    def _peek(self):
        return self._tokens[self._i]

    def _take(self, value=None):
        token = self._tokens[self._i]
        if value is not None and token[0] != value:
            what = repr(token[0]) if token[0] else 'end of input'
            raise LtlfSyntaxError(f'expected {value!r}, got {what}', token[1])
        self._i += 1
        return token

    def parse(self):
        f = self._implies()
        value, pos, _ = self._peek()
        if value:
            raise LtlfSyntaxError(f'unexpected {value!r}', pos)
        return f

    def _implies(self):
        left = self._or()
        if self._peek()[0] == '->':
            self._take()
            return Or(Not(left), self._implies())
        return left

    def _or(self):
        f = self._and()
        while self._peek()[0] == '|':
            self._take()
            f = Or(f, self._and())
        return f

    def _and(self):
        f = self._until()
        while self._peek()[0] == '&':
            self._take()
            f = And(f, self._until())
        return f

    def _until(self):
        left = self._unary()
        if self._peek()[0] == 'U' and self._peek()[2] == 'ident':
            self._take()
            return Until(left, self._until())
        return left

    def _unary(self):
        value, pos, kind = self._take()
        if value == '!':
            return Not(self._unary())
        if kind == 'ident' and value in ('X', 'F', 'G'):
            child = self._unary()
            return {'X': Next, 'F': Eventually, 'G': Always}[value](child)
        if value == '(':
            f = self._implies()
            self._take(')')
            return f
        if kind == 'ident' and value not in _KEYWORDS:
            if value in self._ap:
                return Atom(value)
            if value in _CONSTANTS:
                return _CONSTANTS[value]
            raise UnknownAtomError(value, pos)

        what = repr(value) if value else 'end of input'
        raise LtlfSyntaxError(f'expected a formula, got {what}', pos)


def parse_ltlf(text, ap):
    """
    Parse ``text`` into a formula over the propositions ``ap``.

    Precedence from loosest to tightest: ``->`` (right associative),
    ``|``, ``&``, ``U`` (right associative), then the prefix operators
    ``! X F G``. ``a -> b`` is read as ``!a | b``.
    """
    return _Parser(text, frozenset(ap)).parse()


# Semantics

def eval_trace(f, trace):
    """
    Whether the finite trace satisfies ``f`` at its first position.

    ``X`` needs a next position to exist. The empty trace satisfies no
    formula.
    """
    trace = [frozenset(s) for s in trace]
    n = len(trace)
    if n == 0:
        return False

    @functools.lru_cache(maxsize=None)
    def holds(g, i):
        k = g.kind
        if k == ATOM:
            return g.name in trace[i]
        if k == TRUE:
            return True
        if k == FALSE:
            return False
        if k == NOT:
            return not holds(g.children[0], i)
        if k == AND:
            return all(holds(c, i) for c in g.children)
        if k == OR:
            return any(holds(c, i) for c in g.children)
        if k == IMPLIES:
            return not holds(g.children[0], i) or holds(g.children[1], i)
        if k == NEXT:
            return i + 1 < n and holds(g.children[0], i + 1)
        if k == ALWAYS:
            return all(holds(g.children[0], j) for j in range(i, n))
        if k == EVENTUALLY:
            return any(holds(g.children[0], j) for j in range(i, n))
        if k == UNTIL:
            a, b = g.children
            for j in range(i, n):
                if holds(b, j):
                    return True
                if not holds(a, j):
                    return False
            return False
        raise ValueError(f'unknown formula kind {k!r}')

    return holds(f, 0)


# Progression

def normalize(f):
    """
    Flatten nested conjunctions and disjunctions, sort and deduplicate
    their operands, fold constants and drop double negations.
    """
    k = f.kind
    if k in (ATOM, TRUE, FALSE):
        return f
    if k == IMPLIES:
        return normalize(Or(Not(f.children[0]), f.children[1]))
    if k == NOT:
        g = normalize(f.children[0])
        if g.kind == NOT:
            return g.children[0]
        if g.kind == TRUE:
            return BOTTOM
        if g.kind == FALSE:
            return TOP
        return Not(g)
    if k in (AND, OR):
        absorbing, neutral = (BOTTOM, TOP) if k == AND else (TOP, BOTTOM)
        operands = {}
        stack = [normalize(c) for c in f.children]
        while stack:
            g = stack.pop()
            if g.kind == k:
                stack.extend(g.children)
            elif g == absorbing:
                return absorbing
            elif g != neutral:
                operands[_render(g)] = g

        for g in operands.values():
            negated = g.children[0] if g.kind == NOT else Not(g)
            if _render(negated) in operands:
                return absorbing

        if not operands:
            return neutral
        if len(operands) == 1:
            return next(iter(operands.values()))
        return Formula(k, tuple(operands[key] for key in sorted(operands)))

    return Formula(k, tuple(normalize(c) for c in f.children))


def _progress(f, symbol):
    # Obligation on a nonempty rest of the trace after reading `symbol`.
    k = f.kind
    if k == ATOM:
        return TOP if f.name in symbol else BOTTOM
    if k in (TRUE, FALSE):
        return f
    if k == NOT:
        return Not(_progress(f.children[0], symbol))
    if k in (AND, OR):
        return Formula(k, tuple(_progress(c, symbol) for c in f.children))
    if k == IMPLIES:
        a, b = f.children
        return Or(Not(_progress(a, symbol)), _progress(b, symbol))
    if k == NEXT:
        return f.children[0]
    if k == EVENTUALLY:
        return Or(_progress(f.children[0], symbol), f)
    if k == ALWAYS:
        return And(_progress(f.children[0], symbol), f)
    if k == UNTIL:
        a, b = f.children
        return Or(_progress(b, symbol), And(_progress(a, symbol), f))
    raise ValueError(f'unknown formula kind {k!r}')


def _last(f, symbol):
    # Whether the one-symbol trace [symbol] satisfies `f`.
    k = f.kind
    if k == ATOM:
        return f.name in symbol
    if k == TRUE:
        return True
    if k == FALSE:
        return False
    if k == NOT:
        return not _last(f.children[0], symbol)
    if k == AND:
        return all(_last(c, symbol) for c in f.children)
    if k == OR:
        return any(_last(c, symbol) for c in f.children)
    if k == IMPLIES:
        return not _last(f.children[0], symbol) or _last(f.children[1], symbol)
    if k == NEXT:
        return False
    if k in (ALWAYS, EVENTUALLY):
        return _last(f.children[0], symbol)
    if k == UNTIL:
        return _last(f.children[1], symbol)
    raise ValueError(f'unknown formula kind {k!r}')


def compile_dfa(f, ap=None, state_cap=STATE_CAP):
    """
    Compile ``f`` into the complete minimal automaton over ``2^ap``.

    ``ap`` defaults to the propositions the formula mentions. Raises
    ``StateCapError`` when progression needs more than ``state_cap``
    states.
    """
    ap = tuple(sorted(f.atoms() if ap is None else ap))
    missing = f.atoms() - set(ap)
    if missing:
        raise UnknownAtomError(sorted(missing)[0])

    symbols = [symbol_set(ap, s) for s in range(1 << len(ap))]
    start = (normalize(f), False)
    index = {start: 0}
    states = [start]
    delta = []
    i = 0
    while i < len(states):
        obligation, _ = states[i]
        row = []
        for symbol in symbols:
            succ = (normalize(_progress(obligation, symbol)),
                    _last(obligation, symbol))
            if succ not in index:
                if len(states) >= state_cap:
                    raise StateCapError(
                        f'progression of {f} needs more than '
                        f'{state_cap} states')
                index[succ] = len(states)
                states.append(succ)
            row.append(index[succ])
        delta.append(tuple(row))
        i += 1

    accepting = frozenset(n for n, (_, ok) in enumerate(states) if ok)
    dfa = minimize(Dfa(ap, 0, accepting, tuple(delta)))
    logging.info('compiled %s into %d states (%d before minimization)',
                 f, dfa.n_states, len(states))
    return dfa
