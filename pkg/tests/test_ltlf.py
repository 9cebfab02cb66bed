import functools
import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agcl.gridworld import POGO_AP, POGO_FORMULA
from agcl.ltlf import (
    TOP, And, Atom, Eventually, LtlfSyntaxError, Not, StateCapError,
    UnknownAtomError, Until, compile_dfa, eval_trace, normalize, parse_ltlf
)


def test_parse_conjunction_of_eventually():
    f = parse_ltlf('F(tree) & F(rock)', ('tree', 'rock'))
    assert f == And(Eventually(Atom('tree')), Eventually(Atom('rock')))


def test_parse_atom():
    assert parse_ltlf('p', ('p',)) == Atom('p')


def test_parse_until_binds_tighter_than_and():
    f = parse_ltlf('!p U r & r', ('p', 'r'))
    assert f == And(Until(Not(Atom('p')), Atom('r')), Atom('r'))


def test_parse_until_right_associative():
    f = parse_ltlf('p U q U r', ('p', 'q', 'r'))
    assert f == Until(Atom('p'), Until(Atom('q'), Atom('r')))


def test_parse_implication_is_disjunction():
    f = parse_ltlf('p -> q', ('p', 'q'))
    assert eval_trace(f, [set()])
    assert not eval_trace(f, [{'p'}])
    assert eval_trace(f, [{'p', 'q'}])


def test_parse_constants():
    assert parse_ltlf('true', ()) == TOP
    assert compile_dfa(parse_ltlf('false', ())).accepting == frozenset()


@pytest.mark.parametrize('text,position', [
    ('F(', 2),
    ('tree &', 6),
    ('tree )', 5),
    ('# tree', 0),
])
def test_syntax_errors_carry_position(text, position):
    with pytest.raises(LtlfSyntaxError) as e:
        parse_ltlf(text, ('tree',))
    assert e.value.position == position


def test_unknown_atom():
    with pytest.raises(UnknownAtomError) as e:
        parse_ltlf('F(x)', ('tree',))
    assert e.value.name == 'x'
    assert e.value.position == 2


def test_eval_trace_examples():
    tree_rock = parse_ltlf('F(tree) & F(rock)', ('rock', 'tree'))
    assert eval_trace(tree_rock, [{'tree'}, {'rock'}])
    assert not eval_trace(tree_rock, [{'tree'}, set()])

    always = parse_ltlf('G p', ('p',))
    assert eval_trace(always, [{'p'}, {'p'}, {'p'}])
    assert not eval_trace(always, [{'p'}, set()])

    pogo = parse_ltlf(POGO_FORMULA, POGO_AP)
    assert eval_trace(pogo, [{'tree'}, {'rock'}, {'tree'}, {'pogo'}])
    assert not eval_trace(pogo, [{'pogo'}])
    assert not eval_trace(pogo, [{'tree'}, {'rock'}, {'pogo'}])


def test_empty_trace_satisfies_nothing():
    assert not eval_trace(TOP, [])


def test_next_needs_a_next_position():
    f = parse_ltlf('X p', ('p',))
    assert not eval_trace(f, [{'p'}])
    assert eval_trace(f, [set(), {'p'}])


def test_normalize_folds_and_sorts():
    p, q = Atom('p'), Atom('q')
    assert normalize(And(q, And(p, q))) == normalize(And(p, q))
    assert normalize(Not(Not(p))) == p
    assert normalize(And(p, Not(p))).kind == 'false'


def test_compile_eventually():
    d = compile_dfa(parse_ltlf('F p', ('p',)))
    assert d.n_states == 2
    assert d.step(0, set()) == 0
    assert d.step(0, {'p'}) in d.accepting
    assert 0 not in d.accepting


def test_compile_tree_rock(tree_rock_dfa):
    assert tree_rock_dfa.n_states == 4
    assert len(tree_rock_dfa.accepting) == 1


def test_compile_tautology():
    # The empty trace is rejected, so the initial node stays apart.
    d = compile_dfa(parse_ltlf('p | !p', ('p',)))
    assert d.n_states == 2
    assert not d.accepts([])
    assert all(d.accepts([s]) for s in (set(), {'p'}))
    accepting = next(iter(d.accepting))
    assert set(d.delta[accepting]) == {accepting}


def test_compile_pogo(pogo_dfa):
    assert pogo_dfa.n_states == 8
    assert pogo_dfa.accepts([{'tree'}, {'tree'}, {'rock'}, {'pogo'}])


def test_compile_extra_propositions():
    d = compile_dfa(parse_ltlf('F p', ('p', 'q')), ('p', 'q'))
    assert d.ap == ('p', 'q')
    assert d.accepts([{'q'}, {'p', 'q'}])


def test_compile_missing_proposition():
    with pytest.raises(UnknownAtomError):
        compile_dfa(parse_ltlf('F p & F q', ('p', 'q')), ('p',))


def test_state_cap():
    with pytest.raises(StateCapError):
        compile_dfa(parse_ltlf(POGO_FORMULA, POGO_AP), POGO_AP, state_cap=3)


SUITE = [
    ('F p', ('p',)),
    ('G p', ('p',)),
    ('!p U r', ('p', 'r')),
    ('F(tree) & F(rock)', ('rock', 'tree')),
    ('X(p) | G(!q)', ('p', 'q')),
]


@pytest.mark.parametrize('text,ap', SUITE)
def test_compiled_matches_semantics_exhaustively(text, ap):
    f = parse_ltlf(text, ap)
    d = compile_dfa(f, ap)
    symbols = [frozenset(c) for n in range(len(ap) + 1)
               for c in itertools.combinations(ap, n)]
    for n in range(5):
        for trace in itertools.product(symbols, repeat=n):
            assert d.accepts(trace) == eval_trace(f, trace), trace


@functools.lru_cache(maxsize=None)
def _pogo():
    f = parse_ltlf(POGO_FORMULA, POGO_AP)
    return f, compile_dfa(f, POGO_AP)


@given(st.lists(st.frozensets(st.sampled_from(POGO_AP)), max_size=6))
@settings(deadline=None, max_examples=300)
def test_pogo_matches_semantics(trace):
    f, d = _pogo()
    assert d.accepts(trace) == eval_trace(f, trace)
