import logging
import re

import pytest

from agcl import utils
from agcl.heap import Heap, Ready


@pytest.mark.parametrize('text,expected', [
    ('200000', 200_000),
    ('200k', 200_000),
    ('200 kilo', 200_000),
    ('2e5', 200_000),
    ('1.5M', 1_500_000),
    ('3 million', 3_000_000),
    (' 7 ', 7),
    (42, 42),
])
def test_parse_count(text, expected):
    assert utils.parse_count(text) == expected


@pytest.mark.parametrize('text', ['', 'k', 'many', '1.5', '-3', '2x'])
def test_parse_count_rejects(text):
    with pytest.raises(utils.CountParseError):
        utils.parse_count(text)


@pytest.mark.parametrize('n,expected', [
    (999, '999'),
    (200_000, '200k'),
    (1_234_567, '1.23M'),
    (3_000_000_000, '3G'),
])
def test_spell_count(n, expected):
    assert utils.spell_count(n) == expected


def test_derive_seed():
    a = utils.derive_seed(0, 'train', 'target')
    assert a == utils.derive_seed(0, 'train', 'target')
    assert a != utils.derive_seed(1, 'train', 'target')
    assert a != utils.derive_seed(0, 'train')
    assert 0 <= a < 2 ** 63


def test_utc_stamp():
    assert re.fullmatch(r'\d{4}-\d\d-\d\dT\d\d:\d\d:\d\dZ', utils.utc_stamp())
    assert utils.utc_now().tzinfo is not None


def test_heap_drains_in_order():
    heap = Heap([Ready(2, 'c'), Ready(0, 'a')])
    heap.push(Ready(1, 'b'))
    assert len(heap) == 3
    assert heap.peek().vertex == 'a'
    assert [r.vertex for r in heap.drain()] == ['a', 'b', 'c']
    assert not heap


def test_heap_pop():
    heap = Heap([Ready(5, 'x'), Ready(3, 'y')])
    assert heap.pop().vertex == 'y'
    assert heap.pop().vertex == 'x'


def test_log_exc(caplog):
    @utils.log_exc
    def explode():
        raise KeyError('boom')

    with caplog.at_level(logging.ERROR):
        with pytest.raises(KeyError):
            explode()

    assert 'Unhandled exception in' in caplog.text
    assert 'explode' in caplog.text


def test_log_exc_passes_results():
    assert utils.log_exc(lambda x: x + 1)(1) == 2
