import csv
import sqlite3

import pytest

from agcl.database import DB_VERSION, Database, Phase


@pytest.fixture
def db(tmp_path):
    with Database(str(tmp_path / 'runs.db')) as db:
        yield db


def _phase(method='graph', seed=0, phase=0, is_target=False, offset=0):
    return Phase(method, seed, phase, f'v{phase}', is_target, 100, 40,
                 offset, 0.5, False)


def test_phases_and_curves(db):
    db.add_phase(_phase(), [(50, 0.25), (100, 0.5)])
    db.add_phase(_phase(phase=1, is_target=True, offset=100),
                 [(150, 0.75)])

    phases = list(db.iter_phases('graph', 0))
    assert [p.phase for p in phases] == [0, 1]
    assert phases[1].is_target is True
    assert phases[0].early_stop is False
    assert phases[1].offset == 100

    curve = list(db.iter_curve('graph'))
    assert [(p.cumulative_steps, p.eval_success) for p in curve] == [
        (50, 0.25), (100, 0.5), (150, 0.75)]


def test_results(db):
    db.set_result('graph', 1, None)
    db.set_result('graph', 0, 1234)
    db.set_result('scratch', 0, 5000)

    results = list(db.iter_results('graph'))
    assert [(r.seed, r.time_to_threshold, r.reached) for r in results] == [
        (0, 1234, True), (1, None, False)]
    assert db.methods() == ['graph', 'scratch']


def test_clear_run(db):
    db.add_phase(_phase(seed=0), [(10, 0.1)])
    db.add_phase(_phase(seed=1), [(10, 0.1)])
    db.set_result('graph', 0, 10)
    db.clear_run('graph', 0)

    assert [p.seed for p in db.iter_phases()] == [1]
    assert [p.seed for p in db.iter_curve()] == [1]
    assert list(db.iter_results()) == []


def test_export_summary_reports_budget_when_not_reached(db, tmp_path):
    db.set_result('graph', 0, 1234)
    db.set_result('graph', 1, None)
    path = tmp_path / 'summary.csv'
    db.export_summary(str(path), 9000)

    with open(path, newline='') as fd:
        rows = list(csv.reader(fd))
    assert rows == [
        ['method', 'seed', 'time_to_threshold', 'reached'],
        ['graph', '0', '1234', '1'],
        ['graph', '1', '9000', '0'],
    ]


def test_export_curves(db, tmp_path):
    db.add_phase(_phase(), [(100, 0.1)])
    path = tmp_path / 'curves.csv'
    db.export_curves(str(path))
    assert path.read_text().splitlines() == [
        'method,seed,phase,cumulative_steps,eval_success',
        'graph,0,0,100,0.1',
    ]


def test_old_layout_is_recreated(tmp_path):
    path = str(tmp_path / 'runs.db')
    with Database(path) as db:
        db.set_result('graph', 0, 10)

    conn = sqlite3.connect(path)
    conn.execute('UPDATE Version SET Version = ?', (DB_VERSION - 1,))
    conn.commit()
    conn.close()

    with Database(path) as db:
        assert list(db.iter_results()) == []

    conn = sqlite3.connect(path)
    assert conn.execute('SELECT Version FROM Version').fetchall() == [
        (DB_VERSION,)]
    conn.close()


def test_reopen_keeps_rows(tmp_path):
    path = str(tmp_path / 'runs.db')
    with Database(path) as db:
        db.set_result('graph', 0, 10)
    with Database(path) as db:
        assert [r.time_to_threshold for r in db.iter_results()] == [10]
