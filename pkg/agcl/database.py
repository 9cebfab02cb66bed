import collections
import csv
import sqlite3
import threading

DB_VERSION = 2


Phase = collections.namedtuple(
    'Phase', 'method seed phase vertex is_target steps eval_steps offset '
             'final_success early_stop')

CurvePoint = collections.namedtuple(
    'CurvePoint', 'method seed phase cumulative_steps eval_success')

Result = collections.namedtuple(
    'Result', 'method seed time_to_threshold reached')


class Database:
    """
    Per-run store of training phases, learning curves and results.

    Every export orders by all key columns, so two stores holding the
    same rows export the same bytes.
    """
    def __init__(self, filename):
        self._filename = filename
        self._conns = {}
        self._lock = threading.Lock()

        c = self._cursor()
        c.execute("SELECT name FROM sqlite_master "
                  "WHERE type='table' AND name='Version'")

        if c.fetchone():
            c.execute('SELECT Version FROM Version')
            version = c.fetchone()[0]
            if version != DB_VERSION:
                # Runs are cheap to redo, old layouts are not migrated.
                for table in ('Phases', 'Curves', 'Results'):
                    c.execute(f'DROP TABLE IF EXISTS {table}')
                self._set_version(c, drop=True)
                self._create_tables(c)
                self._save()
        else:
            self._set_version(c, drop=False)
            self._create_tables(c)
            self._save()
        c.close()

    @staticmethod
    def _create_tables(c):
        c.execute('CREATE TABLE Phases('
                  'Method TEXT NOT NULL,'
                  'Seed INTEGER NOT NULL,'
                  'Phase INTEGER NOT NULL,'
                  'Vertex TEXT NOT NULL,'
                  'IsTarget INTEGER NOT NULL,'
                  'Steps INTEGER NOT NULL,'
                  'EvalSteps INTEGER NOT NULL,'  # never part of the step totals
                  'Offset INTEGER NOT NULL,'
                  'FinalSuccess REAL NOT NULL,'
                  'EarlyStop INTEGER NOT NULL,'
                  'PRIMARY KEY (Method, Seed, Phase))')

        c.execute('CREATE TABLE Curves('
                  'Method TEXT NOT NULL,'
                  'Seed INTEGER NOT NULL,'
                  'Phase INTEGER NOT NULL,'
                  'CumulativeSteps INTEGER NOT NULL,'
                  'EvalSuccess REAL NOT NULL,'
                  'PRIMARY KEY (Method, Seed, Phase, CumulativeSteps))')

        c.execute('CREATE TABLE Results('
                  'Method TEXT NOT NULL,'
                  'Seed INTEGER NOT NULL,'
                  'TimeToThreshold INTEGER,'  # NULL when never reached
                  'Reached INTEGER NOT NULL,'
                  'PRIMARY KEY (Method, Seed))')

    @staticmethod
    def _set_version(c, *, drop):
        if drop:
            c.execute('DROP TABLE Version')

        c.execute('CREATE TABLE Version (Version INTEGER)')
        c.execute('INSERT INTO Version VALUES (?)', (DB_VERSION,))

    def __enter__(self):
        return self

    def __exit__(self, *args):
        for conn in self._conns.values():
            try:
                conn.close()
            except sqlite3.Error:
                pass
        self._conns.clear()

    def _save(self):
        conn = self._conns.get(threading.get_ident())
        if conn:
            conn.commit()

    def _cursor(self):
        conn = self._conns.get(threading.get_ident())
        if conn is None:
            self._conns[threading.get_ident()] = conn =\
                sqlite3.connect(self._filename)
        return conn.cursor()

    def clear_run(self, method, seed):
        with self._lock:
            c = self._cursor()
            for table in ('Phases', 'Curves', 'Results'):
                c.execute(f'DELETE FROM {table} WHERE Method = ? AND Seed = ?',
                          (method, seed))
            c.close()
            self._save()

    def add_phase(self, phase, points):
        """
        Store one training phase with its ``(cumulative_steps, success)``
        evaluation points.
        """
        with self._lock:
            c = self._cursor()
            c.execute('INSERT OR REPLACE INTO Phases VALUES '
                      '(?, ?, ?, ?, ?, ?, ?, ?, ?, ?)',
                      (phase.method, phase.seed, phase.phase, phase.vertex,
                       int(phase.is_target), phase.steps, phase.eval_steps,
                       phase.offset, phase.final_success,
                       int(phase.early_stop)))
            c.executemany('INSERT OR REPLACE INTO Curves VALUES (?, ?, ?, ?, ?)',
                          [(phase.method, phase.seed, phase.phase, steps, rate)
                           for steps, rate in points])
            c.close()
            self._save()

    def set_result(self, method, seed, time_to_threshold):
        with self._lock:
            c = self._cursor()
            c.execute('INSERT OR REPLACE INTO Results VALUES (?, ?, ?, ?)',
                      (method, seed, time_to_threshold,
                       int(time_to_threshold is not None)))
            c.close()
            self._save()

    def _select(self, table, cls, order, method=None, seed=None):
        c = self._cursor()
        where = []
        params = []
        if method is not None:
            where.append('Method = ?')
            params.append(method)

        if seed is not None:
            where.append('Seed = ?')
            params.append(seed)

        if where:
            where = 'WHERE ' + ' AND '.join(where)
        else:
            where = ''

        c.execute(f'SELECT * FROM {table} {where} ORDER BY {order}',
                  tuple(params))

        row = c.fetchone()
        while row:
            yield cls(*row)
            row = c.fetchone()

        c.close()

    def iter_phases(self, method=None, seed=None):
        for row in self._select('Phases', Phase, 'Method, Seed, Phase',
                                method, seed):
            yield row._replace(is_target=bool(row.is_target),
                               early_stop=bool(row.early_stop))

    def iter_curve(self, method=None, seed=None):
        yield from self._select('Curves', CurvePoint,
                                'Method, Seed, Phase, CumulativeSteps',
                                method, seed)

    def iter_results(self, method=None):
        for row in self._select('Results', Result, 'Method, Seed', method):
            yield row._replace(reached=bool(row.reached))

    def methods(self):
        c = self._cursor()
        c.execute('SELECT DISTINCT Method FROM Results ORDER BY Method')
        found = [row[0] for row in c.fetchall()]
        c.close()
        return found

    def export_curves(self, path):
        with open(path, 'w', newline='', encoding='utf-8') as fd:
            w = csv.writer(fd, lineterminator='\n')
            w.writerow(CurvePoint._fields)
            for p in self.iter_curve():
                w.writerow((p.method, p.seed, p.phase, p.cumulative_steps,
                            repr(p.eval_success)))

    def export_summary(self, path, budget):
        """
        One row per run; runs that never reached the threshold report the
        budget with ``reached`` false.
        """
        with open(path, 'w', newline='', encoding='utf-8') as fd:
            w = csv.writer(fd, lineterminator='\n')
            w.writerow(Result._fields)
            for r in self.iter_results():
                steps = r.time_to_threshold if r.reached else budget
                w.writerow((r.method, r.seed, steps, int(r.reached)))
