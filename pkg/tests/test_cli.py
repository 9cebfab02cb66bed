import json

from agcl.__main__ import main

from conftest import config_path


def test_compile(capsys):
    assert main(['-q', 'compile', 'F(tree) & F(rock)', '--ap',
                 'rock,tree']) == 0
    out = json.loads(capsys.readouterr().out)
    assert out['states'] == 4
    assert out['ap'] == ['rock', 'tree']
    assert out['paths'] == [[0, 1, 3], [0, 2, 3]]


def test_compile_to_directory(tmp_path):
    assert main(['-q', 'compile', 'F p', '--ap', 'p',
                 '--out', str(tmp_path)]) == 0
    assert json.loads((tmp_path / 'dfa.json').read_text())['states'] == 2
    assert (tmp_path / 'dfa.dot').read_text().startswith('digraph')


def test_compile_syntax_error(capsys):
    assert main(['-q', 'compile', 'F(', '--ap', 'p']) == 1
    error = json.loads(capsys.readouterr().err.splitlines()[-1])
    assert error['error'] == 'LtlfSyntaxError'


def test_plan(tmp_path):
    assert main(['-q', 'plan', str(config_path('tree-rock.json')),
                 '--mode', 'graph', '--out', str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / 'manifest.json').read_text())
    assert list(manifest['curricula']) == ['graph']
    assert len(manifest['curricula']['graph']['vertices']) == 3
    assert (tmp_path / 'curriculum-graph.dot').exists()
    assert (tmp_path / 'dfa.dot').exists()


def test_bad_config(tmp_path, capsys):
    data = json.loads(config_path('tree-rock.json').read_text())
    data['sampling'] = {'bb': 3}
    path = tmp_path / 'bad.json'
    path.write_text(json.dumps(data))

    assert main(['-q', 'plan', str(path)]) == 1
    error = json.loads(capsys.readouterr().err.splitlines()[-1])
    assert error == {'error': 'ConfigError',
                     'message': "sampling.bb: unknown key 'bb'",
                     'field': 'sampling.bb'}


def test_selftest(capsys):
    assert main(['-q', 'selftest', '--only', 'transfer']) == 0
    [line] = capsys.readouterr().out.splitlines()
    check = json.loads(line)
    assert check['name'] == 'transfer' and check['ok']


def test_compile_joint_only_edge(capsys):
    assert main(['-q', 'compile', 'F(p & q) | F(r & X(r))', '--ap',
                 'p,q,r']) == 1
    error = json.loads(capsys.readouterr().err.splitlines()[-1])
    assert error['error'] == 'MultiPropositionEdgeError'
