import json
from pathlib import Path

import pytest

from src.adafl.cli import run_cli

REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture(autouse=True)
def quiet_progress(monkeypatch):
    monkeypatch.setenv('ADAFL_PROGRESS', '0')


def test_validate(write_config, capsys):
    path = write_config()
    assert run_cli(['validate', str(path)]) == 0
    out = capsys.readouterr().out
    assert 'Config OK' in out
    assert 'fedavg-0.2' in out


def test_nonexistent_config(tmp_path, capsys):
    assert run_cli(['validate', str(tmp_path / 'missing.json')]) != 0
    assert 'Error:' in capsys.readouterr().err


def test_missing_subcommand(capsys):
    assert run_cli([]) == 2


def test_bad_override(write_config, capsys):
    code = run_cli(['run', str(write_config()), '--override', 'selection.alpah=0.5'])
    assert code == 1
    assert "unknown key 'alpah'" in capsys.readouterr().err


@pytest.mark.parametrize('command', ['validate', 'run'])
def test_negative_seed_is_rejected(write_config, tmp_path, capsys, command):
    code = run_cli([command, str(write_config()), '--seed', '-1', '--out', str(tmp_path / 'neg')])
    assert code == 1
    assert 'non-negative integer seed' in capsys.readouterr().err
    assert not (tmp_path / 'neg' / 'trace.csv').exists()


def test_compare_rejects_negative_seed(write_config, tmp_path, capsys):
    code = run_cli(['compare', str(write_config()), '--seeds', '1', '-2', '--out', str(tmp_path / 'cmp')])
    assert code == 1
    assert 'Error:' in capsys.readouterr().err


def test_run_writes_trace_and_summary(write_config, tmp_path, capsys):
    out_dir = tmp_path / 'run'
    assert run_cli(['run', str(write_config()), '--out', str(out_dir)]) == 0

    lines = (out_dir / 'trace.csv').read_text(encoding='utf-8').splitlines()
    assert len(lines) == 1 + 10
    summary = json.loads((out_dir / 'summary.json').read_text(encoding='utf-8'))
    assert summary['seed'] == 3
    assert summary['config']['federation']['num_rounds'] == 10
    assert [t['target'] for t in summary['summary']['targets']] == [0.3, 0.99]
    assert '--- Experiment Complete ---' in capsys.readouterr().out


def test_same_seed_gives_identical_traces(write_config, tmp_path):
    path = str(write_config())
    assert run_cli(['run', path, '--seed', '7', '--out', str(tmp_path / 'a')]) == 0
    assert run_cli(['run', path, '--seed', '7', '--out', str(tmp_path / 'b')]) == 0
    first = (tmp_path / 'a' / 'trace.csv').read_bytes()
    second = (tmp_path / 'b' / 'trace.csv').read_bytes()
    assert first == second


def test_different_seeds_differ(write_config, tmp_path):
    path = str(write_config())
    run_cli(['run', path, '--seed', '7', '--out', str(tmp_path / 'a')])
    run_cli(['run', path, '--seed', '8', '--out', str(tmp_path / 'b')])
    assert (tmp_path / 'a' / 'trace.csv').read_bytes() != (tmp_path / 'b' / 'trace.csv').read_bytes()


def test_run_variant(write_config, tmp_path):
    out_dir = tmp_path / 'variant'
    assert run_cli(['run', str(write_config()), '--variant', 'fedavg-0.2', '--out', str(out_dir)]) == 0
    rows = (out_dir / 'trace.csv').read_text(encoding='utf-8').splitlines()[1:]
    assert {row.split(',')[2] for row in rows} == {'2'}


def test_schedule_prints_step_blocks(capsys):
    assert run_cli(['schedule', str(REPO_ROOT / 'config.example.json')]) == 0
    out = capsys.readouterr().out
    block_rows = [line.split() for line in out.splitlines() if line[:1].isdigit()]
    assert [row[2] for row in block_rows] == ['0.1', '0.2', '0.3', '0.4', '0.5']
    assert [row[1] for row in block_rows] == ['1-60', '61-120', '121-180', '181-240', '241-300']
    assert 'Projected max cost: 9000 units' in out


def test_compare_writes_comparison(write_config, tmp_path, capsys):
    out_dir = tmp_path / 'cmp'
    code = run_cli(['compare', str(write_config()), '--seeds', '1', '2', '--out', str(out_dir)])
    assert code == 0

    comparison = json.loads((out_dir / 'comparison.json').read_text(encoding='utf-8'))
    assert comparison['seeds'] == [1, 2]
    assert set(comparison['variants']) == {'base', 'fedavg-0.2'}
    assert comparison['variants']['base']['runs'] == 2
    assert comparison['variants']['fedavg-0.2']['total_cost'] == 20
    assert 'fedavg-0.2' in capsys.readouterr().out
