import pytest

from src.adafl.config import ConfigError, load_config
from src.adafl.harness import BASE_VARIANT, aggregate_summaries, compare_variants, run_single


def _summary(average, cost, stopping):
    return {
        'average_last': average,
        'best_accuracy': average,
        'accuracy_std_last': 0.01,
        'total_cost': cost,
        'client_accuracy_std': 0.1,
        'targets': [{'target': 0.8, 'stopping_round': stopping, 'cost': None if stopping is None else stopping * 10}],
    }


def test_aggregate_averages_over_seeds():
    row = aggregate_summaries([_summary(0.6, 100, 4), _summary(0.8, 120, 6)])
    assert row['runs'] == 2
    assert row['average_last'] == pytest.approx(0.7)
    assert row['total_cost'] == 110
    assert row['targets'] == [{'target': 0.8, 'reached': 2, 'stopping_round': 5.0, 'cost': 50.0}]


def test_target_missed_by_one_seed_has_no_mean():
    row = aggregate_summaries([_summary(0.6, 100, 4), _summary(0.8, 120, None)])
    assert row['targets'][0]['reached'] == 1
    assert row['targets'][0]['stopping_round'] is None
    assert row['targets'][0]['cost'] is None


def test_run_single_echoes_config(write_config):
    config = load_config(write_config())
    result = run_single(config, progress=False)
    assert result.config['seed'] == 3
    assert 'variants' not in result.config
    assert len(result.records) == 10


def test_compare_runs_base_and_selected_variants(write_config):
    config = load_config(write_config())
    comparison = compare_variants(config, seeds=[5], variants=[], progress=False)
    assert comparison['seeds'] == [5]
    assert list(comparison['variants']) == [BASE_VARIANT]

    both = compare_variants(config, seeds=[5], progress=False)
    assert list(both['variants']) == [BASE_VARIANT, 'fedavg-0.2']
    assert both['variants'][BASE_VARIANT] == comparison['variants'][BASE_VARIANT]


def test_compare_rejects_bad_seed_before_running(write_config, monkeypatch):
    calls = []
    monkeypatch.setattr('src.adafl.harness.run_experiment', lambda *a, **k: calls.append(a))
    config = load_config(write_config())
    with pytest.raises(ConfigError):
        compare_variants(config, seeds=[1, -1], progress=False)
    assert calls == []
