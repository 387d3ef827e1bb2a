import json

import numpy as np
import pytest

from src.adafl.data import generate_synthetic
from src.adafl.model import Layer, MlpModel


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_dataset():
    return generate_synthetic(n_samples=30, n_features=4, n_classes=3, cluster_spread=0.5, seed=11)


@pytest.fixture
def toy_model():
    return MlpModel.initialize((4, 5, 3), np.random.default_rng(5))


@pytest.fixture
def saturated_model():
    """Single-layer 2-input, 3-class model whose softmax output is exactly one-hot on class 0."""
    bias = np.array([800.0, 0.0, 0.0])
    return MlpModel([Layer(np.zeros((3, 2)), bias)])


def small_raw_config(output_dir, **sections):
    """A run config small enough to execute in well under a second."""
    raw = {
        'seed': 3,
        'model': {'hidden_sizes': [8]},
        'data': {
            'source': 'synthetic',
            'n_samples': 200,
            'n_test': 50,
            'n_features': 5,
            'n_classes': 4,
            'cluster_spread': 0.8,
            'partition': 'shards',
            'shards_per_client': 2,
        },
        'selection': {'gamma_start': 0.2, 'gamma_end': 0.4, 'num_fractions': 2, 'alpha': 0.9, 'attention': True},
        'strategy': {'name': 'fedavg', 'epochs': 1, 'batch_size': 10, 'learning_rate': 0.05, 'momentum': 0.5},
        'federation': {'num_clients': 10, 'num_rounds': 10, 'lr_decay': 1.0, 'eval_every': 1, 'workers': 1},
        'harness': {
            'output_dir': str(output_dir),
            'targets': [0.3, 0.99],
            'metric_window': 5,
            'stopping_window': 3,
            'stability_window': 5,
            'seeds': [1, 2],
        },
        'variants': {
            'fedavg-0.2': {'selection.attention': False, 'selection.gamma_end': 0.2, 'selection.num_fractions': 1},
        },
    }
    for section, values in sections.items():
        if isinstance(values, dict):
            raw.setdefault(section, {}).update(values)
        else:
            raw[section] = values
    return raw


@pytest.fixture
def write_config(tmp_path):
    """Write a small JSON config; keyword sections are merged over the defaults."""
    def _write(name='config.json', **sections):
        path = tmp_path / name
        raw = small_raw_config(tmp_path / 'out', **sections)
        path.write_text(json.dumps(raw), encoding='utf-8')
        return path
    return _write
