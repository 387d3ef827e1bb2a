"""End-to-end comparison on the shipped synthetic workload.

Runs the full 300-round experiment for three seeds per variant; deselected
by default, run with `pytest -m slow`. Local training uses ADAFL_WORKERS
threads since the shipped config leaves federation.workers unset.
"""

from pathlib import Path

import pytest

from src.adafl.config import load_config
from src.adafl.harness import BASE_VARIANT, compare_variants

REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.mark.slow
def test_adaptive_selection_is_steadier_than_fixed_low_fraction():
    config = load_config(REPO_ROOT / 'config.example.json')
    comparison = compare_variants(config, seeds=[1, 2, 3], variants=['fedavg-0.1'], progress=False)

    adaptive = comparison['variants'][BASE_VARIANT]
    baseline = comparison['variants']['fedavg-0.1']
    assert adaptive['accuracy_std_last'] < baseline['accuracy_std_last']
    assert adaptive['average_last'] >= baseline['average_last']
