"""Run a configured experiment once, or compare variants across seeds."""

import logging
import os
from collections import defaultdict
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from .config import RunConfig
from .federation import run_experiment
from .results import ExperimentResult

logger = logging.getLogger(__name__)

BASE_VARIANT = 'base'


def run_single(config: RunConfig, progress: Optional[bool] = None) -> ExperimentResult:
    """Run one experiment and attach the resolved config (minus variants) to its result."""
    result = run_experiment(config.federation, config.harness.metrics, progress=progress)
    result.config = config.echo()
    return result


def _mean_or_none(values: Sequence[Optional[float]]) -> Optional[float]:
    if not values or any(v is None for v in values):
        return None
    return float(np.mean(values))


def aggregate_summaries(summaries: List[Dict[str, Any]]) -> Dict[str, Any]:
    """Average run summaries of one variant over its seeds.

    A target's mean stopping round and cost are reported only when every seed
    reached it; `reached` counts the seeds that did.
    """
    row = {
        'runs': len(summaries),
        'average_last': _mean_or_none([s['average_last'] for s in summaries]),
        'best_accuracy': _mean_or_none([s['best_accuracy'] for s in summaries]),
        'accuracy_std_last': _mean_or_none([s['accuracy_std_last'] for s in summaries]),
        'total_cost': _mean_or_none([s['total_cost'] for s in summaries]),
        'client_accuracy_std': _mean_or_none([s.get('client_accuracy_std') for s in summaries]),
    }

    targets = []
    for i, entry in enumerate(summaries[0]['targets']):
        hits = [s['targets'][i] for s in summaries]
        reached = sum(1 for h in hits if h['stopping_round'] is not None)
        targets.append({
            'target': entry['target'],
            'reached': reached,
            'stopping_round': _mean_or_none([h['stopping_round'] for h in hits]),
            'cost': _mean_or_none([h['cost'] for h in hits]),
        })
    row['targets'] = targets
    return row


def compare_variants(
    config: RunConfig,
    seeds: Optional[Sequence[int]] = None,
    variants: Optional[Sequence[str]] = None,
    progress: Optional[bool] = None,
) -> Dict[str, Any]:
    """Run the base config and each named variant for every seed; average per variant."""
    seeds = list(seeds or config.harness.seeds)
    names = [BASE_VARIANT] + list(config.variants if variants is None else variants)

    # every run config is resolved before the first run starts
    runs = [
        (name, seed, (config if name == BASE_VARIANT else config.variant(name)).with_seed(seed))
        for name in names for seed in seeds
    ]
    show = os.environ.get('ADAFL_PROGRESS', '1') != '0' if progress is None else progress

    summaries = defaultdict(list)
    for name, seed, cfg in tqdm(runs, desc="Comparison runs", unit="run", disable=not show):
        logger.info("Running variant '%s' with seed %d", name, seed)
        result = run_experiment(cfg.federation, cfg.harness.metrics, progress=False)
        summaries[name].append(result.summary)

    return {
        'seeds': seeds,
        'variants': {name: aggregate_summaries(summaries[name]) for name in names},
    }
