"""Accuracy summaries, stopping rounds and communication-cost accounting."""

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Sequence

import numpy as np

from .errors import AdaflError
from .selection import FractionSchedule, cohort_size, fraction_at

if TYPE_CHECKING:
    from .federation import RoundRecord

logger = logging.getLogger(__name__)


class MetricError(AdaflError, ValueError):
    """Metric requested on an unsuitable trace or argument."""
    pass


@dataclass
class MetricSettings:
    """Targets and window lengths used to summarise a run."""
    targets: List[float] = field(default_factory=list)
    metric_window: int = 10
    stopping_window: int = 5
    stability_window: int = 30

    def __post_init__(self):
        for target in self.targets:
            if not 0.0 < target < 1.0:
                raise MetricError(f"Target accuracies must lie in (0, 1), got {target}")
        for name in ('metric_window', 'stopping_window', 'stability_window'):
            if getattr(self, name) < 1:
                raise MetricError(f"{name} must be at least 1, got {getattr(self, name)}")


def communication_cost(schedule: FractionSchedule, T_star: int, M: int) -> int:
    """Total upload units over rounds 1..T_star: the sum of cohort sizes."""
    if not 1 <= T_star <= schedule.total_rounds:
        raise MetricError(f"T_star must lie in [1, {schedule.total_rounds}], got {T_star}")
    total = 0
    for first, last, gamma in schedule.blocks():
        if first > T_star:
            break
        total += (min(last, T_star) - first + 1) * cohort_size(gamma, M)
    return total


def stopping_round(accuracy_trace: Sequence[float], target: float, window: int = 5) -> Optional[int]:
    """First 1-based index t >= window whose trailing window mean exceeds target, else None."""
    if window < 1:
        raise MetricError(f"window must be at least 1, got {window}")
    acc = np.asarray(accuracy_trace, dtype=np.float64)
    if len(acc) < window:
        return None
    means = np.lib.stride_tricks.sliding_window_view(acc, window).mean(axis=1)
    hits = np.flatnonzero(means > target)
    if len(hits) == 0:
        return None
    return int(hits[0]) + window


def summary_metrics(accuracy_trace: Sequence[float], window: int = 10) -> Dict[str, float]:
    """Mean of the final `window` accuracies and the best accuracy overall."""
    if window < 1:
        raise MetricError(f"window must be at least 1, got {window}")
    if len(accuracy_trace) < window:
        raise MetricError(f"Trace has {len(accuracy_trace)} entries, need at least {window}")
    acc = np.asarray(accuracy_trace, dtype=np.float64)
    return {
        'average_last': float(np.mean(acc[-window:])),
        'best': float(np.max(acc)),
    }


def accuracy_std_last(accuracy_trace: Sequence[float], n: int = 30) -> float:
    """Population std of the final n accuracies (all of them if the trace is shorter)."""
    if n < 1:
        raise MetricError(f"n must be at least 1, got {n}")
    if len(accuracy_trace) == 0:
        raise MetricError("Cannot measure the spread of an empty trace")
    return float(np.std(np.asarray(accuracy_trace[-n:], dtype=np.float64)))


def summarize(
    records: Sequence['RoundRecord'],
    schedule: FractionSchedule,
    num_clients: int,
    settings: MetricSettings,
) -> Dict[str, Any]:
    """Summary block of an experiment: accuracy metrics plus per-target stopping rounds and costs.

    Only evaluated rounds enter the accuracy metrics; a stopping point is
    reported as the round number of the record completing its window.
    """
    evaluated = [(r.round, r.test_accuracy) for r in records if r.test_accuracy is not None]
    if not evaluated:
        raise MetricError("No evaluated rounds to summarise")
    rounds = [r for r, _ in evaluated]
    accuracies = [a for _, a in evaluated]

    summary: Dict[str, Any] = {
        'rounds': len(records),
        'evaluated_rounds': len(evaluated),
        'metric_window': settings.metric_window,
        'stopping_window': settings.stopping_window,
        'stability_window': settings.stability_window,
        'total_cost': int(sum(r.cost_round for r in records)),
        'final_accuracy': accuracies[-1],
    }

    if len(accuracies) >= settings.metric_window:
        summary['average_last'] = summary_metrics(accuracies, settings.metric_window)['average_last']
    else:
        logger.warning(
            "Only %d evaluated rounds; average of the last %d is undefined",
            len(accuracies), settings.metric_window,
        )
        summary['average_last'] = None

    best_index = int(np.argmax(accuracies))
    summary['best_accuracy'] = accuracies[best_index]
    summary['best_round'] = rounds[best_index]
    summary['accuracy_std_last'] = accuracy_std_last(accuracies, settings.stability_window)

    targets = []
    for target in settings.targets:
        index = stopping_round(accuracies, target, settings.stopping_window)
        if index is None:
            targets.append({'target': target, 'stopping_round': None, 'cost': None})
            continue
        t_star = rounds[index - 1]
        targets.append({
            'target': target,
            'stopping_round': t_star,
            'cost': communication_cost(schedule, t_star, num_clients),
        })
    summary['targets'] = targets
    return summary
