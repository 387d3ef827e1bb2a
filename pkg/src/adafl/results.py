"""Experiment results: per-round trace CSV and summary JSON."""

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Optional

if TYPE_CHECKING:
    from .federation import RoundRecord

TRACE_COLUMNS = [
    'round',
    'gamma',
    'K',
    'cost_round',
    'cost_cumulative',
    'test_accuracy',
    'selected_ids',
    'attention_min',
    'attention_max',
    'attention_entropy',
]

TRACE_FILENAME = 'trace.csv'
SUMMARY_FILENAME = 'summary.json'


@dataclass
class ExperimentResult:
    """Full round trace of one run plus its summary metrics."""
    records: List['RoundRecord']
    summary: Dict[str, Any]
    seed: int
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def accuracies(self) -> List[float]:
        return [r.test_accuracy for r in self.records if r.test_accuracy is not None]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'seed': self.seed,
            'config': self.config,
            'summary': self.summary,
            'created_at': datetime.now().isoformat(),
        }


def _fmt(value: Optional[float]) -> str:
    # repr gives the shortest string that round-trips the float exactly
    return '' if value is None else repr(float(value))


def trace_row(record: 'RoundRecord') -> List[str]:
    return [
        str(record.round),
        _fmt(record.gamma),
        str(record.K),
        str(record.cost_round),
        str(record.cost_cumulative),
        _fmt(record.test_accuracy),
        ';'.join(str(k) for k in record.selected),
        _fmt(record.attention_min),
        _fmt(record.attention_max),
        _fmt(record.attention_entropy),
    ]


def write_trace_csv(records: List['RoundRecord'], path) -> Path:
    """One row per round; unevaluated rounds leave test_accuracy empty."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(TRACE_COLUMNS)
        for record in records:
            writer.writerow(trace_row(record))
    return path


def read_trace_accuracies(path) -> List[Optional[float]]:
    """Test-accuracy column of a trace CSV, None where the round was not evaluated."""
    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.DictReader(f)
        return [float(row['test_accuracy']) if row['test_accuracy'] else None for row in reader]


def write_summary_json(result: ExperimentResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(result.to_dict(), f, indent=2)
    return path


def write_result(result: ExperimentResult, output_dir) -> Dict[str, Path]:
    """Write trace.csv and summary.json into output_dir."""
    output_dir = Path(output_dir)
    return {
        'trace': write_trace_csv(result.records, output_dir / TRACE_FILENAME),
        'summary': write_summary_json(result, output_dir / SUMMARY_FILENAME),
    }
