"""Run configuration: JSON sections per module, dotted overrides, validation."""

import copy
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

from .data import DataSpec
from .errors import AdaflError
from .federation import FederationConfig
from .metrics import MetricSettings
from .selection import build_schedule
from .strategies import LocalTrainConfig


class ConfigError(AdaflError, ValueError):
    """Config file missing, malformed or invalid."""
    pass


def _dataspec_defaults() -> Dict[str, Any]:
    return {f.name: f.default for f in fields(DataSpec)}


SECTION_DEFAULTS: Dict[str, Dict[str, Any]] = {
    'model': {
        'hidden_sizes': [200, 200],
    },
    'data': _dataspec_defaults(),
    'selection': {
        'gamma_start': 0.1,
        'gamma_end': 0.5,
        'num_fractions': 5,
        'alpha': 0.9,
        'attention': True,
    },
    'strategy': {
        'name': 'fedavg',
        'epochs': 5,
        'batch_size': 10,
        'learning_rate': 0.01,
        'momentum': 0.5,
        'prox_mu': 0.0,
    },
    'federation': {
        'num_clients': 100,
        'num_rounds': 300,
        'lr_decay': 1.0,
        'eval_every': 1,
        # None falls back to ADAFL_WORKERS
        'workers': None,
    },
    'harness': {
        'output_dir': './results',
        'targets': [],
        'metric_window': 10,
        'stopping_window': 5,
        'stability_window': 30,
        'seeds': [1, 2, 3],
    },
}

TOP_LEVEL_KEYS = ('seed', 'variants')

# Keys whose default is None but which still carry a fixed type
NULLABLE_TYPES = {
    'data.seed': int,
    'federation.workers': int,
}


@dataclass
class HarnessConfig:
    output_dir: str = './results'
    seeds: List[int] = field(default_factory=lambda: [1, 2, 3])
    metrics: MetricSettings = field(default_factory=MetricSettings)


@dataclass
class RunConfig:
    """A validated experiment definition plus output settings."""
    federation: FederationConfig
    harness: HarnessConfig
    variants: Dict[str, Dict[str, Any]]
    raw: Dict[str, Any]
    source: str = '<config>'

    @property
    def seed(self) -> int:
        return self.federation.seed

    def echo(self) -> Dict[str, Any]:
        """Resolved config without variants, as echoed into summaries."""
        out = copy.deepcopy(self.raw)
        out.pop('variants', None)
        return out

    def variant(self, name: str) -> 'RunConfig':
        if name not in self.variants:
            raise ConfigError(f"Unknown variant '{name}'. Available variants: {sorted(self.variants)}")
        raw = copy.deepcopy(self.raw)
        raw['variants'] = {}
        for path, value in self.variants[name].items():
            set_dotted(raw, path, value, self.source)
        return build_run_config(raw, f"{self.source} [{name}]")

    def with_seed(self, seed: int) -> 'RunConfig':
        raw = copy.deepcopy(self.raw)
        set_dotted(raw, 'seed', seed, self.source)
        return build_run_config(raw, self.source)


def default_raw() -> Dict[str, Any]:
    raw = copy.deepcopy(SECTION_DEFAULTS)
    raw['seed'] = 0
    raw['variants'] = {}
    return raw


def _expected_type(path: str, default: Any):
    if default is None:
        return NULLABLE_TYPES.get(path)
    if isinstance(default, bool):
        return bool
    if isinstance(default, float):
        return (int, float)
    return type(default)


def _check_value(path: str, default: Any, value: Any, source: str):
    if value is None and default is None:
        return
    expected = _expected_type(path, default)
    if expected is None:
        return
    # bool is an int subclass; keep the two apart
    is_bool = isinstance(value, bool)
    if expected is bool and not is_bool:
        raise ConfigError(f"{source}: '{path}' must be true or false, got {value!r}")
    if expected is not bool and is_bool:
        raise ConfigError(f"{source}: '{path}' must not be a boolean, got {value!r}")
    if not isinstance(value, expected):
        raise ConfigError(f"{source}: '{path}' has the wrong type, got {value!r}")


def _check_seed(path: str, value: Any, source: str):
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ConfigError(f"{source}: '{path}' must be a non-negative integer seed, got {value!r}")


def _check_seeds(raw: Dict[str, Any], source: str):
    _check_seed('seed', raw['seed'], source)
    if raw['data']['seed'] is not None:
        _check_seed('data.seed', raw['data']['seed'], source)
    for value in raw['harness']['seeds']:
        _check_seed('harness.seeds', value, source)


def set_dotted(raw: Dict[str, Any], path: str, value: Any, source: str = '<override>'):
    """Assign section.key (or top-level seed) in a raw config dict, rejecting unknown paths."""
    if path == 'seed':
        _check_seed(path, value, source)
        raw['seed'] = value
        return
    parts = path.split('.')
    if len(parts) != 2 or parts[0] not in SECTION_DEFAULTS:
        raise ConfigError(f"{source}: unknown config path '{path}'")
    section, key = parts
    if key not in SECTION_DEFAULTS[section]:
        raise ConfigError(f"{source}: unknown key '{key}' in section '{section}'")
    _check_value(path, SECTION_DEFAULTS[section][key], value, source)
    if path == 'data.seed' and value is not None:
        _check_seed(path, value, source)
    elif path == 'harness.seeds':
        for seed in value:
            _check_seed(path, seed, source)
    raw[section][key] = value


def parse_override(text: str) -> Tuple[str, Any]:
    """Split 'path=value'; the value is read as JSON when possible, else kept as a string."""
    if '=' not in text:
        raise ConfigError(f"Override '{text}' is not of the form key=value")
    path, value = text.split('=', 1)
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return path.strip(), parsed


def merge_user_config(user: Dict[str, Any], source: str) -> Dict[str, Any]:
    if not isinstance(user, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    raw = default_raw()
    for key, value in user.items():
        if key == 'seed':
            set_dotted(raw, 'seed', value, source)
        elif key == 'variants':
            if not isinstance(value, dict) or not all(isinstance(v, dict) for v in value.values()):
                raise ConfigError(f"{source}: 'variants' must map names to objects of dotted overrides")
            raw['variants'] = copy.deepcopy(value)
        elif key in SECTION_DEFAULTS:
            if not isinstance(value, dict):
                raise ConfigError(f"{source}: section '{key}' must be an object")
            for sub_key, sub_value in value.items():
                set_dotted(raw, f'{key}.{sub_key}', sub_value, source)
        else:
            raise ConfigError(
                f"{source}: unknown section '{key}'. "
                f"Expected: {', '.join(TOP_LEVEL_KEYS + tuple(SECTION_DEFAULTS))}"
            )
    return raw


def _default_workers() -> int:
    value = os.environ.get('ADAFL_WORKERS', '1')
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"ADAFL_WORKERS must be an integer, got {value!r}")


def build_run_config(raw: Dict[str, Any], source: str = '<config>') -> RunConfig:
    """Turn a merged raw dict into validated config objects."""
    try:
        _check_seeds(raw, source)
        strategy = raw['strategy']
        if strategy['learning_rate'] <= 0:
            raise ConfigError(f"strategy.learning_rate must be positive, got {strategy['learning_rate']}")
        local = LocalTrainConfig(
            epochs=strategy['epochs'],
            batch_size=strategy['batch_size'],
            learning_rate=strategy['learning_rate'],
            momentum=strategy['momentum'],
            strategy=strategy['name'],
            prox_mu=strategy['prox_mu'],
        )
        selection = raw['selection']
        fed = raw['federation']
        workers = fed['workers'] if fed['workers'] is not None else _default_workers()
        federation = FederationConfig(
            num_clients=fed['num_clients'],
            num_rounds=fed['num_rounds'],
            gamma_start=selection['gamma_start'],
            gamma_end=selection['gamma_end'],
            num_fractions=selection['num_fractions'],
            alpha=selection['alpha'],
            attention=selection['attention'],
            local=local,
            lr_decay=fed['lr_decay'],
            hidden_sizes=tuple(raw['model']['hidden_sizes']),
            data=DataSpec(**raw['data']),
            seed=raw['seed'],
            eval_every=fed['eval_every'],
            workers=workers,
        )
        # surface schedule errors at load time
        build_schedule(federation.gamma_start, federation.gamma_end, federation.num_fractions, federation.num_rounds)

        harness = raw['harness']
        metrics = MetricSettings(
            targets=list(harness['targets']),
            metric_window=harness['metric_window'],
            stopping_window=harness['stopping_window'],
            stability_window=harness['stability_window'],
        )
        if not harness['seeds']:
            raise ConfigError("harness.seeds must list at least one seed")
    except ConfigError:
        raise
    except (AdaflError, TypeError) as e:
        raise ConfigError(f"{source}: {e}") from e

    return RunConfig(
        federation=federation,
        harness=HarnessConfig(str(harness['output_dir']), list(harness['seeds']), metrics),
        variants=raw.get('variants', {}),
        raw=raw,
        source=source,
    )


def load_config(
    path,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
    output_dir: Optional[str] = None,
) -> RunConfig:
    """Load a JSON run config, then apply --override, --seed and --out in that order."""
    path = Path(path)
    source = str(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")

    try:
        with open(path, 'r', encoding='utf-8') as f:
            user = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}: invalid JSON ({e})") from e

    raw = merge_user_config(user, source)
    for text in overrides:
        key, value = parse_override(text)
        set_dotted(raw, key, value, '--override')
    if seed is not None:
        set_dotted(raw, 'seed', seed, '--seed')
    if output_dir is not None:
        raw['harness']['output_dir'] = output_dir

    config = build_run_config(raw, source)
    for name in config.variants:
        config.variant(name)
    return config
