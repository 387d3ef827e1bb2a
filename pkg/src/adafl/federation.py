"""Round orchestration: selection, local training dispatch, aggregation, attention update."""

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .data import DataSpec, FederatedData, build_federated_data
from .errors import AdaflError
from .metrics import MetricSettings, summarize
from .model import DimensionMismatchError, MlpModel, euclidean_distance, evaluate, flatten, unflatten
from .results import ExperimentResult
from .selection import (
    AttentionState,
    FractionSchedule,
    build_schedule,
    cohort_size,
    fraction_at,
    init_attention,
    sample_clients,
    update_attention,
)
from .strategies import (
    ControlVariates,
    LocalTrainConfig,
    ScaffoldUpdate,
    local_update_fedavg,
    local_update_fedprox,
    local_update_scaffold,
)

logger = logging.getLogger(__name__)


class FederationError(AdaflError, ValueError):
    """Invalid federation configuration or round state."""
    pass


@dataclass
class FederationConfig:
    """Everything one simulated experiment needs."""
    num_clients: int = 100
    num_rounds: int = 300
    gamma_start: float = 0.1
    gamma_end: float = 0.5
    num_fractions: int = 5
    alpha: float = 0.9
    # False freezes attention at its initial value (FedAvg-style uniform-by-size sampling)
    attention: bool = True
    local: LocalTrainConfig = field(default_factory=LocalTrainConfig)
    lr_decay: float = 1.0
    hidden_sizes: Tuple[int, ...] = (200, 200)
    data: DataSpec = field(default_factory=DataSpec)
    seed: int = 0
    eval_every: int = 1
    workers: int = 1

    def __post_init__(self):
        self.hidden_sizes = tuple(self.hidden_sizes)
        if self.num_clients < 1:
            raise FederationError(f"num_clients must be at least 1, got {self.num_clients}")
        if self.num_rounds < 1:
            raise FederationError(f"num_rounds must be at least 1, got {self.num_rounds}")
        if not 0.0 <= self.alpha < 1.0:
            raise FederationError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not 0.0 < self.lr_decay <= 1.0:
            raise FederationError(f"lr_decay must lie in (0, 1], got {self.lr_decay}")
        if self.eval_every < 1:
            raise FederationError(f"eval_every must be at least 1, got {self.eval_every}")
        if self.workers < 1:
            raise FederationError(f"workers must be at least 1, got {self.workers}")
        if any(h < 1 for h in self.hidden_sizes):
            raise FederationError(f"Hidden layer sizes must be positive, got {list(self.hidden_sizes)}")

    def schedule(self) -> FractionSchedule:
        return build_schedule(self.gamma_start, self.gamma_end, self.num_fractions, self.num_rounds)

    def learning_rate_at(self, t: int) -> float:
        """Learning rate broadcast in round t: lr0 * decay^(t-1)."""
        return self.local.learning_rate * self.lr_decay ** (t - 1)


@dataclass
class GlobalState:
    model: MlpModel
    attention: AttentionState
    variates: Optional[ControlVariates]
    round: int
    learning_rate: float
    cumulative_cost: int = 0


@dataclass
class RoundRecord:
    """Bookkeeping for one communication round."""
    round: int
    gamma: float
    K: int
    selected: Tuple[int, ...]
    distances: Tuple[float, ...]
    cost_round: int
    cost_cumulative: int
    test_accuracy: Optional[float]
    attention_min: float
    attention_max: float
    attention_entropy: float
    learning_rate: float
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            'round': self.round,
            'gamma': self.gamma,
            'K': self.K,
            'selected': list(self.selected),
            'distances': list(self.distances),
            'cost_round': self.cost_round,
            'cost_cumulative': self.cost_cumulative,
            'test_accuracy': self.test_accuracy,
            'attention_min': self.attention_min,
            'attention_max': self.attention_max,
            'attention_entropy': self.attention_entropy,
            'learning_rate': self.learning_rate,
            'wall_time': self.wall_time,
        }


@dataclass
class Simulation:
    """Immutable context shared by every round of one experiment."""
    config: FederationConfig
    data: FederatedData
    schedule: FractionSchedule

    @property
    def sizes(self) -> List[int]:
        return self.data.partition.sizes

    @property
    def model_sizes(self) -> Tuple[int, ...]:
        return (self.data.num_features,) + self.config.hidden_sizes + (self.data.num_classes,)


def prepare_simulation(config: FederationConfig, data: Optional[FederatedData] = None) -> Simulation:
    """Build the schedule and (unless given) the federated data for a config."""
    schedule = config.schedule()
    if data is None:
        data = build_federated_data(config.data, config.num_clients, config.seed)
    if data.partition.num_clients != config.num_clients:
        raise FederationError(
            f"Partition has {data.partition.num_clients} clients, config expects {config.num_clients}"
        )
    return Simulation(config, data, schedule)


def initial_state(sim: Simulation) -> GlobalState:
    """Round-1 state: Glorot-initialised model and size-proportional attention.

    SCAFFOLD runs also start with all-zero control variates.
    """
    rng = np.random.default_rng([sim.config.seed, 1])
    model = MlpModel.initialize(sim.model_sizes, rng)
    variates = None
    if sim.config.local.strategy == 'scaffold':
        variates = ControlVariates.zeros(model.num_params, sim.config.num_clients)
    return GlobalState(
        model=model,
        attention=init_attention(sim.sizes),
        variates=variates,
        round=1,
        learning_rate=sim.config.learning_rate_at(1),
    )


def aggregate(local_models: Sequence[MlpModel], sizes: Sequence[int]) -> MlpModel:
    """Dataset-size weighted average of local models, summed in the given order."""
    if not local_models:
        raise FederationError("Cannot aggregate zero models")
    if len(local_models) != len(sizes):
        raise FederationError(f"{len(local_models)} models but {len(sizes)} sizes")
    architecture = local_models[0].sizes
    for m in local_models[1:]:
        if m.sizes != architecture:
            raise DimensionMismatchError(f"Cannot aggregate architectures {architecture} and {m.sizes}")

    total = float(sum(sizes))
    if total <= 0:
        raise FederationError("Aggregation weights must have a positive total")
    if len(local_models) == 1:
        return local_models[0].copy()

    combined = np.zeros(local_models[0].num_params)
    for model, n_k in zip(local_models, sizes):
        combined += (n_k / total) * flatten(model)
    return unflatten(combined, architecture)


def _train_client(sim: Simulation, state: GlobalState, client_id: int):
    """Run the configured local update for one client on its own rng stream."""
    cfg = replace(sim.config.local, learning_rate=state.learning_rate)
    rng = np.random.default_rng([sim.config.seed, state.round, client_id])
    dataset = sim.data.partition.clients[client_id]

    if cfg.strategy == 'scaffold':
        update = local_update_scaffold(state.model, state.variates, client_id, dataset, cfg, rng)
        return update.model, update
    if cfg.strategy == 'fedprox':
        return local_update_fedprox(state.model, dataset, cfg, rng), None
    return local_update_fedavg(state.model, dataset, cfg, rng), None


def _dispatch(sim: Simulation, state: GlobalState, client_ids: Sequence[int]) -> Dict[int, tuple]:
    workers = min(sim.config.workers, len(client_ids))
    if workers <= 1:
        return {k: _train_client(sim, state, k) for k in client_ids}
    with ThreadPoolExecutor(max_workers=workers) as executor:
        results = executor.map(lambda k: _train_client(sim, state, k), client_ids)
        return dict(zip(client_ids, results))


def run_round(state: GlobalState, sim: Simulation, rng: np.random.Generator) -> Tuple[GlobalState, RoundRecord]:
    """Execute communication round state.round and return the next state with its record."""
    config = sim.config
    t = state.round
    if not 1 <= t <= config.num_rounds:
        raise FederationError(f"Round {t} outside [1, {config.num_rounds}]")
    started = time.perf_counter()

    gamma = fraction_at(sim.schedule, t)
    K = cohort_size(gamma, config.num_clients)
    outcome = sample_clients(state.attention, K, rng)
    client_ids = sorted(outcome.selected)

    results = _dispatch(sim, state, client_ids)
    local_models = [results[k][0] for k in client_ids]
    new_model = aggregate(local_models, [sim.sizes[k] for k in client_ids])

    # divergence is measured against the freshly aggregated model
    new_weights = flatten(new_model)
    distances = [euclidean_distance(flatten(m), new_weights) for m in local_models]

    if config.attention:
        attention = update_attention(state.attention, client_ids, distances, config.alpha)
    else:
        attention = AttentionState(state.attention.scores.copy(), state.attention.round + 1)

    if state.variates is not None:
        state.variates.apply_round([results[k][1] for k in client_ids])

    accuracy = None
    if t % config.eval_every == 0 or t == config.num_rounds:
        accuracy = evaluate(new_model, sim.data.test)

    cumulative = state.cumulative_cost + K
    record = RoundRecord(
        round=t,
        gamma=gamma,
        K=K,
        selected=tuple(client_ids),
        distances=tuple(distances),
        cost_round=K,
        cost_cumulative=cumulative,
        test_accuracy=accuracy,
        attention_min=float(attention.scores.min()),
        attention_max=float(attention.scores.max()),
        attention_entropy=attention.entropy(),
        learning_rate=state.learning_rate,
        wall_time=time.perf_counter() - started,
    )
    logger.debug(
        "Round %d: gamma=%.3f K=%d acc=%s selected=%s", t, gamma, K,
        'n/a' if accuracy is None else f'{accuracy:.4f}', client_ids,
    )

    next_state = GlobalState(
        model=new_model,
        attention=attention,
        variates=state.variates,
        round=t + 1,
        learning_rate=config.learning_rate_at(t + 1),
        cumulative_cost=cumulative,
    )
    return next_state, record


def _progress_enabled() -> bool:
    return os.environ.get('ADAFL_PROGRESS', '1') != '0'


def run_experiment(
    config: FederationConfig,
    settings: Optional[MetricSettings] = None,
    data: Optional[FederatedData] = None,
    progress: Optional[bool] = None,
) -> ExperimentResult:
    """Run all T rounds and summarise the accuracy trace."""
    settings = settings or MetricSettings()
    sim = prepare_simulation(config, data)
    state = initial_state(sim)
    rng = np.random.default_rng([config.seed, 2])

    logger.info(
        "Starting experiment: %d clients, %d rounds, strategy=%s, attention=%s, schedule %.3g->%.3g in %d steps",
        config.num_clients, config.num_rounds, config.local.strategy, config.attention,
        config.gamma_start, config.gamma_end, config.num_fractions,
    )

    show = _progress_enabled() if progress is None else progress
    records = []
    for _ in tqdm(range(config.num_rounds), desc="Communication rounds", unit="round", disable=not show):
        state, record = run_round(state, sim, rng)
        records.append(record)

    client_accuracies = [evaluate(state.model, c) for c in sim.data.partition.clients]
    summary = summarize(records, sim.schedule, config.num_clients, settings)
    summary['client_accuracy_mean'] = float(np.mean(client_accuracies))
    summary['client_accuracy_std'] = float(np.std(client_accuracies))
    summary['final_attention_entropy'] = state.attention.entropy()

    logger.info(
        "Experiment finished: best accuracy %.4f, total cost %d units",
        summary['best_accuracy'], summary['total_cost'],
    )
    return ExperimentResult(records=records, summary=summary, seed=config.seed)
