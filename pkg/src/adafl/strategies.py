"""Local-update procedures a selected client runs for one round: FedAvg, FedProx, SCAFFOLD."""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .data import Dataset
from .errors import AdaflError
from .model import MlpModel, OptimizerState, ParamVector, GradientCorrection, flatten, sgd_step

STRATEGIES = ('fedavg', 'fedprox', 'scaffold')


class StrategyError(AdaflError, ValueError):
    """Invalid local training configuration or input."""
    pass


@dataclass
class LocalTrainConfig:
    """Hyperparameters of one client's local training session.

    A learning rate of 0 is accepted here (it leaves the model frozen); run
    configs loaded from file require it to be positive.
    """
    epochs: int = 5
    batch_size: int = 10
    learning_rate: float = 0.01
    momentum: float = 0.5
    strategy: str = 'fedavg'
    prox_mu: float = 0.0

    def __post_init__(self):
        if self.epochs < 1:
            raise StrategyError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise StrategyError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise StrategyError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise StrategyError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.prox_mu < 0:
            raise StrategyError(f"prox_mu must be non-negative, got {self.prox_mu}")
        if self.strategy not in STRATEGIES:
            raise StrategyError(f"Unknown strategy '{self.strategy}', expected one of {list(STRATEGIES)}")

    def steps_per_session(self, n_samples: int) -> int:
        return self.epochs * math.ceil(n_samples / self.batch_size)


@dataclass
class ControlVariates:
    """SCAFFOLD server variate c and per-client variates c_1..c_M."""
    server: ParamVector
    clients: List[ParamVector] = field(default_factory=list)

    @classmethod
    def zeros(cls, num_params: int, num_clients: int) -> 'ControlVariates':
        return cls(np.zeros(num_params), [np.zeros(num_params) for _ in range(num_clients)])

    def apply_round(self, updates: Sequence['ScaffoldUpdate']):
        """Store the new client variates and move c by (|S|/M) * mean(delta c_i)."""
        if not updates:
            return
        for u in updates:
            self.clients[u.client_id] = u.new_variate
        mean_delta = np.mean([u.delta_variate for u in updates], axis=0)
        self.server = self.server + (len(updates) / len(self.clients)) * mean_delta


@dataclass
class ScaffoldUpdate:
    client_id: int
    model: MlpModel
    new_variate: ParamVector
    delta_variate: ParamVector


def _run_local_sgd(
    model: MlpModel,
    dataset: Dataset,
    cfg: LocalTrainConfig,
    rng: np.random.Generator,
    momentum: float,
    correction: Optional[GradientCorrection] = None,
) -> int:
    """E epochs of shuffled mini-batch SGD on model in place. Returns the step count."""
    n = len(dataset)
    if n == 0:
        raise StrategyError("Cannot train on an empty client dataset")

    opt = OptimizerState.fresh(model, cfg.learning_rate, momentum)
    steps = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            sgd_step(model, opt, dataset.features[batch], dataset.labels[batch], correction)
            steps += 1
    return steps


def local_update_fedavg(
    global_model: MlpModel, dataset: Dataset, cfg: LocalTrainConfig, rng: np.random.Generator
) -> MlpModel:
    """Plain local SGD with momentum from a copy of the global model."""
    model = global_model.copy()
    _run_local_sgd(model, dataset, cfg, rng, cfg.momentum)
    return model


def local_update_fedprox(
    global_model: MlpModel, dataset: Dataset, cfg: LocalTrainConfig, rng: np.random.Generator
) -> MlpModel:
    """FedAvg local training with the proximal gradient prox_mu * (w - w_global) added."""
    model = global_model.copy()
    correction = None
    if cfg.prox_mu > 0:
        anchor = flatten(global_model)
        prox_mu = cfg.prox_mu
        correction = lambda w: prox_mu * (w - anchor)
    _run_local_sgd(model, dataset, cfg, rng, cfg.momentum, correction)
    return model


def local_update_scaffold(
    global_model: MlpModel,
    variates: ControlVariates,
    client_id: int,
    dataset: Dataset,
    cfg: LocalTrainConfig,
    rng: np.random.Generator,
) -> ScaffoldUpdate:
    """Variance-reduced local SGD (momentum forced to 0).

    Each step follows g - c_i + c. Afterwards the client variate is
    refreshed with the cheap rule c_i+ = c_i - c + (w_global - w_local) / (steps * lr).
    variates is not modified; the caller applies the returned update.
    """
    if cfg.learning_rate <= 0:
        raise StrategyError("SCAFFOLD needs a positive learning rate to refresh its control variate")
    if not 0 <= client_id < len(variates.clients):
        raise StrategyError(f"Client {client_id} has no control variate")

    c = variates.server
    c_i = variates.clients[client_id]
    shift = c - c_i
    model = global_model.copy()
    steps = _run_local_sgd(model, dataset, cfg, rng, 0.0, lambda w: shift)

    w_global = flatten(global_model)
    w_local = flatten(model)
    new_variate = c_i - c + (w_global - w_local) / (steps * cfg.learning_rate)
    return ScaffoldUpdate(client_id, model, new_variate, new_variate - c_i)
