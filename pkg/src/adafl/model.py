"""Minimal MLP core: forward/backward pass, SGD with momentum, parameter vectors."""

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import AdaflError

if TYPE_CHECKING:
    from .data import Dataset


class ModelError(AdaflError, ValueError):
    """Invalid model construction or use."""
    pass


class DimensionMismatchError(ModelError):
    """Array shapes do not fit the model architecture."""
    pass


class NonFiniteGradientError(ModelError):
    """A gradient contained NaN or Inf."""
    pass


# Flat float64 vector of every weight and bias, layer-major, row-major.
ParamVector = np.ndarray

# Extra term added to the flat gradient before the optimizer step.
GradientCorrection = Callable[[ParamVector], ParamVector]


@dataclass
class Layer:
    """Dense layer. weights has shape (outputs, inputs)."""
    weights: np.ndarray
    bias: np.ndarray

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]

    @property
    def num_params(self) -> int:
        return self.weights.size + self.bias.size


class MlpModel:
    """Multi-layer perceptron with ReLU hidden layers and a softmax output.

    The loss is the mean cross-entropy over a batch.
    """

    def __init__(self, layers: List[Layer]):
        if not layers:
            raise ModelError("A model needs at least one layer")

        for i, layer in enumerate(layers):
            if layer.weights.ndim != 2 or layer.bias.shape != (layer.fan_out,):
                raise DimensionMismatchError(
                    f"Layer {i}: weights {layer.weights.shape} and bias {layer.bias.shape} disagree"
                )
            if i > 0 and layers[i - 1].fan_out != layer.fan_in:
                raise DimensionMismatchError(
                    f"Layer {i - 1} outputs {layers[i - 1].fan_out} units but layer {i} expects {layer.fan_in}"
                )

        self.layers = [
            Layer(np.array(l.weights, dtype=np.float64), np.array(l.bias, dtype=np.float64))
            for l in layers
        ]

    @classmethod
    def initialize(cls, sizes: Sequence[int], rng: np.random.Generator) -> 'MlpModel':
        """Build a model with Glorot-uniform weights and zero biases.

        Args:
            sizes: Units per layer, input first, e.g. (784, 200, 200, 10)
            rng: Seeded generator the weights are drawn from
        """
        if len(sizes) < 2:
            raise ModelError(f"Need input and output sizes, got {list(sizes)}")
        if any(s < 1 for s in sizes):
            raise ModelError(f"Layer sizes must be positive, got {list(sizes)}")

        layers = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            layers.append(Layer(weights, np.zeros(fan_out)))
        return cls(layers)

    @property
    def sizes(self) -> Tuple[int, ...]:
        return (self.layers[0].fan_in,) + tuple(l.fan_out for l in self.layers)

    @property
    def input_size(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_size(self) -> int:
        return self.layers[-1].fan_out

    @property
    def num_params(self) -> int:
        return sum(l.num_params for l in self.layers)

    def copy(self) -> 'MlpModel':
        return MlpModel(self.layers)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MlpModel) or self.sizes != other.sizes:
            return False
        return all(
            np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias)
            for a, b in zip(self.layers, other.layers)
        )

    __hash__ = None

    def _check_features(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.input_size:
            raise DimensionMismatchError(
                f"Expected features of shape (n, {self.input_size}), got {features.shape}"
            )
        return features

    def _check_labels(self, labels: np.ndarray, n: int) -> np.ndarray:
        labels = np.asarray(labels)
        if labels.shape != (n,):
            raise DimensionMismatchError(f"Expected {n} labels, got shape {labels.shape}")
        if n and (labels.min() < 0 or labels.max() >= self.output_size):
            raise DimensionMismatchError(f"Labels must lie in [0, {self.output_size})")
        return labels.astype(np.int64)

    def _forward(self, features: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        """Return the input of every layer and the output logits."""
        activations = [features]
        out = features
        for i, layer in enumerate(self.layers):
            z = out @ layer.weights.T + layer.bias
            if i < len(self.layers) - 1:
                out = np.maximum(z, 0.0)
                activations.append(out)
            else:
                out = z
        return activations, out

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        _, logits = self._forward(self._check_features(features))
        return _softmax(logits)

    def predict(self, features: np.ndarray) -> np.ndarray:
        _, logits = self._forward(self._check_features(features))
        return np.argmax(logits, axis=1)

    def loss(self, features: np.ndarray, labels: np.ndarray) -> float:
        features = self._check_features(features)
        labels = self._check_labels(labels, features.shape[0])
        _, logits = self._forward(features)
        log_probs = _log_softmax(logits)
        return float(-np.mean(log_probs[np.arange(len(labels)), labels]))

    def loss_and_gradients(
        self, features: np.ndarray, labels: np.ndarray
    ) -> Tuple[float, List[Tuple[np.ndarray, np.ndarray]]]:
        """Mean cross-entropy and its gradient per layer as (dW, db) pairs."""
        features = self._check_features(features)
        n = features.shape[0]
        if n == 0:
            raise ModelError("Cannot compute gradients on an empty batch")
        labels = self._check_labels(labels, n)

        activations, logits = self._forward(features)
        log_probs = _log_softmax(logits)
        loss = float(-np.mean(log_probs[np.arange(n), labels]))

        delta = np.exp(log_probs)
        delta[np.arange(n), labels] -= 1.0
        delta /= n

        grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            a_prev = activations[i]
            grads[i] = (delta.T @ a_prev, delta.sum(axis=0))
            if i > 0:
                # ReLU derivative: the layer input is positive exactly where the unit was active
                delta = (delta @ self.layers[i].weights) * (a_prev > 0)
        return loss, grads

    def load_vector(self, vector: ParamVector):
        """Overwrite all parameters in place from a flat vector."""
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.num_params,):
            raise DimensionMismatchError(
                f"Parameter vector has shape {vector.shape}, model needs ({self.num_params},)"
            )
        offset = 0
        for layer in self.layers:
            size = layer.weights.size
            layer.weights = vector[offset:offset + size].reshape(layer.weights.shape).copy()
            offset += size
            layer.bias = vector[offset:offset + layer.fan_out].copy()
            offset += layer.fan_out

    def add_vector(self, delta: ParamVector):
        """Add a flat vector (flatten layout) to all parameters in place."""
        offset = 0
        for layer in self.layers:
            size = layer.weights.size
            layer.weights += delta[offset:offset + size].reshape(layer.weights.shape)
            offset += size
            layer.bias += delta[offset:offset + layer.fan_out]
            offset += layer.fan_out


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(logits))


@dataclass
class OptimizerState:
    """SGD with heavy-ball momentum: v <- mu*v + g, w <- w - lr*v."""
    velocity: ParamVector
    momentum: float
    learning_rate: float

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ModelError(f"Momentum must lie in [0, 1), got {self.momentum}")
        if self.learning_rate < 0:
            raise ModelError(f"Learning rate must be non-negative, got {self.learning_rate}")

    @classmethod
    def fresh(cls, model: MlpModel, learning_rate: float, momentum: float = 0.0) -> 'OptimizerState':
        """Zero velocity sized for the model."""
        return cls(np.zeros(model.num_params), momentum, learning_rate)


def flatten(model: MlpModel) -> ParamVector:
    """Concatenate every layer's weights (row-major) then bias, layer by layer."""
    parts = []
    for layer in model.layers:
        parts.append(layer.weights.ravel())
        parts.append(layer.bias)
    return np.concatenate(parts)


def unflatten(vector: ParamVector, sizes: Sequence[int]) -> MlpModel:
    """Rebuild a model of the given layer sizes from a flat vector."""
    if len(sizes) < 2:
        raise ModelError(f"Need input and output sizes, got {list(sizes)}")
    layers = [Layer(np.zeros((out, inp)), np.zeros(out)) for inp, out in zip(sizes[:-1], sizes[1:])]
    model = MlpModel(layers)
    model.load_vector(vector)
    return model


def flatten_gradients(grads: List[Tuple[np.ndarray, np.ndarray]]) -> ParamVector:
    """Concatenate per-layer (dW, db) pairs in the same order as flatten."""
    parts = []
    for dw, db in grads:
        parts.append(dw.ravel())
        parts.append(db)
    return np.concatenate(parts)


def sgd_step(
    model: MlpModel,
    opt: OptimizerState,
    features: np.ndarray,
    labels: np.ndarray,
    correction: Optional[GradientCorrection] = None,
) -> float:
    """Take one momentum-SGD step on a mini-batch, updating model and opt in place.

    Args:
        model: Model to update
        opt: Velocity buffer and hyperparameters; velocity is updated
        features: Batch features, shape (b, input_size)
        labels: Batch labels, shape (b,)
        correction: Optional function of the current flat parameters whose
            result is added to the mean batch gradient (proximal or
            control-variate terms)

    Returns:
        The batch loss evaluated before the step
    """
    if opt.velocity.shape != (model.num_params,):
        raise DimensionMismatchError(
            f"Velocity has shape {opt.velocity.shape}, model needs ({model.num_params},)"
        )

    loss, grads = model.loss_and_gradients(features, labels)
    gradient = flatten_gradients(grads)
    if not np.all(np.isfinite(gradient)):
        bad = next(i for i, (dw, db) in enumerate(grads) if not (np.isfinite(dw).all() and np.isfinite(db).all()))
        raise NonFiniteGradientError(f"Non-finite gradient in layer {bad}")

    if correction is not None:
        gradient += correction(flatten(model))
        if not np.all(np.isfinite(gradient)):
            raise NonFiniteGradientError("Non-finite gradient after applying correction term")

    # velocity and parameters are updated in place
    opt.velocity *= opt.momentum
    opt.velocity += gradient
    model.add_vector(-opt.learning_rate * opt.velocity)
    return loss


def euclidean_distance(w1: ParamVector, w2: ParamVector) -> float:
    """L2 distance between two parameter vectors."""
    w1 = np.asarray(w1, dtype=np.float64)
    w2 = np.asarray(w2, dtype=np.float64)
    if w1.shape != w2.shape:
        raise DimensionMismatchError(f"Cannot compare vectors of shape {w1.shape} and {w2.shape}")
    return float(np.linalg.norm(w1 - w2))


def evaluate(model: MlpModel, dataset: 'Dataset') -> float:
    """Fraction of samples whose argmax prediction equals the label."""
    if len(dataset.labels) == 0:
        raise ModelError("Cannot evaluate on an empty dataset")
    predictions = model.predict(dataset.features)
    return float(np.mean(predictions == dataset.labels))
