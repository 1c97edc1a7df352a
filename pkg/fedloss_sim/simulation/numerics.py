import logging
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.special import log_softmax

from .errors import ShapeError, TrainingDivergenceError

logger = logging.getLogger(__name__)

N_CLASSES = 2


class ModelSpec(BaseModel):
    """Architecture of the two-branch classifier.

    The embedding and the multi-hot symptom vector are concatenated and fed through
    fully connected rectified-linear layers into a two-way softmax.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    embed_dim: int = Field(default=32, ge=1)
    symptom_dim: int = Field(default=10, ge=1)
    hidden_dims: Tuple[int, ...] = (32,)
    activation: Literal["relu"] = "relu"

    @field_validator("hidden_dims")
    @classmethod
    def _positive_widths(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(width < 1 for width in value):
            raise ValueError("hidden layer widths must be positive")
        return value

    @property
    def input_dim(self) -> int:
        return self.embed_dim + self.symptom_dim

    def layer_shapes(self) -> List[Tuple[int, int]]:
        """(fan_in, fan_out) of every dense layer, output layer last."""
        dims = [self.input_dim, *self.hidden_dims, N_CLASSES]
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_params(self) -> int:
        return sum(fan_in * fan_out + fan_out for fan_in, fan_out in self.layer_shapes())


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Flat float64 parameters laid out layer by layer as W (row-major) then b."""

    values: np.ndarray
    spec: ModelSpec

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 1 or values.shape[0] != self.spec.n_params:
            raise ShapeError(
                f"Expected {self.spec.n_params} parameters, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise TrainingDivergenceError("Parameter vector contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    def layers(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Read-only (W, b) views for every layer."""
        return _unpack(self.spec, self.values)

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(values=values, spec=self.spec)


@dataclass(frozen=True, eq=False)
class Sample:
    embedding: np.ndarray
    symptoms: np.ndarray
    label: int

    def __post_init__(self):
        embedding = np.asarray(self.embedding, dtype=np.float64)
        symptoms = np.asarray(self.symptoms, dtype=np.float64)
        if embedding.ndim != 1 or symptoms.ndim != 1:
            raise ShapeError("Sample embedding and symptoms must be 1-D vectors")
        if not np.all((symptoms == 0.0) | (symptoms == 1.0)):
            raise ValueError("Symptom entries must be 0 or 1")
        if self.label not in (0, 1):
            raise ValueError(f"Label must be 0 or 1, got {self.label}")
        object.__setattr__(self, "embedding", embedding)
        object.__setattr__(self, "symptoms", symptoms)
        object.__setattr__(self, "label", int(self.label))


def _unpack(spec: ModelSpec, values: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
    layers = []
    offset = 0
    for fan_in, fan_out in spec.layer_shapes():
        weight = values[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        bias = values[offset : offset + fan_out]
        offset += fan_out
        layers.append((weight, bias))
    return layers


def design_matrix(spec: ModelSpec, data: Sequence[Sample]) -> Tuple[np.ndarray, np.ndarray]:
    """Stack samples into an input matrix [embedding | symptoms] and a label vector."""
    if not data:
        return np.empty((0, spec.input_dim)), np.empty(0, dtype=np.int64)

    rows = []
    for sample in data:
        if sample.embedding.shape[0] != spec.embed_dim or sample.symptoms.shape[0] != spec.symptom_dim:
            raise ShapeError(
                f"Sample dims ({sample.embedding.shape[0]}, {sample.symptoms.shape[0]}) "
                f"do not match model ({spec.embed_dim}, {spec.symptom_dim})"
            )
        rows.append(np.concatenate([sample.embedding, sample.symptoms]))
    labels = np.fromiter((sample.label for sample in data), dtype=np.int64, count=len(data))
    return np.vstack(rows), labels


def _log_probs(spec: ModelSpec, values: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    layers = _unpack(spec, values)
    hidden = inputs
    for weight, bias in layers[:-1]:
        hidden = np.maximum(hidden @ weight + bias, 0.0)
    weight, bias = layers[-1]
    return log_softmax(hidden @ weight + bias, axis=1)


def _loss_and_gradient(
    spec: ModelSpec, values: np.ndarray, inputs: np.ndarray, labels: np.ndarray
) -> Tuple[float, np.ndarray]:
    layers = _unpack(spec, values)
    activations = [inputs]
    pre_activations = []
    hidden = inputs
    for weight, bias in layers[:-1]:
        pre = hidden @ weight + bias
        pre_activations.append(pre)
        hidden = np.maximum(pre, 0.0)
        activations.append(hidden)

    weight, bias = layers[-1]
    log_probs = log_softmax(hidden @ weight + bias, axis=1)
    rows = np.arange(labels.shape[0])
    loss = float(-log_probs[rows, labels].sum())

    # d(loss)/d(logits) = p - onehot(label)
    delta = np.exp(log_probs)
    delta[rows, labels] -= 1.0

    grads = []
    for index in range(len(layers) - 1, -1, -1):
        weight, _ = layers[index]
        grads.append(np.concatenate([(activations[index].T @ delta).ravel(), delta.sum(axis=0)]))
        if index > 0:
            delta = (delta @ weight.T) * (pre_activations[index - 1] > 0.0)
    grads.reverse()
    return loss, np.concatenate(grads)


def init_params(spec: ModelSpec, seed: int) -> ParamVector:
    """Draw weights from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases start at zero."""
    rng = np.random.default_rng(seed)
    chunks = []
    for fan_in, fan_out in spec.layer_shapes():
        limit = 1.0 / np.sqrt(fan_in)
        chunks.append(rng.uniform(-limit, limit, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return ParamVector(values=np.concatenate(chunks), spec=spec)


def predict_proba(params: ParamVector, data: Sequence[Sample]) -> np.ndarray:
    """Class probabilities, one (p_neg, p_pos) row per sample."""
    inputs, _ = design_matrix(params.spec, data)
    return np.exp(_log_probs(params.spec, params.values, inputs))


def forward(params: ParamVector, sample: Sample) -> Tuple[float, float]:
    p_neg, p_pos = predict_proba(params, [sample])[0]
    return float(p_neg), float(p_pos)


def total_loss(params: ParamVector, data: Sequence[Sample]) -> float:
    """Summed (not averaged) cross-entropy over ``data``; 0.0 for an empty list."""
    if not data:
        return 0.0
    inputs, labels = design_matrix(params.spec, data)
    log_probs = _log_probs(params.spec, params.values, inputs)
    return float(-log_probs[np.arange(labels.shape[0]), labels].sum())


def loss_and_gradient(params: ParamVector, data: Sequence[Sample]) -> Tuple[float, ParamVector]:
    inputs, labels = design_matrix(params.spec, data)
    loss, grad = _loss_and_gradient(params.spec, params.values, inputs, labels)
    return loss, params.with_values(grad)


def gradient(params: ParamVector, data: Sequence[Sample]) -> ParamVector:
    """Backpropagated gradient of :func:`total_loss`."""
    return loss_and_gradient(params, data)[1]


def sgd_epochs(
    params: ParamVector,
    data: Sequence[Sample],
    lr: float,
    epochs: int,
    prox: Optional[Tuple[float, ParamVector]] = None,
    batch_size: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> ParamVector:
    """Run ``epochs`` passes of gradient descent on the summed cross-entropy.

    Args:
        params (ParamVector): Starting point.
        data (Sequence[Sample]): Local samples.
        lr (float): Step size. Zero leaves the parameters unchanged.
        epochs (int): Number of passes, at least 1.
        prox (Tuple[float, ParamVector], optional): (mu, anchor). Adds (mu/2)*||theta - anchor||^2
            to the objective. Defaults to None.
        batch_size (int, optional): Mini-batch size. None means one full-batch step per epoch.
        rng (np.random.Generator, optional): Shuffles mini-batches; required when batch_size is set.

    Returns:
        ParamVector: The trained parameters.

    Raises:
        TrainingDivergenceError: A loss or gradient became non-finite.
    """
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if lr < 0:
        raise ValueError(f"lr must be non-negative, got {lr}")

    anchor = None
    mu = 0.0
    if prox is not None:
        mu, anchor_params = prox
        if anchor_params.spec != params.spec:
            raise ShapeError("Proximal anchor does not match the model spec")
        anchor = anchor_params.values

    if batch_size is not None and rng is None:
        raise ValueError("Mini-batch training needs a random generator")

    spec = params.spec
    inputs, labels = design_matrix(spec, data)
    n_samples = labels.shape[0]
    theta = params.values.copy()

    for epoch in range(epochs):
        if batch_size is None or batch_size >= n_samples:
            batches = [np.arange(n_samples)]
        else:
            order = rng.permutation(n_samples)
            batches = [order[start : start + batch_size] for start in range(0, n_samples, batch_size)]

        for batch in batches:
            loss, grad = _loss_and_gradient(spec, theta, inputs[batch], labels[batch])
            if anchor is not None:
                diff = theta - anchor
                loss += 0.5 * mu * float(diff @ diff)
                grad = grad + mu * diff
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                logger.error(f"Local training diverged at epoch {epoch}")
                raise TrainingDivergenceError(f"Non-finite loss or gradient at epoch {epoch}")
            theta = theta - lr * grad

    return params.with_values(theta)


def fit_centralized(
    params: ParamVector, data: Sequence[Sample], lr: float, epochs: int
) -> ParamVector:
    """Single-node reference: full-batch descent on the mean cross-entropy of pooled data."""
    if not data:
        return params
    return sgd_epochs(params, data, lr / len(data), epochs)
