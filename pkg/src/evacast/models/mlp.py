"""Dense softmax classifier trained with mini-batch Adam on cross-entropy."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .. import _kernels as kernels
from ..errors import TrainingDivergedError, ValidationError
from ..features import NormalizationStats
from .adam import AdamConfig, AdamState, TrainHistory

DEFAULT_HIDDEN = (64, 64, 64)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class MlpModel:
    """ReLU hidden layers, softmax output; weights[i] maps layer i to i+1."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    normalization: NormalizationStats | None = None
    feature_names: tuple[str, ...] = ()

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"layer{i}.w", w))
            out.append((f"layer{i}.b", b))
        return out

    def copy(self) -> "MlpModel":
        return replace(self, weights=[w.copy() for w in self.weights],
                       biases=[b.copy() for b in self.biases])


def init_mlp(input_size: int, hidden=DEFAULT_HIDDEN, n_classes: int = 3,
             seed: int = 0) -> MlpModel:
    rng = np.random.default_rng(seed)
    sizes = [input_size, *hidden, n_classes]
    weights = [glorot_uniform(rng, sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)]
    biases = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]
    return MlpModel(weights=weights, biases=biases)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_cached(model: MlpModel, x: np.ndarray):
    activations = [x]
    a = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a = kernels.relu_forward(a @ w + b)
        activations.append(a)
    probs = softmax(a @ model.weights[-1] + model.biases[-1])
    return probs, activations


def mlp_forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Class probabilities for one feature vector or a batch of them."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.weights[0].shape[0]:
        raise ValidationError(
            f"input width {x.shape[1]} != model input size {model.weights[0].shape[0]}"
        )
    probs, _ = _forward_cached(model, np.ascontiguousarray(x))
    return probs[0] if single else probs


def cross_entropy(probs: np.ndarray, y: np.ndarray) -> float:
    picked = probs[np.arange(len(y)), y]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def loss_and_grads(model: MlpModel, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and gradients aligned with `model.parameters()`."""
    probs, activations = _forward_cached(model, x)
    n = len(y)
    loss = cross_entropy(probs, y)
    dz = probs.copy()
    dz[np.arange(n), y] -= 1.0
    dz /= n
    grads: list[np.ndarray | None] = [None] * (2 * len(model.weights))
    for layer in range(len(model.weights) - 1, -1, -1):
        a_prev = activations[layer]
        grads[2 * layer] = a_prev.T @ dz
        grads[2 * layer + 1] = dz.sum(axis=0)
        if layer > 0:
            da = dz @ model.weights[layer].T
            dz = kernels.relu_backward(da, a_prev)
    return loss, grads


def accuracy(model: MlpModel, x: np.ndarray, y: np.ndarray) -> float:
    probs = mlp_forward(model, x)
    return float(np.mean(probs.argmax(axis=1) == y))


def train_classifier(model: MlpModel, train, val, adam_cfg: AdamConfig,
                     seed: int) -> tuple[MlpModel, TrainHistory]:
    """Mini-batch Adam; returns the weights of the best-validation-accuracy epoch."""
    x_train, y_train = train
    x_val, y_val = val
    x_train = np.ascontiguousarray(x_train, dtype=np.float64)
    x_val = np.ascontiguousarray(x_val, dtype=np.float64)
    rng = np.random.default_rng(seed)
    work = model.copy()
    params = [p for _, p in work.parameters()]
    opt = AdamState(params)
    history = TrainHistory()
    best = work.copy()
    best_acc = -1.0
    n = len(y_train)
    for epoch in range(adam_cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, adam_cfg.batch_size):
            idx = perm[start:start + adam_cfg.batch_size]
            loss, grads = loss_and_grads(work, x_train[idx], y_train[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss}", epoch=epoch, batch=n_batches)
            opt.step(params, grads, adam_cfg)
            epoch_loss += loss
            n_batches += 1
        val_probs = mlp_forward(work, x_val)
        val_loss = cross_entropy(val_probs, y_val)
        val_acc = float(np.mean(val_probs.argmax(axis=1) == y_val))
        history.train_loss.append(epoch_loss / max(n_batches, 1))
        history.val_loss.append(val_loss)
        history.val_metric.append(val_acc)
        if val_acc > best_acc:
            best_acc = val_acc
            best = work.copy()
            history.selected_epoch = epoch
    best.normalization = model.normalization
    best.feature_names = model.feature_names
    return best, history
