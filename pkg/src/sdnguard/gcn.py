"""Dense two-layer (or deeper) graph convolutional network trained by full-batch gradient descent.

    Z = softmax(A_hat . ReLU(A_hat . X . W0) . W1)

No bias terms. Dropout is applied to hidden activations only, during training.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._rng import substream

CHECKPOINT_FORMAT = "sdnguard-gcn"
CHECKPOINT_VERSION = 1
LOG_FLOOR = 1e-12


class TrainingError(RuntimeError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch}")


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.15
    layers: int = 2
    hidden_width: int = 128
    weight_decay: float = 0.0005
    dropout: float = 0.5
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.layers < 1 or self.hidden_width < 1 or self.epochs < 0:
            raise ValueError("layers and hidden_width must be >= 1, epochs >= 0")


@dataclass
class GcnModel:
    weights: list
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    loss_history: list = field(default_factory=list)

    @property
    def W0(self):
        return self.weights[0]

    @property
    def W1(self):
        return self.weights[1]

    @property
    def d(self):
        return self.weights[0].shape[0]

    @property
    def h(self):
        return self.weights[0].shape[1]

    @property
    def c(self):
        return self.weights[-1].shape[1]


def init_weights(d, h, c, seed, layers=2, hyperparams=None) -> GcnModel:
    """Glorot-uniform weights, reproducible per seed."""
    if min(d, h, c) < 1:
        raise ValueError("d, h and c must be >= 1")
    rng = substream(seed, "init")
    dims = [d] + [h] * (layers - 1) + [c]
    weights = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    hp = hyperparams or Hyperparams(layers=layers, hidden_width=h, seed=seed)
    return GcnModel(weights, hp)


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _check_shapes(X, A_hat, model):
    n = X.shape[0]
    if A_hat.shape != (n, n):
        raise ValueError(f"A_hat has shape {A_hat.shape}, expected {(n, n)}")
    if X.shape[1] != model.d:
        raise ValueError(f"X has {X.shape[1]} features, model expects {model.d}")
    for a, b in zip(model.weights[:-1], model.weights[1:]):
        if a.shape[1] != b.shape[0]:
            raise ValueError("inconsistent weight shapes")


def _as_masks(dropout_mask, n_hidden):
    if dropout_mask is None:
        return [None] * n_hidden
    if isinstance(dropout_mask, np.ndarray):
        dropout_mask = [dropout_mask]
    if len(dropout_mask) != n_hidden:
        raise ValueError(f"expected {n_hidden} dropout masks, got {len(dropout_mask)}")
    return list(dropout_mask)


def _forward(AX, A_hat, weights, masks, p):
    # cache holds (pre-activation, dropped-out activation) per hidden layer
    cache = []
    P = AX @ weights[0]
    for l in range(1, len(weights)):
        H = np.maximum(P, 0.0)
        if masks[l - 1] is not None:
            H = H * masks[l - 1] / (1.0 - p)
        cache.append((P, H))
        # multiply by W first: A_hat is n x n, the product narrows to the layer width
        P = A_hat @ (H @ weights[l])
    return P, cache


def forward(X, A_hat, model: GcnModel, dropout_mask=None) -> np.ndarray:
    """Class probabilities Z (n x c). ``dropout_mask`` holds keep-flags per hidden layer."""
    X = np.asarray(X, dtype=np.float64)
    _check_shapes(X, A_hat, model)
    masks = _as_masks(dropout_mask, len(model.weights) - 1)
    logits, _ = _forward(A_hat @ X, A_hat, model.weights, masks, model.hyperparams.dropout)
    return softmax(logits)


def _one_hot(labels, c):
    Y = np.zeros((len(labels), c))
    Y[np.arange(len(labels)), labels] = 1.0
    return Y


def regularizer(model, weight_decay):
    return weight_decay * 0.5 * sum(float(np.sum(W * W)) for W in model.weights)


def loss(Z, labels, train_mask, model, weight_decay) -> float:
    """Mean masked cross-entropy plus weight_decay * (sum of squared Frobenius norms) / 2."""
    train_mask = np.asarray(train_mask, dtype=bool)
    if not train_mask.any():
        raise ValueError("training mask is empty")
    labels = np.asarray(labels, dtype=np.int64)
    idx = np.flatnonzero(train_mask)
    p = np.maximum(Z[idx, labels[idx]], LOG_FLOOR)
    return float(-np.mean(np.log(p))) + regularizer(model, weight_decay)


def loss_and_gradients(X, A_hat, model, labels, train_mask, weight_decay, dropout_mask=None, AX=None):
    """Loss and analytic gradients w.r.t. every weight matrix."""
    train_mask = np.asarray(train_mask, dtype=bool)
    if not train_mask.any():
        raise ValueError("training mask is empty")
    labels = np.asarray(labels, dtype=np.int64)
    weights = model.weights
    p = model.hyperparams.dropout
    masks = _as_masks(dropout_mask, len(weights) - 1)
    if AX is None:
        AX = A_hat @ X
    logits, cache = _forward(AX, A_hat, weights, masks, p)
    Z = softmax(logits)
    value = loss(Z, labels, train_mask, model, weight_decay)

    m = train_mask.sum()
    G = np.zeros_like(Z)
    idx = np.flatnonzero(train_mask)
    G[idx] = Z[idx] - _one_hot(labels[idx], Z.shape[1])
    # the log floor has zero gradient where it binds
    floored = Z[idx, labels[idx]] < LOG_FLOOR
    if floored.any():
        G[idx[floored]] = 0.0
    G /= m

    grads = [None] * len(weights)
    for l in range(len(weights) - 1, 0, -1):
        P_prev, H_prev = cache[l - 1]
        S = A_hat.T @ G
        grads[l] = H_prev.T @ S
        dH = S @ weights[l].T
        if masks[l - 1] is not None:
            dH = dH * masks[l - 1] / (1.0 - p)
        G = dH * (P_prev > 0)
    grads[0] = AX.T @ G
    grads = [g + weight_decay * W for g, W in zip(grads, weights)]
    return value, grads


def _training_arrays(graph, labels, train_mask):
    X = np.asarray(graph.X, dtype=np.float64)
    labels = np.asarray(graph.labels if labels is None else labels, dtype=np.int64)
    train_mask = np.asarray(graph.train_mask if train_mask is None else train_mask, dtype=bool)
    return X, labels, train_mask


def train(graph, A_hat, hyperparams: Hyperparams = Hyperparams(), labels=None, train_mask=None,
          n_classes=None, X=None) -> GcnModel:
    """Full-batch gradient descent with a fresh seeded dropout mask per epoch.

    ``labels`` are class indices 0..c-1 (defaults to ``graph.labels``) and
    ``X`` overrides ``graph.X`` (e.g. standardized features).
    """
    Xg, labels, train_mask = _training_arrays(graph, labels, train_mask)
    X = Xg if X is None else np.asarray(X, dtype=np.float64)
    if not train_mask.any():
        raise ValueError("training mask is empty")
    c = int(n_classes if n_classes is not None else labels[train_mask].max() + 1)
    present = np.unique(labels[train_mask])
    if len(present) < c:
        missing = sorted(set(range(c)) - set(present.tolist()))
        raise ValueError(f"classes {missing} have no node in the training mask")

    hp = hyperparams
    model = init_weights(X.shape[1], hp.hidden_width, c, hp.seed, hp.layers, hp)
    _check_shapes(X, A_hat, model)
    rng = substream(hp.seed, "dropout")
    AX = A_hat @ X
    n = X.shape[0]
    for epoch in range(hp.epochs):
        if hp.dropout > 0:
            masks = [rng.random((n, hp.hidden_width)) >= hp.dropout for _ in range(hp.layers - 1)]
        else:
            masks = None
        value, grads = loss_and_gradients(X, A_hat, model, labels, train_mask, hp.weight_decay, masks, AX=AX)
        if not math.isfinite(value):
            raise TrainingError(epoch, value)
        model.loss_history.append(value)
        model.weights = [W - hp.learning_rate * g for W, g in zip(model.weights, grads)]
        if not all(np.all(np.isfinite(W)) for W in model.weights):
            raise TrainingError(epoch, float("nan"))
    return model


def predict(model: GcnModel, X, A_hat) -> np.ndarray:
    """Argmax class per node, no dropout; ties go to the lowest class index."""
    return np.argmax(forward(X, A_hat, model), axis=1)


def save_checkpoint(model: GcnModel, path):
    """Text container: shapes, hyperparameters and row-major weights as exact float reprs."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "d": model.d,
        "h": model.h,
        "c": model.c,
        "hyperparams": asdict(model.hyperparams),
        "shapes": [list(W.shape) for W in model.weights],
        "weights": [[float(v) for v in W.ravel(order="C")] for W in model.weights],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> GcnModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    weights = [np.array(w, dtype=np.float64).reshape(shape) for w, shape in zip(doc["weights"], doc["shapes"])]
    return GcnModel(weights, Hyperparams(**doc["hyperparams"]))
