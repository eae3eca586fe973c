"""Stacked LSTM sequence classifier written directly in numpy.

Gate pre-activations are kept stacked in the order (f, i, g, o) so a whole
time step is a single matrix product. Every layer reads ``x_t U + h_{t-1} W + b``;
the cell update is the standard ``c_t = f * c_{t-1} + i * g`` with no squashing
of the cell state. Only the top layer's final hidden state feeds the softmax
head.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .degradation import DegradationMode

log = logging.getLogger(__name__)

GATES = ("f", "i", "g", "o")
PROB_FLOOR = 1e-12


def sigmoid(z):
    # tanh form: no overflow warnings and several times faster than expit.
    return 0.5 * np.tanh(0.5 * z) + 0.5


class TrainingError(RuntimeError):
    pass


class NumericError(FloatingPointError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    num_lstm_layers: int = 2
    hidden_dim: int = 100
    input_dim: int = 5
    num_classes: int = 4

    def __post_init__(self):
        if self.hidden_dim < 1 or self.num_lstm_layers < 1 or self.input_dim < 1:
            raise ValueError("layer count and dimensions must be positive")
        if self.num_classes != len(DegradationMode):
            raise ValueError(f"num_classes must be {len(DegradationMode)}")


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    rho: float = 0.9
    epsilon: float = 1e-8
    clip_norm: float | None = 5.0
    patience: int | None = 10
    min_delta: float = 1e-4
    init_seed: int = 0
    shuffle_seed: int = 1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.min_delta < 0:
            raise ValueError("min_delta must be >= 0")


@dataclass(eq=False)
class LstmLayerParams:
    """One layer's weights with the four gates stacked along the last axis.

    ``U`` is ``(input_dim, 4H)``, ``W`` is ``(H, 4H)``, ``b`` is ``(4H,)``.
    """

    U: np.ndarray
    W: np.ndarray
    b: np.ndarray

    @property
    def hidden_dim(self) -> int:
        return self.W.shape[0]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        h = self.hidden_dim
        s = slice(GATES.index(name) * h, (GATES.index(name) + 1) * h)
        return self.U[:, s], self.W[:, s], self.b[s]

    @classmethod
    def from_gates(cls, U: dict, W: dict, b: dict) -> "LstmLayerParams":
        return cls(
            np.concatenate([U[g] for g in GATES], axis=1),
            np.concatenate([W[g] for g in GATES], axis=1),
            np.concatenate([b[g] for g in GATES]),
        )

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmLayerParams":
        return cls(
            np.zeros((input_dim, 4 * hidden_dim)),
            np.zeros((hidden_dim, 4 * hidden_dim)),
            np.zeros(4 * hidden_dim),
        )


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, label) -> float:
    return float(-math.log(max(float(probs[int(label)]), PROB_FLOOR)))


def lstm_cell_forward(x_t, h_prev, c_prev, params: LstmLayerParams, step: int | None = None):
    """One LSTM step; works on a single vector or a batch of row vectors.

    Returns ``(h_t, c_t, cache)`` where ``cache`` holds the gate activations
    ``f, i, g, o`` and ``tanh(c_t)``.
    """
    h = params.hidden_dim
    z = x_t @ params.U + h_prev @ params.W + params.b
    f = sigmoid(z[..., :h])
    i = sigmoid(z[..., h : 2 * h])
    g = np.tanh(z[..., 2 * h : 3 * h])
    o = sigmoid(z[..., 3 * h :])
    c_t = f * c_prev + i * g
    tanh_c = np.tanh(c_t)
    h_t = o * tanh_c
    if not (np.all(np.isfinite(h_t)) and np.all(np.isfinite(c_t))):
        where = f" at time step {step}" if step is not None else ""
        raise NumericError(f"non-finite LSTM activation{where}")
    return h_t, c_t, {"f": f, "i": i, "g": g, "o": o, "tanh_c": tanh_c}


def _layer_forward(params: LstmLayerParams, X: np.ndarray):
    """Run one layer over ``X`` of shape ``(B, T, D)``."""
    B, T, _ = X.shape
    H = params.hidden_dim
    pre = X @ params.U + params.b
    hs = np.zeros((B, T + 1, H))
    cs = np.zeros((B, T + 1, H))
    acts = np.empty((B, T, 4 * H))
    tanh_c = np.empty((B, T, H))
    W = params.W
    for t in range(T):
        z = pre[:, t] + hs[:, t] @ W
        a = acts[:, t]
        a[:, : 2 * H] = sigmoid(z[:, : 2 * H])
        a[:, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
        a[:, 3 * H :] = sigmoid(z[:, 3 * H :])
        cs[:, t + 1] = a[:, :H] * cs[:, t] + a[:, H : 2 * H] * a[:, 2 * H : 3 * H]
        tanh_c[:, t] = np.tanh(cs[:, t + 1])
        hs[:, t + 1] = a[:, 3 * H :] * tanh_c[:, t]
    if not np.all(np.isfinite(hs)):
        bad = int(np.argmax(~np.all(np.isfinite(hs[:, 1:]), axis=(0, 2))))
        raise NumericError(f"non-finite LSTM activation at time step {bad}")
    return {"X": X, "hs": hs, "cs": cs, "acts": acts, "tanh_c": tanh_c}


def _layer_backward(params: LstmLayerParams, cache: dict, dH: np.ndarray):
    """Backpropagate ``dH`` (gradient w.r.t. every h_t, shape ``(B, T, H)``)."""
    X, hs, cs, acts, tanh_c = (cache[k] for k in ("X", "hs", "cs", "acts", "tanh_c"))
    B, T, D = X.shape
    H = params.hidden_dim
    dZ = np.empty((B, T, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    WT = params.W.T
    for t in reversed(range(T)):
        a = acts[:, t]
        f, i, g, o = a[:, :H], a[:, H : 2 * H], a[:, 2 * H : 3 * H], a[:, 3 * H :]
        dh = dH[:, t] + dh_next
        tc = tanh_c[:, t]
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = dZ[:, t]
        dz[:, :H] = dc * cs[:, t] * f * (1.0 - f)
        dz[:, H : 2 * H] = dc * g * i * (1.0 - i)
        dz[:, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H :] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz @ WT
    flat = dZ.reshape(B * T, 4 * H)
    grads = LstmLayerParams(
        U=X.reshape(B * T, D).T @ flat,
        W=hs[:, :T].reshape(B * T, H).T @ flat,
        b=flat.sum(axis=0),
    )
    dX = dZ @ params.U.T
    return grads, dX


class LstmNetwork:
    """Stacked LSTM layers plus a dense softmax head on the last hidden state."""

    def __init__(self, config: NetworkConfig, layers: list[LstmLayerParams], head_W: np.ndarray, head_b: np.ndarray):
        self.config = config
        self.layers = layers
        self.head_W = head_W
        self.head_b = head_b

    @classmethod
    def initialize(cls, config: NetworkConfig, seed: int = 0) -> "LstmNetwork":
        """Uniform(+-1/sqrt(input_dim + H)) weights, forget-gate bias 1, other biases 0."""
        rng = np.random.default_rng(seed)
        H = config.hidden_dim
        layers = []
        dim = config.input_dim
        for _ in range(config.num_lstm_layers):
            bound = 1.0 / math.sqrt(dim + H)
            b = np.zeros(4 * H)
            b[:H] = 1.0
            layers.append(
                LstmLayerParams(
                    rng.uniform(-bound, bound, (dim, 4 * H)),
                    rng.uniform(-bound, bound, (H, 4 * H)),
                    b,
                )
            )
            dim = H
        bound = 1.0 / math.sqrt(H)
        head_W = rng.uniform(-bound, bound, (H, config.num_classes))
        return cls(config, layers, head_W, np.zeros(config.num_classes))

    @classmethod
    def zeros(cls, config: NetworkConfig) -> "LstmNetwork":
        dims = [config.input_dim] + [config.hidden_dim] * (config.num_lstm_layers - 1)
        layers = [LstmLayerParams.zeros(d, config.hidden_dim) for d in dims]
        return cls(config, layers, np.zeros((config.hidden_dim, config.num_classes)), np.zeros(config.num_classes))

    def parameters(self) -> dict[str, np.ndarray]:
        """Live references to every trainable array, keyed by a stable name."""
        params = {}
        for n, layer in enumerate(self.layers):
            params[f"layer{n}.U"] = layer.U
            params[f"layer{n}.W"] = layer.W
            params[f"layer{n}.b"] = layer.b
        params["head.W"] = self.head_W
        params["head.b"] = self.head_b
        return params

    def copy(self) -> "LstmNetwork":
        return copy.deepcopy(self)

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 3 or X.shape[2] != self.config.input_dim or X.shape[1] < 1:
            raise ValueError(
                f"expected input of shape (batch, steps, {self.config.input_dim}), got {X.shape}"
            )
        return X

    def forward(self, X: np.ndarray):
        """Class probabilities ``(B, C)`` for a batch ``(B, T, D)``, plus caches."""
        X = self._check(X)
        caches = []
        inp = X
        for layer in self.layers:
            cache = _layer_forward(layer, inp)
            caches.append(cache)
            inp = cache["hs"][:, 1:]
        last = inp[:, -1]
        probs = softmax(last @ self.head_W + self.head_b)
        return probs, {"layers": caches, "last": last, "probs": probs}

    def backward(self, cache: dict, labels: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of the batch-mean cross-entropy for every parameter."""
        probs = cache["probs"]
        B = probs.shape[0]
        dlogits = probs.copy()
        dlogits[np.arange(B), labels] -= 1.0
        dlogits /= B
        grads = {"head.W": cache["last"].T @ dlogits, "head.b": dlogits.sum(axis=0)}
        top = cache["layers"][-1]
        dH = np.zeros(top["hs"][:, 1:].shape)
        dH[:, -1] = dlogits @ self.head_W.T
        for n in reversed(range(len(self.layers))):
            g, dH = _layer_backward(self.layers[n], cache["layers"][n], dH)
            grads[f"layer{n}.U"], grads[f"layer{n}.W"], grads[f"layer{n}.b"] = g.U, g.W, g.b
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for {name}")
        return grads

    def loss(self, X: np.ndarray, labels: np.ndarray) -> float:
        probs, _ = self.forward(X)
        picked = np.maximum(probs[np.arange(len(labels)), labels], PROB_FLOOR)
        return float(-np.mean(np.log(picked)))

    def forward_sequence(self, window: np.ndarray) -> np.ndarray:
        window = np.asarray(window, dtype=float)
        if window.ndim != 2:
            raise ValueError(f"expected a (steps, features) window, got shape {window.shape}")
        probs, _ = self.forward(window[None])
        return probs[0]

    def predict_proba(self, X: np.ndarray, batch_size: int = 256) -> np.ndarray:
        X = self._check(X)
        return np.concatenate([self.forward(X[s : s + batch_size])[0] for s in range(0, len(X), batch_size)])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def backward_bptt(window: np.ndarray, label, network: LstmNetwork) -> dict[str, np.ndarray]:
    """Exact gradient of ``cross_entropy(forward_sequence(window), label)``."""
    _, cache = network.forward(np.asarray(window, dtype=float)[None])
    return network.backward(cache, np.array([int(label)]))


def predict(network: LstmNetwork, window: np.ndarray) -> tuple[DegradationMode, np.ndarray]:
    probs = network.forward_sequence(window)
    # argmax returns the first maximum, i.e. the lowest class code on ties.
    return DegradationMode(int(np.argmax(probs))), probs


@dataclass
class RmsPropState:
    rho: float = 0.9
    epsilon: float = 1e-8
    learning_rate: float = 1e-3
    clip_norm: float | None = None
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float | None) -> dict[str, np.ndarray]:
    if max_norm is None:
        return grads
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


def rmsprop_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: RmsPropState):
    """In-place RMSProp update; returns ``(params, state)`` for convenience."""
    grads = clip_gradients(grads, state.clip_norm)
    for name, p in params.items():
        g = grads[name]
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
        acc = state.accumulators.get(name)
        if acc is None:
            acc = state.accumulators[name] = np.zeros_like(p)
        acc *= state.rho
        acc += (1.0 - state.rho) * g * g
        p -= state.learning_rate * g / np.sqrt(acc + state.epsilon)
    return params, state


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float


def train_arrays(
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_val: np.ndarray,
    y_val: np.ndarray,
    net_config: NetworkConfig = NetworkConfig(),
    train_config: TrainingConfig = TrainingConfig(),
) -> tuple[LstmNetwork, list[EpochRecord]]:
    """Mini-batch RMSProp training; returns the best-validation-loss snapshot."""
    if len(X_train) == 0 or len(X_val) == 0:
        raise ValueError("training and validation sets must be non-empty")
    net = LstmNetwork.initialize(net_config, train_config.init_seed)
    state = RmsPropState(train_config.rho, train_config.epsilon, train_config.learning_rate, train_config.clip_norm)
    shuffle = np.random.default_rng(train_config.shuffle_seed)
    params = net.parameters()
    history: list[EpochRecord] = []
    best, best_loss, since_best = net.copy(), math.inf, 0

    for epoch in range(1, train_config.epochs + 1):
        order = shuffle.permutation(len(X_train))
        total = 0.0
        for s in range(0, len(order), train_config.batch_size):
            idx = order[s : s + train_config.batch_size]
            try:
                probs, cache = net.forward(X_train[idx])
                grads = net.backward(cache, y_train[idx])
            except NumericError as exc:
                raise TrainingError(f"training diverged in epoch {epoch}: {exc}") from exc
            picked = np.maximum(probs[np.arange(len(idx)), y_train[idx]], PROB_FLOOR)
            total += float(-np.sum(np.log(picked)))
            rmsprop_step(params, grads, state)
        val_probs = net.predict_proba(X_val)
        picked = np.maximum(val_probs[np.arange(len(y_val)), y_val], PROB_FLOOR)
        val_loss = float(-np.mean(np.log(picked)))
        if not math.isfinite(val_loss):
            raise TrainingError(f"validation loss is not finite in epoch {epoch}")
        record = EpochRecord(
            epoch, total / len(X_train), val_loss, float(np.mean(np.argmax(val_probs, axis=1) == y_val))
        )
        history.append(record)
        log.info(
            "epoch %d train_loss %.4f val_loss %.4f val_acc %.4f",
            epoch, record.train_loss, record.val_loss, record.val_accuracy,
        )
        # The snapshot follows every improvement; only a real one resets patience.
        since_best = 0 if val_loss < best_loss - train_config.min_delta else since_best + 1
        if val_loss < best_loss:
            best, best_loss = net.copy(), val_loss
        if train_config.patience is not None and since_best >= train_config.patience:
            break
    return best, history


def train(split, net_config: NetworkConfig = NetworkConfig(), train_config: TrainingConfig = TrainingConfig()):
    """Train on a :class:`~laserfail.pipeline.SplitDataset`."""
    return train_arrays(
        split.features("train"),
        split.labels("train"),
        split.features("validation"),
        split.labels("validation"),
        net_config,
        train_config,
    )
