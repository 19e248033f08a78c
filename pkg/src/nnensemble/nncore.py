"""Small fully-connected regression networks trained with mini-batch SGD.

Everything here is plain numpy in float64.  Randomness comes from
``numpy.random.Generator`` backed by PCG64 and seeded through
``numpy.random.SeedSequence``, so a given (config, seed, data) triple yields
bit-identical parameters on any platform running the same numpy version.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "tanh")


class TrainingDiverged(RuntimeError):
    """Raised when the loss or a parameter becomes NaN/Inf during training."""

    def __init__(self, epoch: int, what: str = "loss"):
        self.epoch = epoch
        super().__init__(f"training diverged at epoch {epoch}: non-finite {what}")


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture and learning hyperparameters for one base learner.

    ``hidden2=None`` builds a single-hidden-layer network (used for the
    stacking meta-learner); otherwise there are always two hidden layers.
    """

    hidden1: int
    hidden2: Optional[int]
    activation: str = "relu"
    lr0: float = 0.01
    epochs: int = 10
    dropout_rate: float = 0.0
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.hidden1 < 1 or (self.hidden2 is not None and self.hidden2 < 1):
            raise ValueError("hidden layer sizes must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if not self.lr0 > 0:
            raise ValueError("lr0 must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    @property
    def hidden_sizes(self) -> tuple:
        if self.hidden2 is None:
            return (self.hidden1,)
        return (self.hidden1, self.hidden2)

    def with_(self, **changes) -> "NetworkConfig":
        return replace(self, **changes)


# The four fixed base-learner architectures.
PRESETS = {
    "M0": NetworkConfig(256, 16, "relu", 0.02024),
    "M1": NetworkConfig(16, 32, "tanh", 0.06929),
    "M2": NetworkConfig(128, 64, "relu", 0.03037),
    "M3": NetworkConfig(32, 32, "tanh", 0.09489),
}


@dataclass
class LossSpec:
    """Per-member training loss.

    ``kind="mse"`` is plain squared error.  ``kind="ncl"`` adds the negative
    correlation penalty ``lam * sum_j (f - y) * (p_j - y)`` against frozen
    peer predictions ``peers`` (shape ``(n_peers, n_rows)``, aligned with the
    training rows).
    """

    kind: str = "mse"
    lam: float = 0.0
    peers: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("mse", "ncl"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")

    def peer_residual_sum(self, y: np.ndarray, rows=None) -> Optional[np.ndarray]:
        """``sum_j (p_j - y)`` per example, or None when the penalty vanishes."""
        if self.kind != "ncl" or self.peers is None or len(self.peers) == 0:
            return None
        peers = self.peers if rows is None else self.peers[:, rows]
        return peers.sum(axis=0) - peers.shape[0] * y


@dataclass
class Network:
    weights: list
    biases: list
    activation: str
    dropout_rate: float = 0.0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    def params(self) -> list:
        """Parameter arrays in a fixed order: W1, b1, W2, b2, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())


def make_rng(*seed_parts: int) -> np.random.Generator:
    """PCG64 generator from a tuple of nonnegative integers."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(seed_parts))))


def init_network(config: NetworkConfig, n_inputs: int, seed: int = None) -> Network:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    seed = config.seed if seed is None else seed
    init_rng, net_rng = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF]).spawn(2)
    init_rng = np.random.Generator(np.random.PCG64(init_rng))
    sizes = (n_inputs,) + config.hidden_sizes + (1,)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(init_rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(weights, biases, config.activation, config.dropout_rate,
                   np.random.Generator(np.random.PCG64(net_rng)))


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return 0.5 * (1.0 + np.tanh(0.5 * z))  # overflow-free logistic


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - a * a
    return a * (1.0 - a)


def _draw_masks(net: Network, n_rows: int) -> list:
    p = net.dropout_rate
    keep = 1.0 / (1.0 - p)
    masks = []
    for w in net.weights[:-1]:
        m = net.rng.random((n_rows, w.shape[1])) >= p
        masks.append(m * keep)
    return masks


def _forward_cache(net: Network, X: np.ndarray, masks=None):
    """Forward pass keeping pre-activations and (masked) activations."""
    a = X
    zs, acts = [], [X]
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        if i == last:
            return z[:, 0], zs, acts
        h = _act(net.activation, z)
        zs.append((z, h))
        a = h if masks is None else h * masks[i]
        acts.append(a)


def forward(net: Network, x, mode: str = "infer"):
    """Network output for one example (returns float) or a batch (returns array).

    In ``"train"`` mode with a positive dropout rate, hidden activations are
    masked from the network's generator and kept units are scaled by
    ``1/(1-p)``, so ``"infer"`` mode uses no mask at all.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != net.n_inputs:
        raise ValueError(f"expected {net.n_inputs} input features, got shape {x.shape}")
    masks = None
    if mode == "train" and net.dropout_rate > 0:
        masks = _draw_masks(net, X.shape[0])
    out, _, _ = _forward_cache(net, X, masks)
    return float(out[0]) if single else out


def _loss_and_dout(out, y, peer_sum, lam):
    resid = out - y
    per_example = resid * resid
    dout = 2.0 * resid
    if peer_sum is not None and lam != 0.0:
        per_example = per_example + lam * resid * peer_sum
        dout = dout + lam * peer_sum
    return per_example.mean(), dout / len(y)


def _backprop(net, X, y, peer_sum, lam, masks):
    out, zs, acts = _forward_cache(net, X, masks)
    loss, delta = _loss_and_dout(out, y, peer_sum, lam)
    delta = delta[:, None]
    n_layers = len(net.weights)
    grads_w = [None] * n_layers
    grads_b = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i == 0:
            break
        delta = delta @ net.weights[i].T
        if masks is not None:
            delta = delta * masks[i - 1]
        z, h = zs[i - 1]
        delta = delta * _act_grad(net.activation, z, h)
    return loss, grads_w, grads_b


def gradient(net: Network, X, y, loss: LossSpec = None, masks=None) -> list:
    """Analytic gradient of the mean batch loss, in ``Network.params()`` order.

    ``masks`` optionally fixes the (already rescaled) dropout masks per hidden
    layer; without it the network is evaluated without dropout.
    """
    loss = loss or LossSpec()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    peer_sum = loss.peer_residual_sum(y)
    _, gw, gb = _backprop(net, X, y, peer_sum, loss.lam, masks)
    out = []
    for w, b in zip(gw, gb):
        out.extend((w, b))
    return out


def batch_loss(net: Network, X, y, loss: LossSpec = None, masks=None) -> float:
    """Mean per-example loss (the quantity ``gradient`` differentiates)."""
    loss = loss or LossSpec()
    y = np.asarray(y, dtype=float)
    out, _, _ = _forward_cache(net, np.asarray(X, dtype=float), masks)
    value, _ = _loss_and_dout(out, y, loss.peer_residual_sum(y), loss.lam)
    return value


def cosine_lr(lr0: float, epoch: int, cycle_len: int) -> float:
    """Cyclic cosine annealing: ``lr0`` at the start of every cycle."""
    if cycle_len < 1 or epoch < 0:
        raise ValueError("need cycle_len >= 1 and epoch >= 0")
    return lr0 * (1.0 + math.cos(math.pi * (epoch % cycle_len) / cycle_len)) / 2.0


def train(net: Network, X, y, config: NetworkConfig, loss: LossSpec = None, *,
          epochs: int = None, cycle_len: int = None,
          on_epoch: Callable[[int, float], None] = None) -> Network:
    """Mini-batch SGD, in place; returns ``net``.

    Rows are reshuffled every epoch from the network's own generator.  The
    learning rate follows ``cosine_lr`` with ``cycle_len`` defaulting to the
    number of epochs (one decay over the run).  ``on_epoch(epoch, mean_loss)``
    is called after every epoch.
    """
    loss = loss or LossSpec()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y row counts differ")
    if loss.peers is not None and loss.peers.shape[1] != X.shape[0]:
        raise ValueError("peer predictions are not aligned with the training rows")
    epochs = config.epochs if epochs is None else epochs
    cycle_len = epochs if cycle_len is None else cycle_len
    n = X.shape[0]
    bs = config.batch_size
    peer_sum_all = loss.peer_residual_sum(y)
    use_dropout = net.dropout_rate > 0
    for epoch in range(epochs):
        lr = cosine_lr(config.lr0, epoch, cycle_len)
        order = net.rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            masks = _draw_masks(net, len(idx)) if use_dropout else None
            ps = None if peer_sum_all is None else peer_sum_all[idx]
            batch, gw, gb = _backprop(net, X[idx], y[idx], ps, loss.lam, masks)
            total += batch * len(idx)
            for w, b, dw, db in zip(net.weights, net.biases, gw, gb):
                w -= lr * dw
                b -= lr * db
        mean_loss = total / n
        if not math.isfinite(mean_loss):
            raise TrainingDiverged(epoch)
        if not net.all_finite():
            raise TrainingDiverged(epoch, "parameter")
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)
    return net
