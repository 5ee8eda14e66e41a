"""Small dense Q-network: ReLU MLP, hand-written backprop, Adam with L2."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_HIDDEN = (256, 196, 128, 32)
_MAGIC = b"MMSMONN\x00"
_VERSION = 1


class NonFiniteLossError(FloatingPointError):
    pass


class DenseNet:
    """Fully connected net; rectifier on hidden layers, identity output."""

    def __init__(self, sizes, rng: np.random.Generator | None = None):
        self.sizes = [int(s) for s in sizes]
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for d_in, d_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = np.sqrt(6.0 / d_in)
            self.weights.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
            self.biases.append(np.zeros(d_out))

    @classmethod
    def for_agent(cls, state_dim: int, n_actions: int = 2, hidden=DEFAULT_HIDDEN, rng=None) -> "DenseNet":
        return cls([state_dim, *hidden, n_actions], rng)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @property
    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {flat.size}")
        k = 0
        for p in self.params:
            p[...] = flat[k:k + p.size].reshape(p.shape)
            k += p.size

    def copy(self) -> "DenseNet":
        twin = DenseNet.__new__(DenseNet)
        twin.sizes = list(self.sizes)
        twin.weights = [w.copy() for w in self.weights]
        twin.biases = [b.copy() for b in self.biases]
        return twin

    def forward(self, x) -> np.ndarray:
        h = np.asarray(x, dtype=float)
        single = h.ndim == 1
        if h.shape[-1] != self.sizes[0]:
            raise ValueError(f"input has {h.shape[-1]} features, net expects {self.sizes[0]}")
        h = np.atleast_2d(h)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h[0] if single else h

    __call__ = forward

    def loss_and_grads(self, x, actions, targets, l2: float = 0.0):
        """MSE on the chosen actions' outputs plus ``l2/2 * sum(W**2)``.

        Returns ``(mse, objective, grads)`` with grads ordered like ``params``.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        actions = np.asarray(actions, dtype=np.int64)
        targets = np.asarray(targets, dtype=float)
        B = len(x)
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        q = acts[-1][np.arange(B), actions]
        resid = targets - q
        mse = float(np.mean(resid ** 2))
        reg = 0.5 * l2 * sum(float(np.sum(w * w)) for w in self.weights)

        delta = np.zeros_like(acts[-1])
        delta[np.arange(B), actions] = -2.0 * resid / B
        grads = [None] * (2 * len(self.weights))
        for i in range(last, -1, -1):
            grads[2 * i] = acts[i].T @ delta + l2 * self.weights[i]
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (acts[i] > 0)
        return mse, mse + reg, grads


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l2: float = 1e-4
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params, grads) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train_step(net: DenseNet, opt: Adam, states, actions, targets) -> float:
    """One Adam update on the chosen-action MSE; returns the batch MSE."""
    if len(states) == 0:
        raise ValueError("empty batch")
    targets = np.asarray(targets, dtype=float)
    if not np.all(np.isfinite(targets)):
        raise NonFiniteLossError("non-finite regression targets")
    mse, _, grads = net.loss_and_grads(states, actions, targets, opt.l2)
    if not np.isfinite(mse):
        raise NonFiniteLossError(f"non-finite loss {mse}")
    opt.step(net.params, grads)
    return mse


def sync_target(online: DenseNet) -> DenseNet:
    return online.copy()


# ---------------------------------------------------------------------------
# checkpoints: magic, version, layer count, dims, little-endian float64 blob


def save_checkpoint(net: DenseNet, path) -> None:
    head = _MAGIC + struct.pack("<II", _VERSION, len(net.sizes)) + struct.pack(f"<{len(net.sizes)}I", *net.sizes)
    Path(path).write_bytes(head + net.get_flat().astype("<f8").tobytes())


def load_checkpoint(path) -> DenseNet:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path}: not a network checkpoint")
    version, n = struct.unpack_from("<II", raw, 8)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    sizes = struct.unpack_from(f"<{n}I", raw, 16)
    net = DenseNet(sizes)
    blob = np.frombuffer(raw, dtype="<f8", offset=16 + 4 * n)
    net.set_flat(blob.astype(float))
    return net
