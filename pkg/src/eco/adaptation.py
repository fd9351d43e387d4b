"""Adversarial residual domain adaptation.

Three dense networks: a discriminator deciding train vs test domain, a
residual adapter F(x) = x + R(x), and a reconstructor G penalizing loss of
content. Gradients are exact and hand-derived; the trainer is plain SGD with
momentum and is bit-reproducible per seed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, FormatError, TrainingDivergedError

SIGMOID_EPS = 1e-7

_ACT_CODES = {"linear": 0, "relu": 1, "sigmoid": 2}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return np.clip(1.0 / (1.0 + np.exp(-z)), SIGMOID_EPS, 1.0 - SIGMOID_EPS)
    return z


def _act_grad(z, a, kind):
    if kind == "relu":
        return (z > 0.0).astype(z.dtype)
    if kind == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


class DenseNetwork:
    """Fully-connected net; weights[i] has shape (dims[i], dims[i+1])."""

    def __init__(self, dims, activations, weights=None, biases=None):
        if len(activations) != len(dims) - 1:
            raise ValueError("one activation per layer required")
        self.dims = list(dims)
        self.activations = list(activations)
        self.weights = weights or [np.zeros((dims[i], dims[i + 1])) for i in range(len(dims) - 1)]
        self.biases = biases or [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise ValueError("parameter shapes do not chain with dims")

    @classmethod
    def create(cls, dims, activations, rng, zero_last=False):
        weights, biases = [], []
        for i in range(len(dims) - 1):
            scale = np.sqrt(2.0 / dims[i])
            W = rng.normal(0.0, scale, size=(dims[i], dims[i + 1]))
            if zero_last and i == len(dims) - 2:
                W = np.zeros_like(W)
            weights.append(W)
            biases.append(np.zeros(dims[i + 1]))
        return cls(dims, activations, weights, biases)

    def forward(self, x, cache=None):
        a = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if a.shape[1] != self.dims[0]:
            raise DimensionMismatchError(
                f"input dim {a.shape[1]} != network input {self.dims[0]}"
            )
        if cache is not None:
            cache.append(("input", a))
        for W, b, kind in zip(self.weights, self.biases, self.activations):
            z = a @ W + b
            a = _act(z, kind)
            if cache is not None:
                cache.append((kind, z, a))
        return a

    def backward(self, cache, grad_out):
        """Backprop grad wrt post-activation output; returns (param grads, grad wrt input)."""
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        dA = np.atleast_2d(grad_out)
        layers = cache[1:]
        a_prev_list = [cache[0][1]] + [entry[2] for entry in layers[:-1]]
        for i in range(len(layers) - 1, -1, -1):
            kind, z, a = layers[i]
            dZ = dA * _act_grad(z, a, kind)
            grads_w[i] = a_prev_list[i].T @ dZ
            grads_b[i] = dZ.sum(axis=0)
            dA = dZ @ self.weights[i].T
        return list(zip(grads_w, grads_b)), dA

    def params(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out.append(W)
            out.append(b)
        return out


@dataclass
class TrainingConfig:
    batch_size: int = 32
    alpha: float = 1.0
    weight_decay: float = 1.0  # applied to the residual network only
    learning_rate: float = 1e-3
    momentum: float = 0.9
    iterations: int = 1000
    seed: int = 0
    d_steps: int = 1  # discriminator updates per adapter update
    hidden: int = 2048
    recon_norm: str = "mse"  # "mse" or "l2"

    def __post_init__(self):
        if self.batch_size < 1 or self.alpha < 0 or self.learning_rate <= 0:
            raise ValueError("invalid training config")


class AdaptationModel:
    def __init__(self, dim, hidden=2048, seed=0, networks=None):
        self.dim = dim
        self.hidden = hidden
        if networks is not None:
            self.discriminator, self.residual, self.reconstructor = networks
        else:
            rng = np.random.default_rng(seed)
            self.discriminator = DenseNetwork.create(
                [dim, hidden, 1], ["relu", "sigmoid"], rng)
            # zero output layer: F starts as the exact identity
            self.residual = DenseNetwork.create(
                [dim, hidden, dim], ["relu", "linear"], rng, zero_last=True)
            self.reconstructor = DenseNetwork.create(
                [dim, hidden, dim], ["relu", "linear"], rng)

    def adapt(self, x):
        """F(x) = x + R(x); accepts a vector or a batch."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = np.atleast_2d(x)
        out = xb + self.residual.forward(xb)
        return out[0] if single else out


def discriminator_loss(model: AdaptationModel, train_batch, test_batch) -> float:
    """Sum over the batch of -log D(test) - log(1 - D(train))."""
    train_batch = np.atleast_2d(train_batch)
    test_batch = np.atleast_2d(test_batch)
    if train_batch.shape != test_batch.shape:
        raise DimensionMismatchError("train/test batches differ in shape")
    d_test = model.discriminator.forward(test_batch)[:, 0]
    d_train = model.discriminator.forward(train_batch)[:, 0]
    return float(np.sum(-np.log(d_test) - np.log(1.0 - d_train)))


def discriminator_grads(model: AdaptationModel, train_batch, test_batch):
    """Gradients of the summed log loss wrt discriminator parameters."""
    train_batch = np.atleast_2d(train_batch)
    test_batch = np.atleast_2d(test_batch)
    cache_t = []
    d_test = model.discriminator.forward(test_batch, cache_t)
    cache_n = []
    d_train = model.discriminator.forward(train_batch, cache_n)
    g_test, _ = model.discriminator.backward(cache_t, -1.0 / d_test)
    g_train, _ = model.discriminator.backward(cache_n, 1.0 / (1.0 - d_train))
    return [(gw_t + gw_n, gb_t + gb_n)
            for (gw_t, gb_t), (gw_n, gb_n) in zip(g_test, g_train)]


def generator_loss(model: AdaptationModel, test_batch, alpha: float,
                   recon_norm: str = "mse") -> float:
    """Mean over the batch of -log(1 - D(F(x))) + alpha * recon(G(F(x)), x)."""
    x = np.atleast_2d(test_batch)
    y = x + model.residual.forward(x)
    d = model.discriminator.forward(y)[:, 0]
    g = model.reconstructor.forward(y)
    adv = -np.log(1.0 - d)
    if recon_norm == "l2":
        recon = np.linalg.norm(g - x, axis=1)
    else:
        recon = np.mean((g - x) ** 2, axis=1)
    return float(np.mean(adv + alpha * recon))


def generator_grads(model: AdaptationModel, test_batch, alpha: float,
                    recon_norm: str = "mse"):
    """Gradients of the combined loss wrt residual and reconstructor params.

    The discriminator is a frozen function here; its gradient is only chained
    through to the adapter input.
    """
    x = np.atleast_2d(test_batch)
    B, D = x.shape
    cache_r = []
    r_out = model.residual.forward(x, cache_r)
    y = x + r_out
    cache_d = []
    d = model.discriminator.forward(y, cache_d)[:, 0]
    cache_g = []
    g = model.reconstructor.forward(y, cache_g)

    dL_dd = (1.0 / (1.0 - d[:, None])) / B
    _, dy_from_d = model.discriminator.backward(cache_d, dL_dd)
    diff = g - x
    if recon_norm == "l2":
        norms = np.maximum(np.linalg.norm(diff, axis=1, keepdims=True), 1e-12)
        dL_dg = alpha * diff / norms / B
    else:
        dL_dg = alpha * 2.0 * diff / D / B
    g_grads, dy_from_g = model.reconstructor.backward(cache_g, dL_dg)
    dy = dy_from_d + dy_from_g
    r_grads, _ = model.residual.backward(cache_r, dy)
    return r_grads, g_grads


class _SgdState:
    def __init__(self, network):
        self.velocity = [(np.zeros_like(W), np.zeros_like(b))
                         for W, b in zip(network.weights, network.biases)]

    def step(self, network, grads, lr, momentum, weight_decay=0.0):
        for i, (gW, gb) in enumerate(grads):
            if weight_decay:
                gW = gW + weight_decay * network.weights[i]
                gb = gb + weight_decay * network.biases[i]
            vW, vb = self.velocity[i]
            vW = momentum * vW - lr * gW
            vb = momentum * vb - lr * gb
            self.velocity[i] = (vW, vb)
            network.weights[i] = network.weights[i] + vW
            network.biases[i] = network.biases[i] + vb


def train(train_features, test_features, config: TrainingConfig):
    """Alternating adversarial training; returns (model, loss history)."""
    X_train = np.atleast_2d(np.asarray(train_features, dtype=np.float64))
    X_test = np.atleast_2d(np.asarray(test_features, dtype=np.float64))
    if X_train.shape[1] != X_test.shape[1]:
        raise DimensionMismatchError("train/test feature dims differ")
    if len(X_train) == 0 or len(X_test) == 0:
        raise ValueError("feature sets must be non-empty")
    dim = X_train.shape[1]
    model = AdaptationModel(dim, hidden=config.hidden, seed=config.seed)
    rng = np.random.default_rng(config.seed)
    opt_d = _SgdState(model.discriminator)
    opt_r = _SgdState(model.residual)
    opt_g = _SgdState(model.reconstructor)
    history = []
    B = config.batch_size
    # divergence is detected by the finiteness check, not by numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        return _train_loop(model, X_train, X_test, config, rng,
                           opt_d, opt_r, opt_g, history, B)


def _train_loop(model, X_train, X_test, config, rng, opt_d, opt_r, opt_g,
                history, B):
    for it in range(config.iterations):
        for _ in range(config.d_steps):
            tr = X_train[rng.integers(0, len(X_train), size=B)]
            te_adapted = model.adapt(X_test[rng.integers(0, len(X_test), size=B)])
            d_loss = discriminator_loss(model, tr, te_adapted)
            opt_d.step(model.discriminator,
                       discriminator_grads(model, tr, te_adapted),
                       config.learning_rate, config.momentum)
        te = X_test[rng.integers(0, len(X_test), size=B)]
        fg_loss = generator_loss(model, te, config.alpha, config.recon_norm)
        r_grads, g_grads = generator_grads(model, te, config.alpha, config.recon_norm)
        opt_r.step(model.residual, r_grads, config.learning_rate,
                   config.momentum, weight_decay=config.weight_decay)
        opt_g.step(model.reconstructor, g_grads, config.learning_rate, config.momentum)
        if not (np.isfinite(d_loss) and np.isfinite(fg_loss)):
            raise TrainingDivergedError(it)
        history.append((d_loss, fg_loss))
    return model, history


# --- checkpoint format ---------------------------------------------------

ECOA_MAGIC = b"ECOA"
ECOA_VERSION = 1


def _write_network(fh, net: DenseNetwork):
    fh.write(struct.pack("<I", len(net.dims)))
    fh.write(struct.pack(f"<{len(net.dims)}I", *net.dims))
    fh.write(bytes(_ACT_CODES[a] for a in net.activations))
    for W, b in zip(net.weights, net.biases):
        fh.write(W.astype("<f4").tobytes())
        fh.write(b.astype("<f4").tobytes())


def _read_network(fh) -> DenseNetwork:
    (n_dims,) = struct.unpack("<I", fh.read(4))
    dims = list(struct.unpack(f"<{n_dims}I", fh.read(4 * n_dims)))
    acts = [_ACT_NAMES[c] for c in fh.read(n_dims - 1)]
    weights, biases = [], []
    for i in range(n_dims - 1):
        W = np.frombuffer(fh.read(4 * dims[i] * dims[i + 1]), dtype="<f4")
        weights.append(W.reshape(dims[i], dims[i + 1]).astype(np.float64))
        b = np.frombuffer(fh.read(4 * dims[i + 1]), dtype="<f4")
        biases.append(b.astype(np.float64))
    return DenseNetwork(dims, acts, weights, biases)


def save_model(model: AdaptationModel, path, manifest: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(ECOA_MAGIC)
        fh.write(struct.pack("<II", ECOA_VERSION, 3))
        for net in (model.discriminator, model.residual, model.reconstructor):
            _write_network(fh, net)
    if manifest is not None:
        with open(str(path) + ".json", "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)


def load_model(path) -> AdaptationModel:
    with open(path, "rb") as fh:
        if fh.read(4) != ECOA_MAGIC:
            raise FormatError("bad ECOA magic")
        version, n_nets = struct.unpack("<II", fh.read(8))
        if version != ECOA_VERSION or n_nets != 3:
            raise FormatError(f"unsupported ECOA header: v{version}, {n_nets} networks")
        nets = [_read_network(fh) for _ in range(3)]
    model = AdaptationModel(nets[1].dims[0], hidden=nets[1].dims[1], networks=tuple(nets))
    return model
