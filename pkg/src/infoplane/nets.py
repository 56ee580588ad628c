"""Mirrored fully-connected autoencoder trained with SGD + momentum on MSE.

Hidden and output layers use the logistic sigmoid; the bottleneck is linear.
All arithmetic is float64 numpy so runs are bit-reproducible on one machine.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import batch_iterator
from .numkit import as_data_matrix

CHECKPOINT_FORMAT = "infoplane-autoencoder"
CHECKPOINT_VERSION = 1


class DivergenceError(FloatingPointError):
    pass


@dataclass(frozen=True)
class Architecture:
    input_dim: int = 784
    encoder_widths: tuple = (1000, 500, 250)
    bottleneck: int = 2

    def __post_init__(self):
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        if self.input_dim < 1 or self.bottleneck < 1 or any(w < 1 for w in self.encoder_widths):
            raise ValueError(f"all layer widths must be positive: {self}")

    @property
    def decoder_widths(self):
        return self.encoder_widths[::-1]

    @property
    def sizes(self):
        return [self.input_dim, *self.encoder_widths, self.bottleneck,
                *self.decoder_widths, self.input_dim]

    @property
    def activations(self):
        n = len(self.encoder_widths)
        return ["sigmoid"] * n + ["linear"] + ["sigmoid"] * (n + 1)

    @property
    def layer_names(self):
        n = len(self.encoder_widths)
        return ([f"E{i}" for i in range(1, n + 1)] + ["Z"]
                + [f"D{i}" for i in range(1, n + 1)] + ["Xp"])

    @property
    def bottleneck_index(self):
        return len(self.encoder_widths)

    def to_dict(self):
        d = asdict(self)
        d["encoder_widths"] = list(self.encoder_widths)
        return d


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class Autoencoder:
    arch: Architecture
    weights: list
    biases: list
    vel_w: list = field(default_factory=list)
    vel_b: list = field(default_factory=list)
    seed: int = 0
    iteration: int = 0

    def copy(self):
        return Autoencoder(
            self.arch,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            [v.copy() for v in self.vel_w],
            [v.copy() for v in self.vel_b],
            self.seed,
            self.iteration,
        )

    def parameters(self):
        return self.weights + self.biases

    def forward(self, X):
        """Activations of every layer after the input; the last one is the reconstruction."""
        X = as_data_matrix(X)
        if X.shape[1] != self.arch.input_dim:
            raise ValueError(f"expected {self.arch.input_dim} input columns, got {X.shape[1]}")
        acts = []
        h = X
        for W, b, kind in zip(self.weights, self.biases, self.arch.activations):
            z = h @ W + b
            h = sigmoid(z) if kind == "sigmoid" else z
            acts.append(h)
        return acts

    def gradients(self, X):
        """MSE loss on ``X`` and its gradient for every weight and bias."""
        X = as_data_matrix(X)
        acts = self.forward(X)
        out = acts[-1]
        loss = float(np.mean((out - X) ** 2))
        grad = 2.0 * (out - X) / out.size
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        inputs = [X] + acts[:-1]
        for layer in range(len(self.weights) - 1, -1, -1):
            if self.arch.activations[layer] == "sigmoid":
                a = acts[layer]
                grad = grad * a * (1.0 - a)
            gw[layer] = inputs[layer].T @ grad
            gb[layer] = grad.sum(axis=0)
            if layer:
                grad = grad @ self.weights[layer].T
        return loss, gw, gb

    def step(self, X, lr=0.1, momentum=0.5):
        """One SGD-with-momentum update; returns the loss before the update."""
        loss, gw, gb = self.gradients(X)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in gw + gb):
            raise DivergenceError(f"divergence at iteration {self.iteration}")
        for params, vels, grads in ((self.weights, self.vel_w, gw), (self.biases, self.vel_b, gb)):
            for p, v, g in zip(params, vels, grads):
                v *= momentum
                v += g
                p -= lr * v
        if not all(np.all(np.isfinite(p)) for p in self.parameters()):
            raise DivergenceError(f"divergence at iteration {self.iteration}")
        self.iteration += 1
        return loss

    def save(self, path):
        header = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "architecture": self.arch.to_dict(),
            "seed": self.seed,
            "iteration": self.iteration,
        }
        arrays = {"header": np.array(json.dumps(header))}
        for i, (w, b, vw, vb) in enumerate(zip(self.weights, self.biases, self.vel_w, self.vel_b)):
            arrays[f"W{i}"] = w
            arrays[f"b{i}"] = b
            arrays[f"vW{i}"] = vw
            arrays[f"vb{i}"] = vb
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            header = json.loads(str(data["header"]))
            if header.get("format") != CHECKPOINT_FORMAT:
                raise ValueError(f"{path}: not an autoencoder checkpoint")
            if header.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
            arch = Architecture(**header["architecture"])
            n = len(arch.sizes) - 1
            return cls(
                arch,
                [data[f"W{i}"].copy() for i in range(n)],
                [data[f"b{i}"].copy() for i in range(n)],
                [data[f"vW{i}"].copy() for i in range(n)],
                [data[f"vb{i}"].copy() for i in range(n)],
                header["seed"],
                header["iteration"],
            )


def init_autoencoder(arch, seed=0, gain=1.0):
    """Uniform fan-in/fan-out initialization, zero biases, zero momentum.

    Weights are drawn from ``U(-gain * r, gain * r)`` with
    ``r = sqrt(6 / (fan_in + fan_out))``.
    """
    rng = np.random.default_rng(seed)
    sizes = arch.sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = gain * np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Autoencoder(
        arch,
        weights,
        biases,
        [np.zeros_like(w) for w in weights],
        [np.zeros_like(b) for b in biases],
        seed,
    )


def forward(ae, X):
    return ae.forward(X)


def mse_loss(X_prime, X):
    X_prime = np.asarray(X_prime, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X_prime.shape != X.shape:
        raise ValueError(f"shape mismatch: {X_prime.shape} vs {X.shape}")
    return float(np.mean((X_prime - X) ** 2))


def sgd_momentum_step(ae, X, lr=0.1, momentum=0.5):
    return ae.step(X, lr=lr, momentum=momentum)


def epoch_seed(seed, epoch):
    return np.random.SeedSequence([seed, epoch])


def train(ae, X, epochs, batch_size=100, lr=0.1, momentum=0.5, seed=0, callback=None):
    """Train in place. ``callback(ae)`` runs before the first step and after every step.

    Returns the list of per-step (pre-update) losses.
    """
    X = as_data_matrix(X)
    losses = []
    if callback is not None:
        callback(ae)
    for epoch in range(epochs):
        for batch in batch_iterator(X, batch_size, epoch_seed(seed, epoch)):
            losses.append(ae.step(batch, lr=lr, momentum=momentum))
            if callback is not None:
                callback(ae)
    return losses


class MirroredAutoencoder(TransformerMixin, BaseEstimator):
    """Autoencoder estimator: ``transform`` gives bottleneck codes.

    ``fit`` accepts an optional ``callback(network)`` that is invoked at
    iteration 0 and after each SGD step, which is how trajectories are
    recorded without touching the training loop.
    """

    def __init__(self, bottleneck=2, encoder_widths=(1000, 500, 250), lr=0.1,
                 momentum=0.5, batch_size=100, epochs=100, init_gain=1.0, random_state=0):
        self.bottleneck = bottleneck
        self.encoder_widths = encoder_widths
        self.lr = lr
        self.momentum = momentum
        self.batch_size = batch_size
        self.epochs = epochs
        self.init_gain = init_gain
        self.random_state = random_state

    def fit(self, X, y=None, callback=None):
        X = check_array(X, dtype=np.float64)
        arch = Architecture(X.shape[1], tuple(self.encoder_widths), self.bottleneck)
        self.network_ = init_autoencoder(arch, self.random_state, self.init_gain)
        self.loss_curve_ = train(self.network_, X, self.epochs, self.batch_size, self.lr,
                                 self.momentum, self.random_state, callback)
        self.n_features_in_ = X.shape[1]
        return self

    def partial_fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if not hasattr(self, "network_"):
            arch = Architecture(X.shape[1], tuple(self.encoder_widths), self.bottleneck)
            self.network_ = init_autoencoder(arch, self.random_state, self.init_gain)
            self.loss_curve_ = []
            self.n_features_in_ = X.shape[1]
        self.loss_curve_.append(self.network_.step(X, self.lr, self.momentum))
        return self

    def transform(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        return self.network_.forward(X)[self.network_.arch.bottleneck_index]

    def reconstruct(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        return self.network_.forward(X)[-1]

    def score(self, X, y=None):
        """Negative reconstruction MSE (higher is better)."""
        X = check_array(X, dtype=np.float64)
        return -mse_loss(self.reconstruct(X), X)
