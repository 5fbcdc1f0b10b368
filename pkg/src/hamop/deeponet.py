"""DeepONet operator model in plain numpy with hand-written reverse mode.

The branch net encodes the sensor vector ``V`` (length ``m``), the trunk net encodes a
single time value. Both emit ``2 * l`` features, reshaped to ``(l, 2)``; the two
output channels (q and p) are the column-wise inner products plus a per-node bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._random import make_rng
from .errors import DivergenceDetected, ShapeMismatch

__all__ = [
    "Mlp",
    "DeepONetModel",
    "SchedulerConfig",
    "TrainConfig",
    "AdamW",
    "lr_at",
    "adjusted_inf_lr",
    "train",
    "DeepONetRegressor",
    "DEFAULT_INIT_LR",
    "DEFAULT_INF_LR",
    "DEFAULT_UPPER_BOUND",
]

DEFAULT_INIT_LR = 7.3256e-3
DEFAULT_INF_LR = 1.7369e-3
DEFAULT_UPPER_BOUND = 300

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x):
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x):
    return 0.5 * (1.0 + erf(x * _INV_SQRT2)) + x * _INV_SQRT2PI * np.exp(-0.5 * x * x)


class Mlp:
    """Fully connected net with GELU on hidden layers and a linear output layer."""

    def __init__(self, widths, rng=None):
        self.widths = [int(w) for w in widths]
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise ValueError(f"invalid layer widths {widths}")
        rng = make_rng(rng)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    def parameters(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend([W, b])
        return out

    def forward(self, x):
        cache = []
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            cache.append((h, z))
            h = z if i == last else gelu(z)
        return h, cache

    def backward(self, dout, cache):
        """Gradients ``[dW0, db0, dW1, ...]`` given ``dL/d(output)``."""
        grads = [None] * (2 * len(self.weights))
        g = dout
        for i in range(len(self.weights) - 1, -1, -1):
            h, z = cache[i]
            if i != len(self.weights) - 1:
                g = g * gelu_grad(z)
            grads[2 * i] = h.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = g @ self.weights[i].T
        return grads


class DeepONetModel:
    """Branch/trunk operator network ``V, t -> (q(t), p(t))``."""

    def __init__(self, n_sensors=100, n_branch=10, hidden=128, n_hidden=3, rng=None):
        rng = make_rng(rng)
        self.m = int(n_sensors)
        self.l = int(n_branch)
        hidden_widths = [int(hidden)] * int(n_hidden)
        self.branch = Mlp([self.m, *hidden_widths, 2 * self.l], rng)
        self.trunk = Mlp([1, *hidden_widths, 2 * self.l], rng)
        self.bias = np.zeros((self.m, 2))

    def parameters(self):
        """Parameter arrays in declaration order: branch, trunk, output bias."""
        return [*self.branch.parameters(), *self.trunk.parameters(), self.bias]

    def n_parameters(self):
        return sum(p.size for p in self.parameters())

    def _check(self, V, t):
        V = np.asarray(V, dtype=float)
        t = np.asarray(t, dtype=float)
        if V.ndim == 1:
            V = V[None, :]
        if V.ndim != 2 or V.shape[1] != self.m or t.shape != (self.m,):
            raise ShapeMismatch(
                f"expected V of shape (B, {self.m}) and t of shape ({self.m},), got {V.shape} and {t.shape}"
            )
        return V, t

    def _forward(self, V, t):
        hb, cb = self.branch.forward(V)
        ht, ct = self.trunk.forward(t[:, None])
        b = hb.reshape(len(V), self.l, 2)
        u = ht.reshape(self.m, self.l, 2)
        out = np.einsum("bkc,jkc->bjc", b, u) + self.bias
        return out, (b, u, cb, ct)

    def predict_grid(self, V, t):
        """Outputs of shape ``(B, m, 2)``; channel 0 is q, channel 1 is p."""
        V, t = self._check(V, t)
        return self._forward(V, t)[0]

    def forward(self, V, t):
        """``(q_hat, p_hat)`` each of shape ``(B, m)`` (or ``(m,)`` for a single vector)."""
        single = np.ndim(V) == 1
        out = self.predict_grid(V, t)
        q, p = out[..., 0], out[..., 1]
        return (q[0], p[0]) if single else (q, p)

    def loss_and_grads(self, V, t, Y):
        """Mean squared error over all ``B * m * 2`` outputs and its exact gradients."""
        V, t = self._check(V, t)
        Y = np.asarray(Y, dtype=float)
        out, (b, u, cb, ct) = self._forward(V, t)
        if Y.shape != out.shape:
            raise ShapeMismatch(f"labels have shape {Y.shape}, expected {out.shape}")
        diff = out - Y
        loss = float(np.mean(diff * diff))
        dout = 2.0 * diff / diff.size
        dbias = dout.sum(axis=0)
        db = np.einsum("bjc,jkc->bkc", dout, u).reshape(len(V), 2 * self.l)
        du = np.einsum("bjc,bkc->jkc", dout, b).reshape(self.m, 2 * self.l)
        grads = [*self.branch.backward(db, cb), *self.trunk.backward(du, ct), dbias]
        return loss, grads

    def loss(self, V, t, Y):
        V, t = self._check(V, t)
        out = self._forward(V, t)[0]
        Y = np.asarray(Y, dtype=float)
        if Y.shape != out.shape:
            raise ShapeMismatch(f"labels have shape {Y.shape}, expected {out.shape}")
        return float(np.mean((out - Y) ** 2))

    def widths(self):
        return self.branch.widths, self.trunk.widths


@dataclass(frozen=True)
class SchedulerConfig:
    init_lr: float = DEFAULT_INIT_LR
    inf_lr: float = DEFAULT_INF_LR
    upper_bound: int = DEFAULT_UPPER_BOUND
    max_epochs: int = 250
    kind: str = "explog"

    def __post_init__(self):
        if self.kind != "explog":
            raise ValueError(f"unsupported schedule {self.kind!r}")
        if not 0 < self.inf_lr < self.init_lr:
            raise ValueError("need 0 < inf_lr < init_lr")
        if not 0 < self.max_epochs <= self.upper_bound:
            raise ValueError("need 0 < max_epochs <= upper_bound")


def lr_at(cfg, n):
    """Log-linear decay from ``init_lr`` at epoch 0 to ``inf_lr`` at ``upper_bound``."""
    log0 = math.log(cfg.init_lr)
    return math.exp(log0 - (log0 - math.log(cfg.inf_lr)) * n / cfg.upper_bound)


def adjusted_inf_lr(init_lr, inf_lr, upper_bound, n1, lr_end):
    """Infimum learning rate that moves the decay line halfway (in log space) towards
    the rate ``lr_end`` actually reached at epoch ``n1``."""
    if min(init_lr, inf_lr, lr_end) <= 0 or not 0 < n1 <= upper_bound:
        raise ValueError("rates must be positive and 0 < n1 <= upper_bound")
    l0 = math.log(init_lr)
    return math.exp(0.5 * (l0 + math.log(inf_lr) + upper_bound / n1 * (math.log(lr_end) - l0)))


class AdamW:
    """Adaptive-moment optimiser with decoupled weight decay (in-place updates)."""

    def __init__(self, params, betas=(0.85, 0.98), weight_decay=1e-2, eps=1e-8):
        self.params = params
        self.beta1, self.beta2 = betas
        self.weight_decay = weight_decay
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads, lr):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            p *= 1.0 - lr * self.weight_decay
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 100
    betas: tuple = (0.85, 0.98)
    weight_decay: float = 1e-2
    epochs: int = 250
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    seed: int = 89
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not all(0 < b < 1 for b in self.betas):
            raise ValueError("betas must lie in (0, 1)")


def split_indices(n, val_fraction, rng):
    perm = make_rng(rng).permutation(n)
    n_val = int(round(n * val_fraction))
    if n - n_val < 1:
        n_val = 0
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def train(model, V, Y, t, cfg=TrainConfig(), callback=None):
    """Fit ``model`` on sensor matrix ``V`` (N, m) and targets ``Y`` (N, m, 2).

    A seeded ``val_fraction`` hold-out is kept aside. Returns the list of history rows
    ``{"epoch", "train_loss", "val_loss", "lr"}`` where ``train_loss`` is the mean
    mini-batch loss of the epoch. Raises :class:`DivergenceDetected` on a non-finite
    loss, carrying the history so far.
    """
    V = np.asarray(V, dtype=float)
    Y = np.asarray(Y, dtype=float)
    rng = make_rng(cfg.seed)
    tr, va = split_indices(len(V), cfg.val_fraction, rng)
    opt = AdamW(model.parameters(), cfg.betas, cfg.weight_decay)
    history = []
    for epoch in range(cfg.epochs):
        lr = lr_at(cfg.scheduler, epoch)
        order = tr[rng.permutation(len(tr))]
        losses, weights = [], []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = model.loss_and_grads(V[idx], t, Y[idx])
            if not np.isfinite(loss):
                raise DivergenceDetected(f"non-finite loss at epoch {epoch + 1}", history)
            with np.errstate(over="ignore", invalid="ignore"):
                opt.step(grads, lr)
            losses.append(loss)
            weights.append(len(idx))
        train_loss = float(np.average(losses, weights=weights))
        with np.errstate(over="ignore", invalid="ignore"):
            val_loss = model.loss(V[va], t, Y[va]) if len(va) else float("nan")
        if len(va) and not np.isfinite(val_loss):
            raise DivergenceDetected(f"non-finite validation loss at epoch {epoch + 1}", history)
        row = {"epoch": epoch + 1, "train_loss": train_loss, "val_loss": val_loss, "lr": lr}
        history.append(row)
        if callback is not None:
            callback(row)
    return history


def stack_targets(q, p):
    """``(N, m)`` position and momentum arrays to the flat estimator target ``(N, 2m)``."""
    return np.concatenate([np.asarray(q), np.asarray(p)], axis=-1)


def split_targets(y):
    y = np.asarray(y)
    m = y.shape[-1] // 2
    return y[..., :m], y[..., m:]


class DeepONetRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper: ``X`` is the ``(N, m)`` sensor matrix, ``y`` is ``[q | p]`` of
    shape ``(N, 2m)`` sampled on ``linspace(0, horizon, m)``."""

    def __init__(
        self,
        n_branch=10,
        hidden=128,
        n_hidden=3,
        horizon=2.0,
        epochs=250,
        batch_size=100,
        init_lr=DEFAULT_INIT_LR,
        inf_lr=DEFAULT_INF_LR,
        upper_bound=DEFAULT_UPPER_BOUND,
        betas=(0.85, 0.98),
        weight_decay=1e-2,
        val_fraction=0.2,
        random_state=89,
    ):
        self.n_branch = n_branch
        self.hidden = hidden
        self.n_hidden = n_hidden
        self.horizon = horizon
        self.epochs = epochs
        self.batch_size = batch_size
        self.init_lr = init_lr
        self.inf_lr = inf_lr
        self.upper_bound = upper_bound
        self.betas = betas
        self.weight_decay = weight_decay
        self.val_fraction = val_fraction
        self.random_state = random_state

    def _time_grid(self, m):
        return np.linspace(0.0, self.horizon, m)

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, dtype=np.float64)
        m = X.shape[1]
        if y.ndim != 2 or y.shape[1] != 2 * m:
            raise ShapeMismatch(f"y must have shape (N, {2 * m})")
        rng = make_rng(self.random_state)
        self.model_ = DeepONetModel(m, self.n_branch, self.hidden, self.n_hidden, rng)
        sched = SchedulerConfig(self.init_lr, self.inf_lr, self.upper_bound, min(self.epochs, self.upper_bound))
        cfg = TrainConfig(
            self.batch_size, tuple(self.betas), self.weight_decay, self.epochs, sched,
            seed=rng.integers(2**63), val_fraction=self.val_fraction,
        )
        q, p = split_targets(y)
        self.history_ = train(self.model_, X, np.stack([q, p], axis=-1), self._time_grid(m), cfg)
        self.n_features_in_ = m
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ShapeMismatch(f"X has {X.shape[1]} sensors, model expects {self.n_features_in_}")
        out = self.model_.predict_grid(X, self._time_grid(X.shape[1]))
        return stack_targets(out[..., 0], out[..., 1])
