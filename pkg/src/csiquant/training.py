"""Loss, optimizer, and the training loop.

The loss follows the codec's convention: sum of squared errors over every
entry of the batch, divided by the batch size only (not per-entry
averaged).  Gradients are value-clipped element-wise before the Adam
update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .network import BLOCK_STYLES, Autoencoder


@dataclass
class TrainConfig:
    """Training hyperparameters plus the model fields they forward."""

    lr: float = 0.001
    batch_size: int = 32
    steps: int = 1000
    clip_value: float = 0.05
    seed: int = 0
    B: int = 4
    M: int = 48
    block_style: str = "jc"
    quant_aware: bool = True
    data: str = ""
    val: str = ""
    checkpoint_interval: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("TrainConfig.lr must be positive")
        if not self.clip_value > 0:
            raise ValueError("TrainConfig.clip_value must be positive")
        if int(self.batch_size) < 2:
            raise ValueError("TrainConfig.batch_size must be >= 2 (batch norm)")
        self.batch_size = int(self.batch_size)
        if int(self.steps) < 0:
            raise ValueError("TrainConfig.steps must be >= 0")
        self.steps = int(self.steps)
        if int(self.checkpoint_interval) < 0:
            raise ValueError("TrainConfig.checkpoint_interval must be >= 0")
        self.checkpoint_interval = int(self.checkpoint_interval)
        if self.block_style not in BLOCK_STYLES:
            raise ValueError(f"TrainConfig.block_style must be one of {BLOCK_STYLES}")
        if not 1 <= int(self.B) <= 8:
            raise ValueError("TrainConfig.B must lie in [1, 8]")
        self.B = int(self.B)
        self.M = int(self.M)
        self.seed = int(self.seed)
        self.quant_aware = bool(self.quant_aware)


def mse_loss(pred: Tensor, target) -> Tensor:
    """Sum of squared entry errors divided by the leading batch extent."""
    if not isinstance(target, Tensor):
        target = Tensor(np.asarray(target, dtype=np.float64))
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss: shape mismatch {pred.shape} vs {target.shape}")
    if pred.ndim < 1:
        raise ValueError("mse_loss: inputs must have a batch axis")
    diff = ag.sub(pred, target)
    return ag.mul(ag.sum_all(ag.mul(diff, diff)), 1.0 / pred.shape[0])


def clip_gradients(grads, clip_value: float):
    """Clamp every gradient entry into [-clip_value, clip_value] in place."""
    if not clip_value > 0:
        raise ValueError("clip_gradients: clip_value must be positive")
    for g in grads:
        if g is not None:
            np.clip(g, -clip_value, clip_value, out=g)
    return grads


class Adam:
    """Adam with bias correction over a named parameter list."""

    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params}

    def step(self, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def load_state(self, t: int, moments: dict) -> None:
        """Restore step counter and per-parameter (m, v) buffers by name."""
        names = {name for name, _ in self.params}
        if set(moments) != names:
            raise ValueError("Adam.load_state: moment names do not match parameters")
        self.t = int(t)
        for name, p in self.params:
            m, v = moments[name]
            if m.shape != p.data.shape or v.shape != p.data.shape:
                raise ValueError(f"Adam.load_state: shape mismatch for {name}")
            self.m[name] = np.array(m, dtype=np.float64)
            self.v[name] = np.array(v, dtype=np.float64)


def train_model(model: Autoencoder, data: np.ndarray, cfg: TrainConfig,
                optimizer: Adam | None = None, on_step=None, on_checkpoint=None):
    """Seeded mini-batch training; returns the (step, loss) trace.

    Each epoch is one seeded shuffle of the sample axis; the last partial
    batch is dropped.  ``on_step(step, loss)`` fires every step,
    ``on_checkpoint(step)`` at the configured interval.
    """
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[0]
    if n < cfg.batch_size:
        raise ValueError(f"train_model: {n} samples cannot fill a batch of {cfg.batch_size}")
    per_epoch = n // cfg.batch_size
    rng = np.random.default_rng(cfg.seed)
    opt = optimizer if optimizer is not None else Adam(model.params())
    trace = []
    perm = None
    for step in range(1, cfg.steps + 1):
        slot = (step - 1) % per_epoch
        if slot == 0:
            perm = rng.permutation(n)
        batch = data[perm[slot * cfg.batch_size:(slot + 1) * cfg.batch_size]]
        model.zero_grad()
        x = Tensor(batch)
        loss = mse_loss(model.forward(x, train=True), x)
        value = loss.item()
        if not np.isfinite(value):
            raise FloatingPointError(f"train_model: non-finite loss at step {step}")
        loss.backward()
        clip_gradients([p.grad for _, p in opt.params], cfg.clip_value)
        opt.step(cfg.lr)
        trace.append((step, value))
        if on_step is not None:
            on_step(step, value)
        if on_checkpoint is not None and cfg.checkpoint_interval \
                and step % cfg.checkpoint_interval == 0:
            on_checkpoint(step)
    return trace


def evaluate_mse(model: Autoencoder, data: np.ndarray, batch_size: int = 128) -> float:
    """Eval-mode loss over a whole set, chunked; quantizer in the loop."""
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[0]
    if n == 0:
        raise ValueError("evaluate_mse: empty dataset")
    total = 0.0
    with ag.no_grad():
        for lo in range(0, n, batch_size):
            chunk = data[lo:lo + batch_size]
            pred = model.forward(Tensor(chunk), train=False).data
            total += float(np.sum((pred - chunk) ** 2))
    return total / n
