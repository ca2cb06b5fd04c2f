"""Minibatch training with Adam or SGD-with-momentum."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NonFiniteError, TrainingDivergedError
from ..rng import substream
from .model import ClassifierModel, loss_and_grads

log = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "sgd-momentum")
PRECISIONS = ("float32", "float64")


@dataclass
class TrainConfig:
    epochs: int = 5
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    momentum: float = 0.9
    seed: int = 0
    precision: str = "float32"

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {PRECISIONS}, got {self.precision!r}")


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            mhat = self.m[k] / b1t
            vhat = self.v[k] / b2t
            params[k] -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(params[k].dtype)


class SGDMomentum:
    def __init__(self, params, lr, momentum=0.9):
        self.lr = lr
        self.momentum = momentum
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        for k, g in grads.items():
            self.v[k] = self.momentum * self.v[k] + g
            params[k] -= (self.lr * self.v[k]).astype(params[k].dtype)


def make_optimizer(cfg: TrainConfig, params):
    if cfg.optimizer == "adam":
        return Adam(params, cfg.learning_rate)
    return SGDMomentum(params, cfg.learning_rate, cfg.momentum)


def fit(
    model: ClassifierModel,
    images: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    shuffle_stream: str = "train/shuffle",
) -> ClassifierModel:
    """Train a copy of ``model`` on (images, labels); the input model is untouched.

    An empty dataset runs zero gradient steps and returns the copy unchanged.
    """
    out = model.copy()
    if out.dtype != cfg.precision:
        out.params = {k: v.astype(cfg.precision) for k, v in out.params.items()}
        out.dtype = cfg.precision
    n = len(images)
    if n == 0:
        return out
    images = np.asarray(images, dtype=out.dtype)
    labels = np.asarray(labels)
    opt = make_optimizer(cfg, out.params)
    for epoch in range(cfg.epochs):
        order = substream(cfg.seed, f"{shuffle_stream}/{epoch}").permutation(n)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            try:
                # divergence shows up as overflow before it is caught; keep it quiet
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, grads, _ = loss_and_grads(out, images[idx], labels[idx])
            except NonFiniteError as exc:
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, step {start // cfg.batch_size}"
                ) from exc
            opt.step(out.params, grads)
            epoch_losses.append(loss)
        log.info("epoch %d/%d mean loss %.5f", epoch + 1, cfg.epochs, float(np.mean(epoch_losses)))
    out.seed_lineage = dict(out.seed_lineage, train_seed=int(cfg.seed))
    return out


def train_standard(model: ClassifierModel, dataset, cfg: TrainConfig) -> ClassifierModel:
    """Standard cross-entropy training on a labeled dataset."""
    return fit(model, dataset.images, dataset.labels, cfg)
