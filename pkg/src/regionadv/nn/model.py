"""Classifier models: two fixed architectures, forward pass, gradients.

``ClassifierModel`` is a plain container of named parameter arrays plus
an architecture descriptor; all computation goes through the module
functions so that models stay immutable during inference and attacks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, InputShapeError, NonFiniteError
from ..rng import substream
from .layers import Conv2D, Dense, Flatten, Layer, MaxPool2D, ReLU

MLP = "mlp"
CNN = "cnn"
ARCHITECTURES = (MLP, CNN)

_MLP_HIDDEN = 256
_CNN_DENSE = 128


@dataclass
class ClassifierModel:
    architecture: str
    input_shape: tuple[int, ...]
    num_classes: int
    params: dict[str, np.ndarray]
    dtype: str = "float32"
    seed_lineage: dict = field(default_factory=dict)

    def copy(self) -> "ClassifierModel":
        return ClassifierModel(
            architecture=self.architecture,
            input_shape=self.input_shape,
            num_classes=self.num_classes,
            params={k: v.copy() for k, v in self.params.items()},
            dtype=self.dtype,
            seed_lineage=dict(self.seed_lineage),
        )


def build_plan(architecture: str, input_shape: tuple[int, ...], num_classes: int) -> list[Layer]:
    """Layer sequence for one of the two fixed architectures."""
    if architecture == MLP:
        flat = int(np.prod(input_shape))
        return [
            Flatten(),
            Dense("fc1", flat, _MLP_HIDDEN),
            ReLU(),
            Dense("fc2", _MLP_HIDDEN, num_classes),
        ]
    if architecture == CNN:
        if len(input_shape) != 3:
            raise InputShapeError(f"cnn needs (H, W, C) input, got {input_shape}")
        cin = input_shape[2]
        layers: list[Layer] = [
            Conv2D("conv1", 5, cin, 16),
            ReLU(),
            MaxPool2D("pool1"),
            Conv2D("conv2", 5, 16, 32),
            ReLU(),
            MaxPool2D("pool2"),
            Flatten(),
        ]
        shape = input_shape
        for layer in layers:
            shape = layer.output_shape(shape)
        layers += [
            Dense("fc1", shape[0], _CNN_DENSE),
            ReLU(),
            Dense("fc2", _CNN_DENSE, num_classes),
        ]
        return layers
    raise DomainError(f"unknown architecture {architecture!r} (expected one of {ARCHITECTURES})")


def expected_param_shapes(architecture, input_shape, num_classes) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for layer in build_plan(architecture, tuple(input_shape), num_classes):
        shapes.update(layer.param_shapes())
    return shapes


def create_model(
    architecture: str,
    input_shape: tuple[int, ...],
    num_classes: int = 10,
    seed: int = 0,
    dtype: str = "float32",
) -> ClassifierModel:
    """Initialize a model with seeded He-uniform weights and zero biases."""
    input_shape = tuple(int(d) for d in input_shape)
    plan = build_plan(architecture, input_shape, num_classes)
    params: dict[str, np.ndarray] = {}
    for layer in plan:
        if layer.param_shapes():
            params.update(layer.init_params(substream(seed, f"init/{layer.name}"), dtype))
    return ClassifierModel(
        architecture=architecture,
        input_shape=input_shape,
        num_classes=num_classes,
        params=params,
        dtype=dtype,
        seed_lineage={"init_seed": int(seed)},
    )


def _check_batch(model: ClassifierModel, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch)
    if batch.shape[1:] != model.input_shape:
        raise InputShapeError(
            f"batch shape {batch.shape[1:]} does not match model input {model.input_shape}"
        )
    return batch.astype(model.dtype, copy=False)


def _run_forward(model, batch, keep_caches=False):
    plan = build_plan(model.architecture, model.input_shape, model.num_classes)
    x = batch
    caches = []
    for layer in plan:
        x, cache = layer.forward(model.params, x)
        if keep_caches:
            caches.append(cache)
    return x, plan, caches


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: ClassifierModel, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Run the network; returns (logits, probabilities), both (B, K)."""
    batch = _check_batch(model, batch)
    logits, _, _ = _run_forward(model, batch)
    if not np.isfinite(logits).all():
        raise NonFiniteError("forward produced non-finite logits")
    return logits, softmax(logits)


def predict(model: ClassifierModel, batch: np.ndarray) -> np.ndarray:
    """Argmax labels; exact ties resolve to the lowest class index."""
    logits, _ = forward(model, batch)
    return logits.argmax(axis=1)


def accuracy(model: ClassifierModel, images: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(predict(model, images) == np.asarray(labels)))


def _check_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DomainError(
            f"labels must lie in [0, {num_classes}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    return labels.astype(np.int64, copy=False)


def per_sample_losses(model: ClassifierModel, batch: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Cross-entropy of each sample, computed via log-sum-exp (always >= 0)."""
    batch = _check_batch(model, batch)
    labels = _check_labels(labels, model.num_classes)
    logits, _, _ = _run_forward(model, batch)
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    return lse - logits[np.arange(len(labels)), labels]


def summed_cross_entropy(model: ClassifierModel, batch: np.ndarray, labels: np.ndarray,
                         chunk: int = 512) -> float:
    """Sum of per-sample losses, evaluated in fixed-size chunks."""
    total = 0.0
    n = len(batch)
    for start in range(0, n, chunk):
        total += float(per_sample_losses(model, batch[start:start + chunk],
                                         labels[start:start + chunk]).sum())
    return total


def loss_and_grads(
    model: ClassifierModel,
    batch: np.ndarray,
    labels: np.ndarray,
    wrt_input: bool = False,
):
    """Mean cross-entropy with parameter gradients (and input gradients on request).

    Returns (loss, grad_params, grad_input); ``grad_input`` is None unless
    ``wrt_input`` is set, in which case it has the batch's shape.
    """
    batch = _check_batch(model, batch)
    labels = _check_labels(labels, model.num_classes)
    logits, plan, caches = _run_forward(model, batch, keep_caches=True)
    n = batch.shape[0]
    probs = softmax(logits)
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    loss = float(np.mean(lse - logits[np.arange(n), labels]))
    if not np.isfinite(loss):
        raise NonFiniteError("loss is non-finite")

    gy = probs.astype(model.dtype, copy=True)
    gy[np.arange(n), labels] -= 1.0
    gy /= n
    grads: dict[str, np.ndarray] = {}
    for layer, cache in zip(reversed(plan), reversed(caches)):
        gy, layer_grads = layer.backward(model.params, cache, gy)
        grads.update(layer_grads)
    grad_input = gy if wrt_input else None
    return loss, grads, grad_input


def input_grad_ce(model: ClassifierModel, batch: np.ndarray, labels: np.ndarray):
    """One fused pass for attacks: returns (logits, d(mean CE)/d(batch))."""
    batch = _check_batch(model, batch)
    labels = _check_labels(labels, model.num_classes)
    logits, plan, caches = _run_forward(model, batch, keep_caches=True)
    n = batch.shape[0]
    gy = softmax(logits).astype(model.dtype, copy=True)
    gy[np.arange(n), labels] -= 1.0
    gy /= n
    for layer, cache in zip(reversed(plan), reversed(caches)):
        gy, _ = layer.backward(model.params, cache, gy)
    return logits, gy


def input_grad_logit(model: ClassifierModel, batch: np.ndarray, class_idx: int):
    """Returns (logits, gradient of the chosen class logit w.r.t. each input)."""
    batch = _check_batch(model, batch)
    logits, plan, caches = _run_forward(model, batch, keep_caches=True)
    gy = np.zeros_like(logits)
    gy[:, class_idx] = 1.0
    for layer, cache in zip(reversed(plan), reversed(caches)):
        gy, _ = layer.backward(model.params, cache, gy)
    return logits, gy


def input_grad_all_logits(model: ClassifierModel, batch: np.ndarray):
    """Returns (logits, grads) with grads[k] = d logit_k / d input, shape (K, B, *input).

    One forward pass; the per-layer caches are reused across the K backward
    passes (backward never mutates them).
    """
    batch = _check_batch(model, batch)
    logits, plan, caches = _run_forward(model, batch, keep_caches=True)
    grads = np.empty((model.num_classes,) + batch.shape, dtype=batch.dtype)
    for k in range(model.num_classes):
        gy = np.zeros_like(logits)
        gy[:, k] = 1.0
        for layer, cache in zip(reversed(plan), reversed(caches)):
            gy, _ = layer.backward(model.params, cache, gy)
        grads[k] = gy
    return logits, grads
