"""Shared test utilities: oracle models and the finite-difference checker."""

from __future__ import annotations

import numpy as np

from regionadv.nn import create_model, loss_and_grads
from regionadv.nn.model import per_sample_losses


def make_affine_model(w, b, pos_class=1, neg_class=0, num_classes=10):
    """An MLP whose decision between two classes is exactly affine.

    The hidden ReLU layer is pinned strictly positive on the probed domain
    (identity weights plus a large bias), so the network computes
    logit[pos] - logit[neg] = w . x + b exactly, with every other class
    logit far below.  This yields a closed-form L-inf oracle: the minimal
    budget that flips neg -> pos is |w . x + b| / ||w||_1.
    """
    w = np.asarray(w, dtype=np.float32)
    d = w.size
    shift = 10.0
    model = create_model("mlp", (d,), num_classes=num_classes, seed=0)
    hidden = model.params["fc1/W"].shape[1]
    assert d <= hidden
    w1 = np.zeros((d, hidden), dtype=np.float32)
    w1[:d, :d] = np.eye(d, dtype=np.float32)
    b1 = np.full(hidden, shift, dtype=np.float32)
    w2 = np.zeros((hidden, num_classes), dtype=np.float32)
    w2[:d, pos_class] = w
    b2 = np.full(num_classes, -50.0, dtype=np.float32)
    b2[neg_class] = 0.0
    b2[pos_class] = np.float32(b) - shift * w.sum()
    model.params.update({"fc1/W": w1, "fc1/b": b1, "fc2/W": w2, "fc2/b": b2})
    return model


def affine_flip_distance(w, b, x) -> float:
    """Closed-form minimal L-inf budget that moves x across w.x + b = 0."""
    w = np.asarray(w, dtype=np.float64)
    margin = float(w @ np.asarray(x, dtype=np.float64).ravel() + b)
    return abs(margin) / np.abs(w).sum()


def constant_class_model(input_shape, cls: int, num_classes: int = 10):
    """Zero-weight model with one biased logit: predicts ``cls`` everywhere."""
    model = create_model("mlp", tuple(input_shape), num_classes=num_classes, seed=0)
    for name, arr in model.params.items():
        model.params[name] = np.zeros_like(arr)
    b2 = model.params["fc2/b"]
    b2[cls] = 5.0
    return model


def zero_model(input_shape, num_classes: int = 10):
    model = create_model("mlp", tuple(input_shape), num_classes=num_classes, seed=0)
    for name, arr in model.params.items():
        model.params[name] = np.zeros_like(arr)
    return model


def finite_diff_errors(model, x, y, tensors, n_coords=32, step=1e-3, rng=None,
                       kink_rtol=1e-3):
    """Relative error of analytic vs central-difference gradients per tensor.

    The reference is evaluated on a float64 twin of the model (an accurate
    oracle for the same parameter values).  Central differences are invalid
    across ReLU/maxpool kinks, so coordinates where probes at ``step`` and
    ``step/4`` disagree are excluded; the surviving fraction is returned so
    callers can assert the check stayed meaningful.

    Returns {tensor_name: (rel_err, smooth_fraction)}; the pseudo-tensor
    name "__input__" checks the input gradient.
    """
    rng = rng or np.random.default_rng(0)
    x = np.asarray(x)
    y = np.asarray(y)
    _, grads, grad_input = loss_and_grads(model, x, y, wrt_input=True)

    twin = model.copy()
    twin.dtype = "float64"
    twin.params = {k: v.astype(np.float64) for k, v in model.params.items()}

    def loss_of(params, xx):
        probe_model = twin.copy()
        probe_model.params = params
        return float(np.mean(per_sample_losses(probe_model, xx.astype(np.float64), y)))

    out = {}
    for name in tensors:
        if name == "__input__":
            g = np.asarray(grad_input, dtype=np.float64).ravel()

            def probe(c, h):
                xp = x.astype(np.float64).copy()
                xp.ravel()[c] += h
                up = loss_of(twin.params, xp)
                xp.ravel()[c] -= 2 * h
                return (up - loss_of(twin.params, xp)) / (2 * h)
        else:
            g = np.asarray(grads[name], dtype=np.float64).ravel()

            def probe(c, h, _name=name):
                p = {k: v.copy() for k, v in twin.params.items()}
                p[_name].ravel()[c] += h
                up = loss_of(p, x)
                p[_name].ravel()[c] -= 2 * h
                return (up - loss_of(p, x)) / (2 * h)

        coords = rng.choice(g.size, size=min(n_coords, g.size), replace=False)
        fd = np.array([probe(c, step) for c in coords])
        fd_fine = np.array([probe(c, step / 4) for c in coords])
        scale = max(np.abs(fd).max(), np.abs(fd_fine).max(), 1e-12)
        smooth = np.abs(fd - fd_fine) <= kink_rtol * scale
        if not smooth.any():
            out[name] = (np.inf, 0.0)
            continue
        ref = fd[smooth]
        got = g[coords][smooth]
        rel = np.linalg.norm(ref - got) / max(np.linalg.norm(ref), np.linalg.norm(got), 1e-12)
        out[name] = (float(rel), float(smooth.mean()))
    return out
