"""Per-sample attack primitives.

All attacks are pure functions of (model, input, config): no hidden
state, no random restarts, so identical calls return identical results.
``clip_to_valid`` controls whether adversarial images are materialized
inside [0, 1] when the classifier is consulted; the stored perturbation
itself is never clipped to the pixel range, only to the L-inf budget.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    BudgetExceededError,
    ConfigError,
    InfeasibleAttackError,
    InputShapeError,
    PreconditionError,
)
from .nn import forward, input_grad_all_logits, input_grad_ce, predict
from .rng import substream


@dataclass
class AttackConfig:
    epsilon: float = 0.1
    step_size: float | None = None  # defaults to epsilon / 4
    max_iters: int = 40
    kappa: float = 0.0
    clip_to_valid: bool = True
    seed: int = 0
    until_success: bool = False
    iter_cap: int = 640
    bisect_tol: float = 1e-3

    def __post_init__(self):
        # epsilon == 0 is admitted so one-step attacks can express "no budget"
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.kappa < 0:
            raise ConfigError(f"kappa must be >= 0, got {self.kappa}")
        if self.bisect_tol <= 0:
            raise ConfigError(f"bisect_tol must be > 0, got {self.bisect_tol}")


@dataclass
class PerturbationResult:
    delta: np.ndarray
    success: np.ndarray | bool
    achieved_norm: float
    iters_used: int


def project_linf(r: np.ndarray, eta: float) -> np.ndarray:
    """L2-nearest point of the L-inf ball of radius eta: componentwise clamp."""
    if eta <= 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    return np.clip(r, -eta, eta)


def materialize(x: np.ndarray, clip_to_valid: bool) -> np.ndarray:
    """Adversarial input as the classifier sees it."""
    return np.clip(x, 0.0, 1.0) if clip_to_valid else x


def linf_norm(delta: np.ndarray) -> float:
    return float(np.abs(delta).max()) if delta.size else 0.0


def _as_batch(model, x):
    x = np.asarray(x)
    if x.shape == model.input_shape:
        return x[None].astype(model.dtype), True
    if x.shape[1:] == model.input_shape:
        return x.astype(model.dtype, copy=False), False
    raise InputShapeError(
        f"input shape {x.shape} does not match model input {model.input_shape}"
    )


def _unbatch(arr, single):
    return arr[0] if single else arr


def _margins(logits: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Target logit minus the best other logit, per row."""
    rows = np.arange(len(logits))
    masked = logits.copy()
    masked[rows, target] = -np.inf
    return logits[rows, target] - masked.max(axis=1)


def _success_mask(logits, labels, targeted, kappa):
    preds = logits.argmax(axis=1)
    if targeted:
        return (preds == labels) & (_margins(logits, labels) >= kappa)
    return preds != labels


def fgsm(model, x, label_or_target, targeted: bool, cfg: AttackConfig) -> PerturbationResult:
    """One signed-gradient step: away from the label, or toward the target."""
    batch, single = _as_batch(model, x)
    labels = np.broadcast_to(np.asarray(label_or_target), (len(batch),)).astype(np.int64)
    _, grad = input_grad_ce(model, batch, labels)
    sign = np.sign(grad)
    delta = (-cfg.epsilon if targeted else cfg.epsilon) * sign
    delta = delta.astype(model.dtype)
    if cfg.clip_to_valid:
        delta = np.clip(batch + delta, 0.0, 1.0) - batch
    logits, _ = forward(model, batch + delta)
    success = _success_mask(logits, labels, targeted, cfg.kappa)
    return PerturbationResult(
        delta=_unbatch(delta, single),
        success=bool(success[0]) if single else success,
        achieved_norm=linf_norm(delta),
        iters_used=1,
    )


def pgd(model, x, label_or_target, targeted: bool, cfg: AttackConfig) -> PerturbationResult:
    """Iterated signed-gradient steps projected onto the budget ball around x.

    Rows stop moving as soon as they succeed.  In ``until_success`` mode the
    iteration limit doubles (up to ``iter_cap``) while any row keeps failing.
    """
    eps = cfg.epsilon
    alpha = cfg.step_size if cfg.step_size is not None else eps / 4.0
    if alpha > eps:
        warnings.warn(f"pgd step_size {alpha} exceeds budget {eps}", stacklevel=2)
    batch, single = _as_batch(model, x)
    labels = np.broadcast_to(np.asarray(label_or_target), (len(batch),)).astype(np.int64)
    x0 = batch.copy()
    x_adv = batch.copy()
    active = np.ones(len(batch), dtype=bool)
    success = np.zeros(len(batch), dtype=bool)
    limit = cfg.max_iters
    iters = 0
    while active.any():
        idx = np.flatnonzero(active)
        logits, grad = input_grad_ce(model, x_adv[idx], labels[idx])
        ok = _success_mask(logits, labels[idx], targeted, cfg.kappa)
        if ok.any():
            success[idx[ok]] = True
            active[idx[ok]] = False
            idx = idx[~ok]
            grad = grad[~ok]
            if idx.size == 0:
                break
        if iters >= limit:
            if cfg.until_success and limit < cfg.iter_cap:
                limit = min(2 * limit, cfg.iter_cap)
            else:
                break
        step = (alpha * np.sign(grad)).astype(model.dtype)
        moved = x_adv[idx] - step if targeted else x_adv[idx] + step
        delta = np.clip(moved - x0[idx], -eps, eps)
        x_adv[idx] = np.clip(x0[idx] + delta, 0.0, 1.0) if cfg.clip_to_valid else x0[idx] + delta
        iters += 1
    idx = np.flatnonzero(active)
    if idx.size:
        logits, _ = forward(model, x_adv[idx])
        ok = _success_mask(logits, labels[idx], targeted, cfg.kappa)
        success[idx[ok]] = True
    delta = x_adv - x0
    return PerturbationResult(
        delta=_unbatch(delta, single),
        success=bool(success[0]) if single else success,
        achieved_norm=linf_norm(delta),
        iters_used=iters,
    )


def minimal_targeted(model, x, target: int, cfg: AttackConfig) -> PerturbationResult:
    """Smallest-found perturbation sending x to the target class.

    Feasibility at a given budget is decided by a targeted PGD probe; the
    budget is bisected down from ``cfg.epsilon`` until the interval is
    narrower than ``cfg.bisect_tol``.  The perturbation from the smallest
    feasible probe is returned.
    """
    x = np.asarray(x)
    if x.shape != model.input_shape:
        raise InputShapeError(
            f"minimal_targeted expects a single input of shape {model.input_shape}, got {x.shape}"
        )
    if cfg.epsilon <= 0:
        raise ConfigError(f"epsilon (the budget ceiling) must be > 0, got {cfg.epsilon}")
    if int(predict(model, x[None])[0]) == target:
        raise PreconditionError(f"input is already classified as target class {target}")

    total_iters = 0
    best_margin = float("-inf")

    def probe(eps: float):
        nonlocal total_iters, best_margin
        pcfg = replace(cfg, epsilon=eps, step_size=eps / 4.0, until_success=False)
        res = pgd(model, x, target, targeted=True, cfg=pcfg)
        total_iters += res.iters_used
        logits, _ = forward(model, materialize(x + res.delta, cfg.clip_to_valid)[None])
        margin = float(_margins(logits, np.array([target]))[0])
        best_margin = max(best_margin, margin)
        return bool(res.success), res.delta

    feasible, best_delta = probe(cfg.epsilon)
    if not feasible:
        raise InfeasibleAttackError(
            f"no perturbation within budget {cfg.epsilon} reaches class {target} "
            f"(best margin {best_margin:.4g})",
            best_margin=best_margin,
        )
    lo, hi = 0.0, cfg.epsilon
    while hi - lo > cfg.bisect_tol:
        mid = 0.5 * (lo + hi)
        ok, delta = probe(mid)
        if ok:
            hi, best_delta = mid, delta
        else:
            lo = mid
    return PerturbationResult(
        delta=best_delta,
        success=True,
        achieved_norm=linf_norm(best_delta),
        iters_used=total_iters,
    )


def _linearized_escape(model, x, max_iters: int = 20, overshoot: float = 0.02):
    """Minimal-norm move off the current class via iterative linearization.

    Returns the total perturbation once the predicted class changes, or None
    if the iteration budget runs out first.
    """
    x0 = x[None]
    x_adv = x0.copy()
    logits, grads = input_grad_all_logits(model, x_adv)
    orig = int(logits.argmax(axis=1)[0])
    for _ in range(max_iters):
        if int(logits.argmax(axis=1)[0]) != orig:
            return (x_adv - x0)[0]
        w = grads[:, 0] - grads[orig, 0]          # (K, *input)
        f = logits[0] - logits[0, orig]           # (K,)
        norms = np.sqrt((w.reshape(len(f), -1) ** 2).sum(axis=1)) + 1e-12
        ratios = np.abs(f) / norms
        ratios[orig] = np.inf
        k = int(ratios.argmin())
        step = ((np.abs(f[k]) + 1e-6) / norms[k] ** 2) * w[k]
        x_adv = x_adv + (1.0 + overshoot) * step[None].astype(x_adv.dtype)
        logits, grads = input_grad_all_logits(model, x_adv)
    if int(logits.argmax(axis=1)[0]) != orig:
        return (x_adv - x0)[0]
    return None


def universal_untargeted(model, dataset, eta: float, delta: float, cfg: AttackConfig,
                         max_passes: int = 10) -> PerturbationResult:
    """Single perturbation misclassifying at least a 1-delta fraction of the set.

    Sequentially aggregates linearized escape moves for points still
    classified correctly, keeping the running perturbation inside the
    eta-ball after every update.  Raises BudgetExceededError (carrying the
    best rate and perturbation) when the pass budget runs out.
    """
    if len(dataset) == 0:
        raise PreconditionError("dataset must be nonempty")
    images, labels = dataset.images, dataset.labels
    r = np.zeros(model.input_shape, dtype=model.dtype)

    def fooling_rate(pert):
        preds = predict(model, materialize(images + pert, cfg.clip_to_valid))
        return float(np.mean(preds != labels))

    rate = fooling_rate(r)
    best_rate, best_r = rate, r
    if rate >= 1.0 - delta:
        return PerturbationResult(delta=r, success=True, achieved_norm=linf_norm(r), iters_used=0)
    for pass_idx in range(max_passes):
        order = substream(cfg.seed, f"uni/shuffle/{pass_idx}").permutation(len(dataset))
        for i in order:
            x_pert = materialize(images[i] + r, cfg.clip_to_valid)
            if int(predict(model, x_pert[None])[0]) != labels[i]:
                continue
            move = _linearized_escape(model, x_pert, max_iters=cfg.max_iters)
            if move is None:
                continue
            r = project_linf(r + move, eta).astype(model.dtype)
        rate = fooling_rate(r)
        if rate > best_rate:
            best_rate, best_r = rate, r
        if rate >= 1.0 - delta:
            return PerturbationResult(
                delta=r, success=True, achieved_norm=linf_norm(r), iters_used=pass_idx + 1
            )
    raise BudgetExceededError(
        f"fooling rate {best_rate:.3f} below target {1.0 - delta:.3f} "
        f"after {max_passes} passes",
        best_rate=best_rate,
        best_delta=best_r,
    )
