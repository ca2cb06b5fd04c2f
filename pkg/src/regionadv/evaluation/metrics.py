"""Measurement suite: robustness metrics, heatmaps, transfer, sweeps."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from ..attacks import AttackConfig, fgsm, materialize, minimal_targeted, pgd
from ..data import LabeledDataset, sample_excluding_target
from ..errors import (
    ConfigError,
    InfeasibleAttackError,
    InputShapeError,
    InsufficientSamplesError,
    PreconditionError,
)
from ..nn import ClassifierModel, predict
from ..rng import substream
from ..tup import TupConfig, compute_tup

ATTACK_KINDS = ("identity", "tup", "uni", "fgsm", "pgd", "minimal")


@dataclass
class AttackSpec:
    """Names the attack an evaluation runs and carries its parameters.

    ``tup`` and ``uni`` replay a precomputed perturbation; ``fgsm``/``pgd``
    are computed per sample; ``minimal`` runs the targeted minimal solver in
    until-success mode (so attack-reachable points always end up at the
    target class).
    """

    kind: str
    epsilon: float = 0.2
    max_iters: int = 40
    targeted: bool = False
    target: int | None = None
    perturbation: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack kind {self.kind!r} (expected {ATTACK_KINDS})")
        if self.kind in ("tup", "uni") and self.perturbation is None:
            raise ConfigError(f"attack {self.kind!r} needs a precomputed perturbation")
        if (self.kind == "minimal" or self.targeted) and self.target is None:
            raise ConfigError(f"attack {self.kind!r} needs a target class")


def adversarial_testset(model: ClassifierModel, testset: LabeledDataset,
                        spec: AttackSpec) -> np.ndarray:
    """Materialized adversarial images for the whole test set.

    For the ``minimal`` kind, points already predicted as the target (no
    attack applicable) and points the solver cannot reach stay clean.
    """
    images, labels = testset.images, testset.labels
    if spec.kind == "identity":
        return materialize(images + 0.0, True)
    if spec.kind in ("tup", "uni"):
        r = np.asarray(spec.perturbation, dtype=model.dtype)
        if r.shape != model.input_shape:
            raise InputShapeError(
                f"perturbation shape {r.shape} does not match model input {model.input_shape}"
            )
        return materialize(images + r, True)
    if spec.kind in ("fgsm", "pgd"):
        cfg = AttackConfig(epsilon=spec.epsilon, max_iters=spec.max_iters,
                           clip_to_valid=True, seed=spec.seed)
        ref = spec.target if spec.targeted else labels
        attack = fgsm if spec.kind == "fgsm" else pgd
        res = attack(model, images, ref, targeted=spec.targeted, cfg=cfg)
        return materialize(images + res.delta, True)
    # minimal, until-success: per-sample bisection toward the target
    cfg = AttackConfig(epsilon=spec.epsilon, max_iters=spec.max_iters,
                       clip_to_valid=True, until_success=True, seed=spec.seed)
    out = images.copy()
    preds = predict(model, images)
    for i in range(len(images)):
        if preds[i] == spec.target:
            continue
        try:
            res = minimal_targeted(model, images[i], spec.target, cfg)
        except InfeasibleAttackError:
            continue
        out[i] = materialize(images[i] + res.delta, True)
    return out


def accuracy_under_attack(model: ClassifierModel, testset: LabeledDataset,
                          spec: AttackSpec) -> float:
    """Fraction of perturbed test points still classified as their true label."""
    adv = adversarial_testset(model, testset, spec)
    return float(np.mean(predict(model, adv) == testset.labels))


def heatmap_source_target(
    model: ClassifierModel,
    testset: LabeledDataset,
    n_per_pair: int,
    attack: str,
    tups: dict[int, np.ndarray] | None = None,
    fgsm_epsilon: float = 0.2,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Success counts per (source, target) pair; diagonal excluded.

    Returns (targeted_counts, untargeted_counts), each K x K of ints.
    A targeted hit (prediction lands on the target) is by construction
    also an untargeted hit (prediction left the source class).
    """
    if n_per_pair < 1:
        raise ConfigError(f"n_per_pair must be >= 1, got {n_per_pair}")
    if attack not in ("tup", "fgsm"):
        raise ConfigError(f"heatmap attack must be 'tup' or 'fgsm', got {attack!r}")
    if attack == "tup" and not tups:
        raise ConfigError("heatmap over tup needs a target -> perturbation mapping")
    k = model.num_classes
    targeted = np.zeros((k, k), dtype=np.int64)
    untargeted = np.zeros((k, k), dtype=np.int64)
    for source in range(k):
        pool = np.flatnonzero(testset.labels == source)
        if len(pool) < n_per_pair:
            raise InsufficientSamplesError(
                f"class {source} has only {len(pool)} test samples, need {n_per_pair}"
            )
        pick = substream(seed, f"heatmap/source/{source}").choice(
            pool, size=n_per_pair, replace=False
        )
        xs = testset.images[np.sort(pick)]
        for target in range(k):
            if target == source:
                continue
            if attack == "tup":
                if target not in tups:
                    raise ConfigError(f"no perturbation supplied for target {target}")
                adv = materialize(xs + np.asarray(tups[target], dtype=model.dtype), True)
            else:
                cfg = AttackConfig(epsilon=fgsm_epsilon, clip_to_valid=True)
                res = fgsm(model, xs, target, targeted=True, cfg=cfg)
                adv = materialize(xs + res.delta, True)
            preds = predict(model, adv)
            targeted[source, target] = int(np.sum(preds == target))
            untargeted[source, target] = int(np.sum(preds != source))
    return targeted, untargeted


def targeted_success(model: ClassifierModel, dataset: LabeledDataset,
                     r: np.ndarray, target: int) -> float:
    """Success of a universal perturbation on points not already sent to the target."""
    preds = predict(model, dataset.images)
    mask = preds != target
    if not mask.any():
        return 0.0
    adv = materialize(dataset.images[mask] + np.asarray(r, dtype=model.dtype), True)
    return float(np.mean(predict(model, adv) == target))


def transfer_matrix(
    models: list[ClassifierModel],
    dataset: LabeledDataset,
    tups_per_model: list[dict[int, np.ndarray]],
) -> np.ndarray:
    """Cell (i, j): mean targeted success of model i's perturbations on model j.

    The diagonal is NaN (self-transfer is omitted).
    """
    if len(models) < 2:
        raise PreconditionError("transfer needs at least two models")
    if len(tups_per_model) != len(models):
        raise ConfigError("need one perturbation mapping per model")
    shape = models[0].input_shape
    for m in models:
        if m.input_shape != shape:
            raise InputShapeError(
                f"models must share the input shape; got {m.input_shape} vs {shape}"
            )
    n = len(models)
    out = np.full((n, n), np.nan)
    for i in range(n):
        if not tups_per_model[i]:
            raise ConfigError(f"model {i} supplies no perturbations")
        for j in range(n):
            if i == j:
                continue
            rates = [
                targeted_success(models[j], dataset, r, t)
                for t, r in sorted(tups_per_model[i].items())
            ]
            out[i, j] = float(np.mean(rates))
    return out


def size_of_x_sweep(
    model: ClassifierModel,
    train: LabeledDataset,
    validation: LabeledDataset,
    sizes: list[int],
    trials: int,
    base: TupConfig,
    seed: int = 0,
) -> list[dict]:
    """Mean validation success per working-set size, randomized target per trial.

    The projection step is disabled here so the comparison isolates the
    effect of the working-set size.
    """
    if list(sizes) != sorted(sizes):
        raise ConfigError("sizes must be ascending")
    series = []
    for size in sizes:
        rates = []
        for trial in range(trials):
            stream = substream(seed, f"xsweep/{size}/{trial}")
            target = int(stream.integers(model.num_classes))
            x_set = sample_excluding_target(
                train, model, target, size, seed=int(stream.integers(2**31))
            )
            cfg = replace(base, target=target, k=size, apply_projection=False)
            result = compute_tup(model, x_set, cfg)
            rates.append(targeted_success(model, validation, result.r, target))
        series.append({"size": int(size), "rates": rates, "mean_success": float(np.mean(rates))})
    return series


def param_sweep(
    model: ClassifierModel,
    x_set: LabeledDataset,
    validation: LabeledDataset,
    kind: str,
    values: list[float],
    base: TupConfig,
) -> list[dict]:
    """Success and wall time per projection-step (k) or radius (eta) value."""
    if kind not in ("k", "eta"):
        raise ConfigError(f"sweep kind must be 'k' or 'eta', got {kind!r}")
    if any(v <= 0 for v in values):
        raise ConfigError("sweep values must be positive")
    series = []
    for value in values:
        cfg = replace(base, k=int(value)) if kind == "k" else replace(base, eta=float(value))
        start = time.perf_counter()
        result = compute_tup(model, x_set, cfg)
        elapsed = time.perf_counter() - start
        series.append({
            "value": float(value),
            "success_on_x": result.final_success_on_X,
            "success_on_val": targeted_success(model, validation, result.r, cfg.target),
            "wall_time_s": elapsed,
            "converged": result.converged,
            "projections": result.projections_total,
            "passes": result.passes_used,
        })
    return series
