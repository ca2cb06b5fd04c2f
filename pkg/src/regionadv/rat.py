"""Region adversarial training.

The training set is partitioned by the attacked model's predictions:
points sent to the target class stay clean, the remaining pool is split
evenly, and one half is presented perturbed by a single universal
perturbation (with its true labels).  Retraining then minimizes the
summed loss over the three pools, warm-starting from the attacked model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .attacks import materialize
from .data import LabeledDataset
from .errors import ConfigError, InputShapeError, PreconditionError
from .nn import ClassifierModel, TrainConfig, fit, predict, summed_cross_entropy
from .rng import substream
from .tup import TupConfig, compute_tup

log = logging.getLogger(__name__)


@dataclass
class RatPartition:
    pool_target: LabeledDataset    # predicted as the target class; stays clean
    pool_perturbed: LabeledDataset  # half of the rest; receives the perturbation
    pool_clean: LabeledDataset     # other half; stays clean
    target: int

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (len(self.pool_target), len(self.pool_perturbed), len(self.pool_clean))


@dataclass
class RatConfig:
    target: int
    perturbation: np.ndarray | None = None   # precomputed r; wins over tup
    tup: TupConfig | None = None             # computed on a subset of the perturbed pool
    tup_subset: int = 1000
    epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    clip_to_valid: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.perturbation is None and self.tup is None:
            raise ConfigError("either a precomputed perturbation or a tup config is required")


def partition_by_prediction(model: ClassifierModel, dataset: LabeledDataset,
                            target: int, seed: int) -> RatPartition:
    """Split by predicted membership in the target class; seeded even split of the rest."""
    if len(dataset) == 0:
        raise PreconditionError("dataset must be nonempty")
    preds = predict(model, dataset.images)
    target_idx = np.flatnonzero(preds == target)
    rest = np.flatnonzero(preds != target)
    rest = rest[substream(seed, "rat/partition").permutation(len(rest))]
    half = (len(rest) + 1) // 2
    return RatPartition(
        pool_target=dataset.subset(target_idx, f"{dataset.name}/pred-t"),
        pool_perturbed=dataset.subset(np.sort(rest[:half]), f"{dataset.name}/perturbed"),
        pool_clean=dataset.subset(np.sort(rest[half:]), f"{dataset.name}/clean"),
        target=target,
    )


def _check_perturbation(model: ClassifierModel, r: np.ndarray) -> np.ndarray:
    r = np.asarray(r)
    if r.shape != model.input_shape:
        raise InputShapeError(
            f"perturbation shape {r.shape} does not match model input {model.input_shape}"
        )
    return r.astype(model.dtype, copy=False)


def rat_loss(model: ClassifierModel, partition: RatPartition, r: np.ndarray,
             clip_to_valid: bool = True) -> float:
    """Summed cross-entropy: clean target pool + clean half + perturbed half.

    True labels are used throughout; perturbed inputs keep the labels of
    their clean originals.
    """
    r = _check_perturbation(model, r)
    images = np.concatenate([
        partition.pool_target.images,
        partition.pool_clean.images,
        materialize(partition.pool_perturbed.images + r, clip_to_valid),
    ])
    labels = np.concatenate([
        partition.pool_target.labels,
        partition.pool_clean.labels,
        partition.pool_perturbed.labels,
    ])
    return summed_cross_entropy(model, images, labels)


def build_training_set(partition: RatPartition, r: np.ndarray,
                       clip_to_valid: bool = True):
    """Materialized training arrays plus a mask of which rows were perturbed.

    Only the perturbed pool's rows carry the perturbation; the other two
    pools are passed through bitwise untouched.
    """
    images = np.concatenate([
        partition.pool_target.images,
        partition.pool_clean.images,
        materialize(partition.pool_perturbed.images + r, clip_to_valid),
    ])
    labels = np.concatenate([
        partition.pool_target.labels,
        partition.pool_clean.labels,
        partition.pool_perturbed.labels,
    ])
    perturbed_mask = np.zeros(len(images), dtype=bool)
    perturbed_mask[len(images) - len(partition.pool_perturbed):] = True
    return images, labels, perturbed_mask


def resolve_perturbation(model: ClassifierModel, partition: RatPartition,
                         cfg: RatConfig) -> np.ndarray:
    """The perturbation to train against: precomputed, or computed on a pool subset."""
    if cfg.perturbation is not None:
        return _check_perturbation(model, cfg.perturbation)
    pool = partition.pool_perturbed
    n = min(len(pool), cfg.tup_subset)
    if n == 0:
        raise PreconditionError("perturbed pool is empty; cannot compute a perturbation")
    pick = substream(cfg.seed, "rat/tup-subset").choice(len(pool), size=n, replace=False)
    subset = pool.subset(np.sort(pick), f"{pool.name}/tup-x")
    result = compute_tup(model, subset, cfg.tup)
    if not result.converged:
        log.warning("perturbation search stopped unconverged at success %.3f",
                    result.final_success_on_X)
    return result.r


def rat_train(model: ClassifierModel, dataset: LabeledDataset, cfg: RatConfig) -> ClassifierModel:
    """Retrain (warm-start) against one universal perturbation; returns the new model."""
    partition = partition_by_prediction(model, dataset, cfg.target, cfg.seed)
    r = resolve_perturbation(model, partition, cfg)
    images, labels, mask = build_training_set(partition, r, cfg.clip_to_valid)
    log.info(
        "partition sizes: target=%d perturbed=%d clean=%d",
        *partition.sizes,
    )
    train_cfg = TrainConfig(
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        optimizer=cfg.optimizer,
        seed=cfg.seed,
        precision=model.dtype,
    )
    assert mask.sum() == len(partition.pool_perturbed)
    return fit(model, images, labels, train_cfg, shuffle_stream="rat/shuffle")
