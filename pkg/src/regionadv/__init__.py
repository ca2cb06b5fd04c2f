"""Targeted universal perturbations and region adversarial training.

A desk-scale library for constructing a single L-inf-bounded perturbation
that pushes most inputs of a small image classifier into a chosen target
class, and for retraining the classifier against it.
"""

from .attacks import (
    AttackConfig,
    PerturbationResult,
    fgsm,
    materialize,
    minimal_targeted,
    pgd,
    project_linf,
    universal_untargeted,
)
from .data import (
    LabeledDataset,
    SplitSpec,
    load_cifar10,
    load_mnist,
    make_synthetic_gaussians,
    resolve_dataset,
    sample_excluding_target,
    split_train_val,
)
from .nn import (
    ClassifierModel,
    TrainConfig,
    accuracy,
    create_model,
    forward,
    load_checkpoint,
    loss_and_grads,
    model_fingerprint,
    predict,
    save_checkpoint,
    train_standard,
)
from .rat import (
    RatConfig,
    RatPartition,
    build_training_set,
    partition_by_prediction,
    rat_loss,
    rat_train,
)
from .tup import (
    TupConfig,
    TupResult,
    compute_tup,
    load_perturbation,
    load_tup,
    save_perturbation,
    save_tup,
    success_rate,
)

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "ClassifierModel",
    "LabeledDataset",
    "PerturbationResult",
    "RatConfig",
    "RatPartition",
    "SplitSpec",
    "TrainConfig",
    "TupConfig",
    "TupResult",
    "accuracy",
    "build_training_set",
    "compute_tup",
    "create_model",
    "fgsm",
    "forward",
    "load_checkpoint",
    "load_cifar10",
    "load_mnist",
    "load_perturbation",
    "load_tup",
    "loss_and_grads",
    "make_synthetic_gaussians",
    "materialize",
    "minimal_targeted",
    "model_fingerprint",
    "partition_by_prediction",
    "pgd",
    "predict",
    "project_linf",
    "rat_loss",
    "rat_train",
    "resolve_dataset",
    "sample_excluding_target",
    "save_checkpoint",
    "save_perturbation",
    "save_tup",
    "split_train_val",
    "success_rate",
    "train_standard",
    "universal_untargeted",
]
