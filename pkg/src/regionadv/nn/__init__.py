from .checkpoint import load_checkpoint, model_fingerprint, save_checkpoint
from .model import (
    ARCHITECTURES,
    CNN,
    MLP,
    ClassifierModel,
    accuracy,
    create_model,
    expected_param_shapes,
    forward,
    input_grad_all_logits,
    input_grad_ce,
    input_grad_logit,
    loss_and_grads,
    per_sample_losses,
    predict,
    softmax,
    summed_cross_entropy,
)
from .train import TrainConfig, fit, train_standard

__all__ = [
    "ARCHITECTURES",
    "CNN",
    "MLP",
    "ClassifierModel",
    "TrainConfig",
    "accuracy",
    "create_model",
    "expected_param_shapes",
    "fit",
    "forward",
    "input_grad_all_logits",
    "input_grad_ce",
    "input_grad_logit",
    "load_checkpoint",
    "loss_and_grads",
    "model_fingerprint",
    "per_sample_losses",
    "predict",
    "save_checkpoint",
    "softmax",
    "summed_cross_entropy",
    "train_standard",
]
