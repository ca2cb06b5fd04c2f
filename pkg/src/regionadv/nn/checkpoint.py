"""Model checkpoints on top of the shared array container."""

from __future__ import annotations

import os

from .. import arrayio
from ..errors import ArtifactNotFoundError, CheckpointShapeError, ContainerFormatError
from .model import ClassifierModel, expected_param_shapes

KIND = "model-checkpoint"


def _meta(model: ClassifierModel) -> dict:
    return {
        "architecture": model.architecture,
        "input_shape": list(model.input_shape),
        "num_classes": model.num_classes,
        "dtype": model.dtype,
        "seed_lineage": model.seed_lineage,
    }


def save_checkpoint(model: ClassifierModel, path) -> None:
    arrayio.save(path, model.params, KIND, _meta(model))


def load_checkpoint(path) -> ClassifierModel:
    if not os.path.exists(path):
        raise ArtifactNotFoundError(f"checkpoint not found: {path}")
    arrays, meta, manifest = arrayio.load(path)
    if manifest.get("kind") != KIND:
        raise ContainerFormatError(
            f"not a model checkpoint (kind={manifest.get('kind')!r})"
        )
    architecture = meta["architecture"]
    input_shape = tuple(meta["input_shape"])
    num_classes = int(meta["num_classes"])
    expected = expected_param_shapes(architecture, input_shape, num_classes)
    got = {k: v.shape for k, v in arrays.items()}
    if got != expected:
        raise CheckpointShapeError(
            f"stored parameter shapes {got} do not match architecture "
            f"{architecture!r} with input {input_shape}: expected {expected}"
        )
    params = {name: arrays[name].astype(meta["dtype"], copy=False) for name in expected}
    return ClassifierModel(
        architecture=architecture,
        input_shape=input_shape,
        num_classes=num_classes,
        params=params,
        dtype=meta["dtype"],
        seed_lineage=meta.get("seed_lineage", {}),
    )


def model_fingerprint(model: ClassifierModel) -> str:
    """Content hash of the model, identical to the saved checkpoint's hash."""
    return arrayio.fingerprint(model.params, KIND, _meta(model))
