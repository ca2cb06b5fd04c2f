"""Dataset ingestion, splits, subset sampling, and synthetic corpora.

Images are float32 arrays in [0, 1] with shape (N, *feature_shape);
for image data the feature shape is (H, W, C).  Datasets are immutable
after construction (the arrays are marked read-only).
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    DatasetMismatchError,
    IdxFormatError,
    IdxMagicError,
    InsufficientSamplesError,
    PreconditionError,
)
from .rng import substream

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


@dataclass(frozen=True)
class LabeledDataset:
    images: np.ndarray
    labels: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DatasetMismatchError(
                f"{self.name}: {len(self.images)} images vs {len(self.labels)} labels"
            )
        self.images.flags.writeable = False
        self.labels.flags.writeable = False

    def __len__(self) -> int:
        return len(self.images)

    def subset(self, indices, name: str | None = None) -> "LabeledDataset":
        return LabeledDataset(
            images=self.images[indices].copy(),
            labels=self.labels[indices].copy(),
            name=name or self.name,
        )


@dataclass
class SplitSpec:
    validation_size: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.validation_size < 1:
            raise ConfigError(f"validation_size must be >= 1, got {self.validation_size}")


def _open(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_header(f, path, expected_magic, n_dims):
    lead = f.read(4)
    if len(lead) < 4:
        raise IdxFormatError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">i", lead)
    if magic != expected_magic:
        raise IdxMagicError(
            f"{path}: bad IDX magic 0x{magic:08x} (expected 0x{expected_magic:08x})"
        )
    head = f.read(4 * n_dims)
    if len(head) < 4 * n_dims:
        raise IdxFormatError(f"{path}: truncated IDX header")
    return struct.unpack(f">{n_dims}i", head)


def load_idx_images(path) -> np.ndarray:
    """Parse an IDX image file into a float32 (N, H, W, 1) array scaled to [0, 1]."""
    with _open(path) as f:
        count, rows, cols = _read_header(f, path, IDX_IMAGE_MAGIC, 3)
        raw = f.read()
    if len(raw) != count * rows * cols:
        raise IdxFormatError(
            f"{path}: header declares {count}x{rows}x{cols} pixels "
            f"but payload holds {len(raw)} bytes"
        )
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols, 1)
    return pixels.astype(np.float32) / 255.0


def load_idx_labels(path) -> np.ndarray:
    with _open(path) as f:
        (count,) = _read_header(f, path, IDX_LABEL_MAGIC, 1)
        raw = f.read()
    if len(raw) != count:
        raise IdxFormatError(
            f"{path}: header declares {count} labels but payload holds {len(raw)} bytes"
        )
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def load_mnist(images_path, labels_path, name: str = "mnist") -> LabeledDataset:
    """Load an MNIST-format IDX image/label pair."""
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if len(images) != len(labels):
        raise DatasetMismatchError(
            f"{images_path} has {len(images)} images but {labels_path} has {len(labels)} labels"
        )
    return LabeledDataset(images=images, labels=labels, name=name)


def write_idx_images(path, images_u8: np.ndarray) -> None:
    """Inverse of load_idx_images; expects uint8 (N, H, W)."""
    n, rows, cols = images_u8.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">4i", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(np.ascontiguousarray(images_u8, dtype=np.uint8).tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">2i", IDX_LABEL_MAGIC, len(labels)))
        f.write(np.ascontiguousarray(labels, dtype=np.uint8).tobytes())


CIFAR_RECORD = 3073  # label byte + 32*32*3 pixels


def load_cifar10(batch_paths, name: str = "cifar10") -> LabeledDataset:
    """Load CIFAR-10 binary batches into float32 (N, 32, 32, 3) in [0, 1]."""
    images = []
    labels = []
    for path in batch_paths:
        with _open(path) as f:
            raw = f.read()
        if len(raw) == 0 or len(raw) % CIFAR_RECORD:
            raise IdxFormatError(
                f"{path}: size {len(raw)} is not a multiple of the {CIFAR_RECORD}-byte record"
            )
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        labels.append(rec[:, 0].astype(np.int64))
        chw = rec[:, 1:].reshape(-1, 3, 32, 32)
        images.append(chw.transpose(0, 2, 3, 1).astype(np.float32) / 255.0)
    return LabeledDataset(
        images=np.concatenate(images), labels=np.concatenate(labels), name=name
    )


def split_train_val(ds: LabeledDataset, spec: SplitSpec) -> tuple[LabeledDataset, LabeledDataset]:
    """Seeded disjoint split; the two parts union back to ``ds``."""
    if spec.validation_size >= len(ds):
        raise PreconditionError(
            f"validation_size {spec.validation_size} must be < dataset size {len(ds)}"
        )
    order = substream(spec.seed, "split").permutation(len(ds))
    val_idx = order[: spec.validation_size]
    train_idx = order[spec.validation_size:]
    return (
        ds.subset(train_idx, f"{ds.name}/train"),
        ds.subset(val_idx, f"{ds.name}/val"),
    )


def sample_excluding_target(
    ds: LabeledDataset, model, target: int, size: int, seed: int
) -> LabeledDataset:
    """Uniform sample (without replacement) of points the model does not send to ``target``.

    This is the sampling rule for the perturbation working set: images the
    model already classifies as the target class carry no signal for it.
    """
    from .nn import predict  # local import to keep data importable standalone

    preds = predict(model, ds.images)
    eligible = np.flatnonzero(preds != target)
    if len(eligible) < size:
        raise InsufficientSamplesError(
            f"requested {size} samples not predicted as class {target}, "
            f"only {len(eligible)} eligible (short by {size - len(eligible)})"
        )
    pick = substream(seed, "sample-x").choice(eligible, size=size, replace=False)
    return ds.subset(np.sort(pick), f"{ds.name}/X-t{target}")


def make_synthetic_gaussians(
    n_per_class: int, means, std: float, seed: int
) -> LabeledDataset:
    """2-D Gaussian blobs clipped to [0, 1]^2; class = generating mean."""
    means = np.asarray(means, dtype=np.float64)
    if len(np.unique(means, axis=0)) != len(means):
        raise ConfigError("blob means must be distinct")
    rng = substream(seed, "gaussians")
    points = []
    labels = []
    for cls, mean in enumerate(means):
        pts = mean + std * rng.standard_normal((n_per_class, 2))
        points.append(np.clip(pts, 0.0, 1.0))
        labels.append(np.full(n_per_class, cls, dtype=np.int64))
    return LabeledDataset(
        images=np.concatenate(points).astype(np.float32),
        labels=np.concatenate(labels),
        name="gaussians",
    )


# --- procedural digit corpus -------------------------------------------------
#
# The experiment runs need an MNIST-shaped corpus.  When the real IDX files
# are not on disk, we render a deterministic 28x28 digit corpus and write it
# through the same IDX wire format, so the loader path is exercised end to
# end.  Glyphs are rendered large, thickened, rotated, then size-normalized
# into a 20x20 box and centered with jitter, mirroring the geometry of the
# real handwritten-digit files (thick antialiased strokes, normalized scale).

def _render_digit(rng: np.random.Generator, digit: int) -> np.ndarray:
    from PIL import Image, ImageDraw, ImageFilter, ImageFont

    size = int(rng.integers(40, 54))
    font = ImageFont.load_default(size=size)
    canvas = Image.new("L", (64, 64), 0)
    draw = ImageDraw.Draw(canvas)
    draw.text((32, 32), str(digit), fill=255, font=font, anchor="mm")
    canvas = canvas.filter(ImageFilter.MaxFilter(3))
    if rng.random() < 0.5:
        canvas = canvas.filter(ImageFilter.MaxFilter(3))
    canvas = canvas.rotate(
        float(rng.uniform(-12.0, 12.0)), resample=Image.BILINEAR, center=(32, 32)
    )
    arr = np.asarray(canvas)
    ys, xs = np.nonzero(arr > 32)
    if len(ys) == 0:
        return np.zeros((28, 28), dtype=np.uint8)
    crop = canvas.crop((xs.min(), ys.min(), xs.max() + 1, ys.max() + 1))
    w, h = crop.size
    scale = 20.0 / max(w, h)
    crop = crop.resize(
        (max(1, round(w * scale)), max(1, round(h * scale))), Image.BILINEAR
    )
    out = Image.new("L", (28, 28), 0)
    out.paste(crop, ((28 - crop.size[0]) // 2 + int(rng.integers(-2, 3)),
                     (28 - crop.size[1]) // 2 + int(rng.integers(-2, 3))))
    out = out.filter(ImageFilter.GaussianBlur(radius=float(rng.uniform(0.4, 0.7))))
    img = np.asarray(out, dtype=np.float32) / 255.0
    img *= float(rng.uniform(0.85, 1.0))
    img += rng.normal(0.0, 0.05, size=img.shape).astype(np.float32)
    return (np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)


def generate_digits_corpus(out_dir, n_train: int = 12000, n_test: int = 2000,
                           seed: int = 7) -> dict[str, str]:
    """Render a jittered-digit corpus and write it as the four MNIST-named IDX files."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {key: os.path.join(out_dir, fname) for key, fname in MNIST_FILES.items()}
    for split, count in (("train", n_train), ("test", n_test)):
        rng = substream(seed, f"digits/{split}")
        labels = rng.integers(0, 10, size=count).astype(np.uint8)
        images = np.stack([_render_digit(rng, int(d)) for d in labels])
        write_idx_images(paths[f"{split}_images"], images)
        write_idx_labels(paths[f"{split}_labels"], labels)
    return paths


def resolve_dataset(data_dir, generate_missing: bool = True,
                    corpus_seed: int = 7) -> tuple[LabeledDataset, LabeledDataset, str]:
    """Locate the MNIST IDX files under ``data_dir`` (``.gz`` accepted).

    Real files win; otherwise a deterministic synthetic digit corpus is
    generated under ``data_dir``/synth-digits and loaded through the same
    parser.  Returns (train, test, corpus_name).
    """
    def find(fname, base):
        for cand in (os.path.join(base, fname), os.path.join(base, fname + ".gz")):
            if os.path.exists(cand):
                return cand
        return None

    found = {k: find(v, data_dir) for k, v in MNIST_FILES.items()}
    if all(found.values()):
        corpus = "mnist"
    else:
        if not generate_missing:
            missing = [MNIST_FILES[k] for k, v in found.items() if v is None]
            raise ConfigError(f"dataset files missing under {data_dir}: {missing}")
        synth_dir = os.path.join(data_dir, "synth-digits")
        found = {k: os.path.join(synth_dir, v) for k, v in MNIST_FILES.items()}
        if not all(os.path.exists(p) for p in found.values()):
            generate_digits_corpus(synth_dir, seed=corpus_seed)
        corpus = "synth-digits"
    train = load_mnist(found["train_images"], found["train_labels"], name=f"{corpus}/train")
    test = load_mnist(found["test_images"], found["test_labels"], name=f"{corpus}/test")
    return train, test, corpus
