import numpy as np
import pytest

from regionadv import TrainConfig, create_model, make_synthetic_gaussians, train_standard

BLOB_MEANS_4 = [(0.2, 0.2), (0.8, 0.8), (0.2, 0.8), (0.8, 0.2)]
BLOB_MEANS_10 = [
    (0.15, 0.15), (0.85, 0.85), (0.15, 0.85), (0.85, 0.15), (0.5, 0.1),
    (0.5, 0.9), (0.1, 0.5), (0.9, 0.5), (0.32, 0.62), (0.68, 0.38),
]


@pytest.fixture(scope="session")
def blob_data():
    return make_synthetic_gaussians(150, BLOB_MEANS_4, 0.05, seed=1)


@pytest.fixture(scope="session")
def blob_model(blob_data):
    model = create_model("mlp", (2,), num_classes=10, seed=0)
    return train_standard(model, blob_data, TrainConfig(epochs=40, batch_size=32, seed=0))


@pytest.fixture(scope="session")
def blob10_data():
    return make_synthetic_gaussians(80, BLOB_MEANS_10, 0.04, seed=2)


@pytest.fixture(scope="session")
def blob10_model(blob10_data):
    model = create_model("mlp", (2,), num_classes=10, seed=3)
    return train_standard(model, blob10_data, TrainConfig(epochs=60, batch_size=32, seed=3))


def assert_bitwise_equal(a: np.ndarray, b: np.ndarray, what: str = "arrays"):
    assert a.shape == b.shape and a.dtype == b.dtype, what
    assert np.array_equal(a, b), f"{what} differ"
