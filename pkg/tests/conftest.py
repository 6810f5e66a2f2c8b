import numpy as np
import pytest
import torch

from pairgan.datamodel import LabeledPair


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_pair(rng, size=8, num_classes=2, batch=1, dtype=torch.float32):
    pairs = [
        LabeledPair.from_arrays(
            rng.random((size, size, 3)), rng.integers(0, num_classes, (size, size)), num_classes, dtype
        )
        for _ in range(batch)
    ]
    return LabeledPair.cat(pairs)
