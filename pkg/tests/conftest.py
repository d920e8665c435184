import numpy as np
import pytest

from patchunlearn import (Dataset, domain_box_for, gen_blobs, init_mlp,
                          train_mlp)

# Pinned desk fixture: 3 well-separated Gaussian classes in 24 dimensions,
# 600 training points.  The dimension is high enough that the trained
# network's linear regions are fine-grained around the data (most contain
# only their anchor), which the exactness tests rely on.
BLOB_CLASSES = 3
BLOB_PER_CLASS = 250
BLOB_DIM = 24
BLOB_SPREAD = 0.9
BLOB_DATA_SEED = 11
BLOB_TRAIN_SIZE = 600
BLOB_WIDTHS = [16, 16]
BLOB_EPOCHS = 50
BLOB_LR = 0.02
BLOB_TRAIN_SEED = 1


@pytest.fixture(scope="session")
def blob_data():
    train, test = gen_blobs(BLOB_CLASSES, BLOB_PER_CLASS, BLOB_DIM,
                            BLOB_SPREAD, seed=BLOB_DATA_SEED)
    return train.subset(range(BLOB_TRAIN_SIZE)), test


@pytest.fixture(scope="session")
def blob_model(blob_data):
    train, _ = blob_data
    return train_mlp(train, BLOB_WIDTHS, epochs=BLOB_EPOCHS, lr=BLOB_LR,
                     seed=BLOB_TRAIN_SEED)


@pytest.fixture(scope="session")
def blob_box(blob_data):
    train, _ = blob_data
    return domain_box_for(train)


def random_net(rng, in_dim=None, widths=None, out_dim=None):
    """Small random MLP for property suites (nonzero random biases so the
    gate hyperplanes do not all pass through the origin)."""
    in_dim = in_dim or int(rng.integers(2, 5))
    widths = widths or [int(rng.integers(3, 7))
                        for _ in range(int(rng.integers(1, 3)))]
    out_dim = out_dim or int(rng.integers(2, 5))
    net = init_mlp(in_dim, widths, out_dim, seed=int(rng.integers(2**31)))
    from patchunlearn import AffineLayer, MlpNetwork
    layers = [AffineLayer(l.weight, rng.normal(0, 0.3, l.bias.shape))
              for l in net.layers]
    return MlpNetwork(tuple(layers))


def unit_box(dim):
    return -np.ones(dim), np.ones(dim)
