import numpy as np
import pytest

import saliencylab as sl

PATCH_SHAPE = (16, 16, 1)
PATCH_CLASSES = 4
PATCH_SIZE = 5


@pytest.fixture(scope="session")
def patch_train():
    return sl.synth_patch_dataset(7, 2000, 16, PATCH_CLASSES, PATCH_SIZE, "train")


@pytest.fixture(scope="session")
def patch_test():
    return sl.synth_patch_dataset(8, 500, 16, PATCH_CLASSES, PATCH_SIZE, "test")


@pytest.fixture(scope="session")
def trained_vgg(patch_train):
    """Biased VGG-mini trained to (near-)perfect accuracy on the patch task."""
    spec = sl.vgg_mini(PATCH_SHAPE, PATCH_CLASSES, biases=True)
    ck = sl.build_network(spec, 1)
    ck, _ = sl.train_classifier(ck, patch_train, sl.TrainConfig(epochs=4, seed=0))
    return ck


@pytest.fixture(scope="session")
def trained_vgg_nobias(patch_train):
    spec = sl.vgg_mini(PATCH_SHAPE, PATCH_CLASSES, biases=False)
    ck = sl.build_network(spec, 2)
    ck, _ = sl.train_classifier(ck, patch_train, sl.TrainConfig(epochs=4, seed=1))
    return ck


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
