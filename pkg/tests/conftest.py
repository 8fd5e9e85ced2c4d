"""Shared fixtures: dataset access and session-scoped trained models.

MNIST is looked up under $MEMDENOISE_DATA (default /root/data/mnist).
Tests that need it skip loudly when the files are absent.  Training
fixtures use the recipes shipped as the CLI defaults, so what the tests
certify is exactly what the command line produces.
"""

import os

import numpy as np
import pytest

from memdenoise.classify import train_classifier
from memdenoise.cli import DENSE_RATE_OVERRIDES, TRAIN_RECIPES
from memdenoise.imagecore import load_mnist
from memdenoise.nets.common import TrainConfig
from memdenoise.nets.dense import dense_train
from memdenoise.nets.fusion import fusion_train
from memdenoise.noise import STANDARD_NOISES, parse_spec

DATA_ROOT = os.environ.get("MEMDENOISE_DATA", "/root/data/mnist")

MEMBER_SEED = 7
FUSION_SEED = 11
CLASSIFIER_SEED = 0
EVAL_SEED = 100


@pytest.fixture(scope="session")
def mnist():
    try:
        return load_mnist(DATA_ROOT, "train"), load_mnist(DATA_ROOT, "test")
    except Exception as e:
        pytest.skip(f"MNIST not available under {DATA_ROOT!r} "
                    f"(set MEMDENOISE_DATA to the IDX directory): {e}")


@pytest.fixture(scope="session")
def mnist_train(mnist):
    return mnist[0]


@pytest.fixture(scope="session")
def mnist_test(mnist):
    return mnist[1]


def member_config(noise_text):
    """The frozen per-noise dense training configuration."""
    recipe = TRAIN_RECIPES["dense"]
    return TrainConfig(
        train_noise=parse_spec(noise_text),
        learning_rate=DENSE_RATE_OVERRIDES.get(noise_text,
                                               recipe["learning_rate"]),
        epochs=recipe["epochs"], batch=recipe["batch"], seed=MEMBER_SEED,
        limit=recipe["limit"], init="zero")


@pytest.fixture(scope="session")
def member_bank(mnist_train):
    """All eight per-noise dense denoisers at the shipped recipes."""
    return {spec.text(): dense_train(member_config(spec.text()), mnist_train)
            for spec in STANDARD_NOISES}


@pytest.fixture(scope="session")
def fusion_net(member_bank, mnist_train):
    recipe = TRAIN_RECIPES["fusion"]
    cfg = TrainConfig(train_noise=None, learning_rate=recipe["learning_rate"],
                      epochs=recipe["epochs"], batch=recipe["batch"],
                      seed=FUSION_SEED, limit=recipe["limit"], init="identity",
                      clean_fraction=0.5)
    members = [member_bank[s.text()] for s in STANDARD_NOISES]
    return fusion_train(cfg, members, mnist_train,
                        noises=[s.text() for s in STANDARD_NOISES])


@pytest.fixture(scope="session")
def classifier(mnist_train):
    cfg = TrainConfig(train_noise=None, learning_rate=0.1, epochs=5, batch=64,
                      seed=CLASSIFIER_SEED)
    return train_classifier(mnist_train, cfg)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
