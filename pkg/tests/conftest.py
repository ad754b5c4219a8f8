"""Shared fixtures: one codec instance and the packaged toy checkpoint."""

from pathlib import Path

import numpy as np
import pytest

from adaptrx.framing import default_codec
from adaptrx.rnn import load_checkpoint

FIXTURES = Path(__file__).parent / "fixtures"
TOY_CHECKPOINT = FIXTURES / "toy_universal.npz"


@pytest.fixture(scope="session")
def codec():
    return default_codec()


@pytest.fixture(scope="session")
def toy_checkpoint_path():
    if not TOY_CHECKPOINT.exists():
        pytest.fail(
            f"missing {TOY_CHECKPOINT}; regenerate with e.g.\n"
            "  adaptrx train-initial --epochs 8 --iters-per-epoch 150 "
            "--batch-size 16 --seed 1234 --net-seed 20 --out "
            "tests/fixtures/toy_universal.npz")
    return TOY_CHECKPOINT


@pytest.fixture(scope="session")
def toy_receiver(toy_checkpoint_path):
    receiver, _ = load_checkpoint(toy_checkpoint_path)
    return receiver


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
