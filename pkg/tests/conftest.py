import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from fixcnn import costmodel
from fixcnn.dataset import load_idx, take, write_idx
from fixcnn.digits import make_digits
from fixcnn.inference import calibrate_datapath
from fixcnn.model import Topology
from fixcnn.trainer import TrainConfig, train


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """Full-scale digit corpus written as IDX files: 10000 train, 1000 test."""
    d = tmp_path_factory.mktemp("corpus")
    write_idx(make_digits(10000, seed=42, name="train"), d / "train-images.idx",
              d / "train-labels.idx")
    write_idx(make_digits(1000, seed=43, name="test"), d / "test-images.idx",
              d / "test-labels.idx")
    return d


@pytest.fixture(scope="session")
def train_full(corpus_dir):
    return load_idx(corpus_dir / "train-images.idx", corpus_dir / "train-labels.idx", "train")


@pytest.fixture(scope="session")
def test_full(corpus_dir):
    return load_idx(corpus_dir / "test-images.idx", corpus_dir / "test-labels.idx", "test")


@pytest.fixture(scope="session")
def train_small(train_full):
    return take(train_full, 2500, seed=0)


@pytest.fixture(scope="session")
def eval_small(test_full):
    return take(test_full, 400, seed=0)


def _trained(topology, data, epochs=2, seed=0):
    net = train(topology, data, TrainConfig(epochs=epochs, seed=seed))
    dp = calibrate_datapath(net, take(data, 100, seed=seed).images)
    return net, dp


@pytest.fixture(scope="session")
def trained_357(train_small):
    """Small trained network with its calibrated datapath."""
    return _trained(Topology(3, 5, 7), train_small)


@pytest.fixture(scope="session")
def trained_468(train_small):
    return _trained(Topology(4, 6, 8), train_small)


@pytest.fixture(scope="session")
def cost_params():
    return costmodel.calibrate(costmodel.load_calibration())
