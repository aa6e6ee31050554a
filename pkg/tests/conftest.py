"""Shared fixtures: random poses, tiny model configs and synthetic datasets on tmp_path."""
import logging

import numpy as np
import pytest


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow end-to-end tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_pose(rng):
    """Factory for random rigid transforms"""
    from scipy.spatial.transform import Rotation

    from posegan.services.geometry import Pose

    def make(scale: float = 1.0):
        rotation = Rotation.random(random_state=int(rng.integers(0, 2**31))).as_matrix()
        return Pose(rotation, rng.normal(0.0, scale, size=3))

    return make


@pytest.fixture
def straight_drive():
    """301 poses one meter apart along z (300 m, identity rotations)"""
    from posegan.services.geometry import Pose

    return [Pose(np.eye(3), [0.0, 0.0, float(k)]) for k in range(301)]


@pytest.fixture
def tiny_model():
    from posegan.schemas.training import ModelConfig

    return ModelConfig(latent_dim=16, base_channels=4, pose_hidden=(16, 8))


@pytest.fixture
def tiny_train_config(tiny_model):
    """Factory for fast TrainConfigs"""
    from posegan.schemas.training import TrainConfig

    def make(**overrides):
        values = dict(
            regime="only_vo",
            total_iters=2,
            batch_size=4,
            critic_steps=1,
            learning_rate=1e-3,
            checkpoint_interval=0,
            log_interval=1,
            model=tiny_model,
        )
        values.update(overrides)
        return TrainConfig(**{k: v for k, v in values.items() if v is not None})

    return make


@pytest.fixture
def synthetic_data(tmp_path):
    """16 pairs for each of sequences 00 and 01, mirrored, with 20 points per pair"""
    from posegan.services.dataset_service import PreprocessedDataset
    from posegan.services.synthetic import write_synthetic_dataset

    root = write_synthetic_dataset(
        tmp_path / "data", n_pairs=16, seed=3, sequences=("00", "01"), mirror=True, points_per_frame=20
    )
    return PreprocessedDataset(root)


@pytest.fixture
def restore_logging():
    """CLI runs reconfigure the root logger; put the handlers back afterwards"""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)
