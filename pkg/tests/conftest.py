from __future__ import annotations

import numpy as np
import pytest

from lidar_blockage.scene import NoiseConfig, SceneConfig


@pytest.fixture
def quiet_config() -> SceneConfig:
    """Noise-free scene with no traffic."""
    return SceneConfig(blocker_spawn_rate=0.0, seed=11)


@pytest.fixture
def noisy_config() -> SceneConfig:
    return SceneConfig(
        blocker_spawn_rate=0.5,
        noise=NoiseConfig(range_sigma=0.03, dropout_prob=0.02,
                          angle_jitter_sigma=0.001,
                          spurious_static_points=[(0.4, 3.0), (2.0, 7.5)],
                          spurious_prob=0.8),
        seed=23,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(99)
