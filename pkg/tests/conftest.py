"""Shared fixtures and suite-wide configuration."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gencomp.model import Denoiser, ModelConfig

# Deterministic property tests: no wall-clock deadline flakes, stable shrink.
settings.register_profile(
    "suite",
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def pytest_collection_modifyitems(config, items):
    """Run the acceptance gate after all unit tests regardless of file order."""
    items.sort(key=lambda it: it.fspath.basename == "test_acceptance.py")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def tiny_cfg():
    return ModelConfig(d_model=32, n_heads=2, fusion_depth=2, bp_depth=1,
                       T_diffusion=10, fg_crop=(16, 16))


@pytest.fixture(scope="session")
def tiny_model(tiny_cfg):
    return Denoiser(tiny_cfg, seed=0)


@pytest.fixture
def tiny_batch(rng):
    B, F, H, W, C = 2, 4, 16, 16, 3
    z = rng.random((B, F, H, W, C), dtype=np.float32)
    masked = rng.random((B, F, H, W, C), dtype=np.float32)
    mask = (rng.random((B, F, H, W)) > 0.7).astype(np.float32)
    fg = rng.random((B, F, H, W, C), dtype=np.float32)
    t = np.array([3, 7])
    return z, t, masked, mask, fg
