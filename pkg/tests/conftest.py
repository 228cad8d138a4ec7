from pathlib import Path

import numpy as np
import pytest

from models.models import AdcConfig, GeometryConfig
from src.network_io import TOY_NETWORK, generate_toy_data, random_images, random_weights

REPO_ROOT = Path(__file__).resolve().parents[1]
BENCHMARK_NET = REPO_ROOT / "configs" / "benchmark_cifar10.net"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def geometry():
    return GeometryConfig()


@pytest.fixture
def noise_free_adc():
    return AdcConfig(sigma=0.0)


@pytest.fixture(scope="session")
def toy_model():
    rng = np.random.default_rng(7)
    weights = random_weights(TOY_NETWORK, rng)
    images = random_images(TOY_NETWORK, 3, rng)
    return TOY_NETWORK, weights, images


@pytest.fixture(scope="session")
def toy_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy")
    generate_toy_data(out, images=3, seed=5)
    return out
