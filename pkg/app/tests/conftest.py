import numpy as np
import pytest

from metalogic.models import ModelSpec, init_params
from metalogic.tasks import synth_blob_source


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="desk-scale 학습 테스트 실행")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="--runslow 가 필요함")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _no_color(monkeypatch):
    monkeypatch.setenv("ADML_LOG_COLOR", "0")
    monkeypatch.setenv("ADML_THREADS", "1")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def blobs():
    return synth_blob_source(dim=6, classes=8, samples_per_class=12, seed=3)


@pytest.fixture
def tiny_mlp():
    spec = ModelSpec(kind="mlp", ways=3, dim=6, hidden=[5])
    return spec, init_params(spec, seed=7)


@pytest.fixture
def tiny_conv():
    spec = ModelSpec(kind="conv4", ways=2, channels=1, height=8, width=8, filters=2)
    return spec, init_params(spec, seed=11)
