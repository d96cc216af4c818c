from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from igt.featurize import FeatureConfig  # noqa: E402
from igt.model import ModelConfig  # noqa: E402
from igt.pipeline import TrainConfig, fixture_path, train  # noqa: E402
from igt.synthetic import make_separable_dataset  # noqa: E402

DATA = Path(__file__).parent / "data"


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def feat_cfg():
    return FeatureConfig()


@pytest.fixture(scope="session")
def small_cfg(feat_cfg):
    return ModelConfig.for_features(feat_cfg, d_model=16, n_heads=2, n_blocks=2, d_ffn=32, dropout=0.0)


@pytest.fixture(scope="session")
def bundled():
    return fixture_path


@pytest.fixture(scope="session")
def separable(tmp_path_factory):
    root = tmp_path_factory.mktemp("separable")
    return make_separable_dataset(root, n_examples=20, n_targets=2, seed=0)


@pytest.fixture(scope="session")
def trained_small(separable, feat_cfg):
    mc = ModelConfig.for_features(feat_cfg, d_model=16, n_heads=2, n_blocks=1, d_ffn=32, dropout=0.0)
    tc = TrainConfig(lr=3e-3, batch=4, max_epochs=15, patience=15, seed=0)
    return train(separable, mc, tc, feat_cfg)
