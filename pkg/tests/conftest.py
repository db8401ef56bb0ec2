import json
import os

import numpy as np
import pytest

from src.config_manager import ConfigManager
from src.logic import verification
from src.logic.symplectic_charts import PhysParams

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


@pytest.fixture
def params():
    return PhysParams(M=1.0, hbar=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def settings():
    return verification.resolve_settings()


@pytest.fixture
def config_file(tmp_path):
    """Writes a config.json into tmp_path and returns a ConfigManager factory."""
    def make(data):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        return ConfigManager(str(path))
    return make


@pytest.fixture
def golden():
    def load(name):
        with open(os.path.join(GOLDEN_DIR, name), "r", encoding="utf-8") as f:
            return json.load(f)
    return load
