import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pcctbench import cli

# Desk-size scanner: same SOD/SDD as the paper geometry, coarser sampling.
TINY_CONFIG = {
    "seed": 77,
    "geometry": {
        "num_detectors": 64,
        "detector_pitch": 0.4,
        "num_views": 64,
    },
    "phantom": {
        "count": 3,
        "field_of_view": 25.6,
        "insert_count_range": [3, 5],
    },
    "recon": {
        "grid_size": 64,
        "fov": 25.6,
    },
}


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """A small but complete simulate + reconstruct run shared across tests."""
    root = tmp_path_factory.mktemp("tiny_run")
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(TINY_CONFIG))
    run = root / "run"
    assert run_cli("simulate", "--config", cfg_path, "--out", run, "--threads", 2) == 0
    assert run_cli("reconstruct", "--run", run, "--threads", 2) == 0
    return run


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
