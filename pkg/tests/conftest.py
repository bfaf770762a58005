import json

import numpy as np
import pytest

from agbpipe.numcore.rng import Prng


@pytest.fixture
def rng():
    return Prng(1234)


@pytest.fixture
def np_rng():
    return np.random.default_rng(99)


def write_json(path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc))
    return str(path)


def run_cli(argv):
    """Invoke the CLI entry point in this interpreter; returns the exit code."""
    from agbpipe.cli import main

    return main(argv)


MICRO_CONFIG = {
    "seed": 505,
    "geodata": {
        "grid_size": 96,
        "n_scenes": 4,
        "cloud_fraction": 0.25,
        "n_points": 400,
        "tile_size": 64,
        "stride": 32,
        "validation_fraction": 0.3,
    },
    "pretrain": {"epochs": 2, "warmup_epochs": 1, "batch_size": 4},
    "finetune": {"epochs": 3, "warmup_epochs": 1, "batch_size": 4},
    "baseline": {"epochs": 2, "batch_size": 4},
}
