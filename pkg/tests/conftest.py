import pytest

from spatial_transfer.config import config_from_dict

TINY_CONFIG = {
    "target_sizes": [9, 16],
    "replicates": 2,
    "seed": 11,
    "basis": {"levels": [{"rows": 3, "cols": 3}, {"rows": 4, "cols": 4}]},
    "hidden": [8, 8],
    "source_size": 100,
    "test_size": 40,
    "pretrain": {"epochs": 15, "batch_size": 32, "validation_fraction": 0.2},
    "finetune": {"epochs": 10, "batch_size": 8},
    "target_only": {"epochs": 10, "batch_size": 8},
}


@pytest.fixture
def tiny_raw():
    return {k: (dict(v) if isinstance(v, dict) else v) for k, v in TINY_CONFIG.items()}


@pytest.fixture
def tiny_cfg(tiny_raw):
    return config_from_dict(tiny_raw)
