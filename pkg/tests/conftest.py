import json

import pytest

TINY_CONFIG = {
    "seed": 0,
    "folds": 2,
    "train": {"inner_steps": 1, "outer_iterations": 2, "warmup_iterations": 2, "batch_size": 4,
              "subsequence_length": 8, "inner_lr": 0.05, "outer_lr": 0.01},
    "model": {"extractor_channels": [3, 3, 4], "head_channels": 3, "embed_dim": 3, "temporal_kernel": 3},
    "synthetic": {"num_source": 8, "num_target": 12, "num_nodes": 12, "num_timepoints": 24,
                  "num_communities": 2, "planted_size": 3},
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(TINY_CONFIG))
    return path
