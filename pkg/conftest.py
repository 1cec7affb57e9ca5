"""
Shared pytest fixtures: seeded generators, a tiny run configuration and
small synthetic datasets written to temporary directories.
"""

import logging

import numpy as np
import pytest

from wrcfusion.config import RunConfig, load_config
from wrcfusion.radar.dataset import generate_dataset

# Small enough that a full detector forward pass takes well under a second.
TINY_OVERRIDES = [
    "radar.dims=16, 16, 8, 8",
    "image.size=32, 32",
    "model.encoder_widths=8, 16, 32",
    "model.num_queries=9",
    "model.iterations=2",
    "model.samples=2",
    "model.pool_attention=2",
    "fpn.in_widths=16, 32",
    "fpn.widths=16, 32",
    "wa_moe.channels=16",
    "wa_moe.num_experts=2",
    "wa_moe.top_k=1",
    "gsa.dim=16",
    "data.train_scenes=4",
    "data.eval_scenes=3",
    "data.workers=2",
    "train.max_steps=2",
    "train.batch_size=2",
    "train.checkpoint_every=0",
    "bench.sweep=32, 64, 128",
    "bench.pooled=16",
    "bench.key_length=64",
    "bench.dim=8",
    "bench.repeats=1",
    "output.log_files=false",
]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_overrides(tmp_path):
    return TINY_OVERRIDES + [f"data.root={tmp_path / 'data'}", f"output.dir={tmp_path / 'out'}"]


@pytest.fixture
def tiny_config(tiny_overrides) -> RunConfig:
    return load_config(None, tiny_overrides, environ={})


@pytest.fixture
def tiny_dataset(tiny_config):
    """Train and eval splits of the tiny configuration on disk."""
    cfg = tiny_config
    for split, count in ((cfg.data.train_split, cfg.data.train_scenes), (cfg.data.eval_split, cfg.data.eval_scenes)):
        generate_dataset(cfg.data.root, split, count, cfg.seed, cfg.geometry(), cfg.camera(),
                         cfg.scene_settings(), workers=cfg.data.workers)
    return cfg


@pytest.fixture(autouse=True)
def _reset_logging():
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
