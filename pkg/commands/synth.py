"""
Synth Command
Generates the synthetic training and evaluation splits.
"""

import argparse
import logging

import orjson

from utils.handle_command_error import handle_command_error, send_response
from wrcfusion.app import Command
from wrcfusion.config import RunConfig
from wrcfusion.errors import ConfigurationError
from wrcfusion.radar.dataset import generate_dataset

logger = logging.getLogger(__name__)


def configure(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--count", type=int, default=None,
                        help="scenes to write into --split only (default: both splits at their configured counts)")
    parser.add_argument("--split", default=None, help="split written when --count is given (default: train split)")


@handle_command_error
def run(app, cfg: RunConfig, args: argparse.Namespace) -> int:
    """Write every requested split and print a JSON summary."""
    if args.count is not None:
        jobs = [(args.split or cfg.data.train_split, args.count)]
    else:
        jobs = [(cfg.data.train_split, cfg.data.train_scenes), (cfg.data.eval_split, cfg.data.eval_scenes)]
    summary = []
    for split, count in jobs:
        if count < 0:
            raise ConfigurationError(f"scene count must be >= 0, got {count}")
        manifest = generate_dataset(cfg.data.root, split, count, cfg.seed, cfg.geometry(), cfg.camera(),
                                    cfg.scene_settings(), workers=cfg.data.workers, progress=True)
        summary.append({"split": split, "count": manifest.count, "seed": manifest.seed, "root": cfg.data.root})
    send_response(orjson.dumps({"synth": summary}, option=orjson.OPT_INDENT_2))
    return 0


def setup(app) -> None:
    app.add_command(Command("synth", "generate synthetic radar-camera scenes", run, configure))
