"""
Inspect Command
Writes pre- and post-WA-MoE feature maps of one scene as graymaps.
"""

import argparse
import logging
import os

import numpy as np
import orjson

from utils.handle_command_error import handle_command_error, send_response
from wrcfusion.app import Command
from wrcfusion.config import RunConfig
from wrcfusion.core.checkpoint import load_checkpoint
from wrcfusion.evaluation import resolve_checkpoint
from wrcfusion.inspection import dump_feature_maps
from wrcfusion.models.detector import WRCFusionDetector
from wrcfusion.radar.dataset import load_sample

logger = logging.getLogger(__name__)


def configure(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scene", default=None, help="scene id (default: inspect.scene)")
    parser.add_argument("--split", default=None, help="split holding the scene (default: inspect.split)")
    parser.add_argument("--checkpoint", default=None, help="checkpoint file (default: inspect.checkpoint)")


@handle_command_error
def run(app, cfg: RunConfig, args: argparse.Namespace) -> int:
    scene = args.scene or cfg.inspect.scene
    split = args.split or cfg.inspect.split
    sample = load_sample(cfg.data.root, split, scene)
    model = WRCFusionDetector(cfg.detector(), np.random.default_rng(cfg.seed))
    checkpoint = resolve_checkpoint(cfg, args.checkpoint or cfg.inspect.checkpoint)
    if checkpoint:
        load_checkpoint(model, checkpoint)
    out_dir = os.path.join(cfg.output.dir, "inspect", split, scene)
    paths = dump_feature_maps(model, sample, out_dir)
    send_response(orjson.dumps({"scene": scene, "split": split, "files": paths}, option=orjson.OPT_INDENT_2))
    return 0


def setup(app) -> None:
    app.add_command(Command("inspect", "dump feature maps before and after WA-MoE", run, configure))
