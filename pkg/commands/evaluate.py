"""
Eval Command
Scores a checkpoint on a split, optionally with sensor streams masked out.
"""

import argparse
import logging

import orjson

from utils.handle_command_error import handle_command_error, send_response
from wrcfusion.app import Command
from wrcfusion.config import RunConfig
from wrcfusion.evaluation import Evaluator, resolve_checkpoint

logger = logging.getLogger(__name__)


def configure(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--checkpoint", default=None, help="checkpoint file (default: eval.checkpoint, then the "
                                                           "run's own checkpoint)")
    parser.add_argument("--split", default=None, help="split to score (default: eval.split)")
    parser.add_argument("--streams", default=None,
                        help="sensor subset: all, camera, ra, ea, combinations like camera+ra, or none")


@handle_command_error
def run(app, cfg: RunConfig, args: argparse.Namespace) -> int:
    evaluator = Evaluator(cfg, checkpoint=resolve_checkpoint(cfg, args.checkpoint))
    result = evaluator.run(split=args.split, streams=args.streams, progress=True)
    send_response(orjson.dumps(result.as_dict(), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS))
    return 0


def setup(app) -> None:
    app.add_command(Command("eval", "AP_BEV / AP_3D of a checkpoint plus the detection dump", run, configure))
