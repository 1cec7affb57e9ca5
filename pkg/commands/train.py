"""
Train Command
Fits the detector on the training split.
"""

import argparse
import logging

import orjson

from utils.handle_command_error import handle_command_error, send_response
from wrcfusion.app import Command
from wrcfusion.config import RunConfig
from wrcfusion.training import Trainer

logger = logging.getLogger(__name__)


@handle_command_error
def run(app, cfg: RunConfig, args: argparse.Namespace) -> int:
    result = Trainer(cfg).fit(progress=True)
    send_response(orjson.dumps({
        "steps": result.steps,
        "initial_loss": result.initial_loss,
        "final_loss": result.final_loss,
        "checkpoint": result.checkpoint,
        "loss_log": result.loss_log,
    }, option=orjson.OPT_INDENT_2))
    return 0


def setup(app) -> None:
    app.add_command(Command("train", "train the detector with the cosine schedule", run))
