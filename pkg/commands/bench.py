"""
Bench Command
Parameter, MAC, timing and memory report.
"""

import argparse

import orjson

from utils.handle_command_error import handle_command_error, send_response
from wrcfusion.app import Command
from wrcfusion.bench import run_bench
from wrcfusion.config import RunConfig


@handle_command_error
def run(app, cfg: RunConfig, args: argparse.Namespace) -> int:
    send_response(orjson.dumps(run_bench(cfg), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS))
    return 0


def setup(app) -> None:
    app.add_command(Command("bench", "report parameter counts, MACs and the GSA scaling slope", run))
