#!/usr/bin/env python3
"""
wrcfusion Entry Point
Loads the environment and hands the command line to the command host.
"""

import sys

from dotenv import load_dotenv

load_dotenv()

from wrcfusion.app import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
