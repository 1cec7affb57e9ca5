#!/usr/bin/env python3
"""
wrcfusion Entry Point for checkouts without an installed package
"""

import os
import sys

# Add current directory to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

# Import and run the main function
from main import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
