#!/usr/bin/env python3
"""
Run black-box policy search experiments from a source checkout.

Same interface as the installed `bbpl` command:

    python scripts/bbpl.py train --config configs/config.yaml --out outputs/ctp
    python scripts/bbpl.py eval --config configs/config.yaml --out outputs/ctp
"""

import sys
from pathlib import Path

# Add src to path
sys.path.append(str(Path(__file__).parent.parent))

from src.harness.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
