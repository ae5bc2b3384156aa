"""Allow running the command-line interface as ``python -m qfc``."""

import sys

from .cli import main

sys.exit(main())
