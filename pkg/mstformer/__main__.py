"""Allow ``python -m mstformer``."""
import sys

from mstformer.cli import main

sys.exit(main())
