"""
Main entry point for the IoT staging framework
"""

import sys

from dotenv import load_dotenv

load_dotenv()

from iotstage.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
