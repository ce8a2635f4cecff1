import sys

from iotstage.cli import main

sys.exit(main())
