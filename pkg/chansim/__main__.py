import sys

from chansim.cli import main

sys.exit(main())
