import sys

from tfnuclear.cli import main

sys.exit(main())
