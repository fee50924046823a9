import sys

from contiplan.cli import main

sys.exit(main())
