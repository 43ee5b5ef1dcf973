import sys

from gwperc.cli import main

sys.exit(main())
