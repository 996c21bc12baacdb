import sys

from trfc.cli import main

sys.exit(main())
