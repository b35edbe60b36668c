import sys

from cyllab.cli import main

sys.exit(main())
