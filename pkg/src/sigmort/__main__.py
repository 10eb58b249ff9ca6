import sys

from sigmort.cli import main

sys.exit(main())
