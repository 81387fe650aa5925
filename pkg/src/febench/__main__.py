import sys

from febench.bench.cli import main

sys.exit(main())
