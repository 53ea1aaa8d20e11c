import sys

from schemabench.cli import main

sys.exit(main())
