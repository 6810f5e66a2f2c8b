import sys

from pairgan.cli import main

sys.exit(main())
