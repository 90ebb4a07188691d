import sys

from bikerebalance.cli import main

sys.exit(main())
