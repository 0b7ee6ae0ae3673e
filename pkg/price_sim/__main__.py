import sys

from price_sim.cli import main

sys.exit(main())
