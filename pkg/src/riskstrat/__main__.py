import sys

from riskstrat.cli import main

sys.exit(main())
