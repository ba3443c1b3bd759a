import sys

from lnnforecast.cli import main

sys.exit(main())
