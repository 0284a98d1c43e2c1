import sys

from privpoi.cli import main

sys.exit(main())
