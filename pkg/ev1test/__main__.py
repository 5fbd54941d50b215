import sys

import ev1test.cli

sys.exit(ev1test.cli.main())
