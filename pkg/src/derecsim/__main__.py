import sys

from derecsim.cli import main

sys.exit(main())
