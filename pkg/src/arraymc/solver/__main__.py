import sys

from .smtlib import main

sys.exit(main())
