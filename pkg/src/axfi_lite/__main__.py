import sys

from axfi_lite.cli import main

sys.exit(main())
