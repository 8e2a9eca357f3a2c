import sys

from zoegd.cli import main

sys.exit(main())
