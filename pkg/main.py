"""Main entry point for kinetic-gmsfem."""

import sys

from cli.commands import main

if __name__ == "__main__":
    sys.exit(main())
