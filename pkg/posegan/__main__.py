"""``python -m posegan``"""
import sys

from posegan.cli import main

if __name__ == "__main__":
    sys.exit(main())
