"""
Usage:
    python -m robust_bandit cutoff --preset fig-surplus
    python -m robust_bandit --help
"""
import sys

from robust_bandit.cli.app import main

if __name__ == "__main__":
    sys.exit(main())
