#!/usr/bin/env python3
"""Entry point for running the extremum seeker without installing it."""

import sys

from extremum_seeker.app import main

if __name__ == "__main__":
    sys.exit(main())
