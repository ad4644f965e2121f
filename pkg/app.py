"""Command-line entry point for ohsize."""
from __future__ import annotations

from ohsize.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
