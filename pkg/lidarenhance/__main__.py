"""Allow running as `python -m lidarenhance`."""

from lidarenhance.cli import main

if __name__ == "__main__":
    raise SystemExit(main())
