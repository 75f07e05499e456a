"""Regenerate the five-agent market example into an output directory.

    python3 scripts/reproduce_example.py [out_dir] [--quick]
"""
import sys
from pathlib import Path

from gpobs.cli import main

if __name__ == "__main__":
    argv = [a for a in sys.argv[1:] if a != "--quick"]
    out = Path(argv[0]) if argv else Path("gpobs_out/example")
    extra = ["--quick"] if "--quick" in sys.argv else []
    sys.exit(main(["reproduce-example", "--out", str(out), *extra]))
