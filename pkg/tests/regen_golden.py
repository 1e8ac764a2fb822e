"""Regenerate tests/golden/metrics.csv from the frozen golden config.

Run after an intentional behavior change:

    python tests/regen_golden.py
"""

import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import test_harness


def main():
    golden = test_harness.GOLDEN_PATH
    golden.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        path = test_harness.make_golden_csv(tmp)
        golden.write_bytes(Path(path).read_bytes())
    print(f"wrote {golden}")


if __name__ == "__main__":
    main()
