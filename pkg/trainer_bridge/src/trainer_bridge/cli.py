"""bridge-verify: load a bundle directory, verify its stack, print JSON."""

from __future__ import annotations

import argparse
import json
import sys

from .bundle import load_bundle
from .formats import FormatError
from .verify import verify_stack


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Verify a conditioning-bundle directory: recompute the "
                    "deterministic stack channels and check exact agreement.")
    parser.add_argument("bundle_dir", help="directory written by the bundle producer")
    args = parser.parse_args(argv)
    try:
        view = load_bundle(args.bundle_dir)
        report = verify_stack(view, raise_on_mismatch=False)
    except FormatError as e:
        print(json.dumps({"ok": False, "error": str(e)}), file=sys.stdout)
        return 2
    print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())
