"""Run the acceptance suite and print one PASS/FAIL line per criterion."""
import argparse
import os
import sys

import pytest

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-k", default=None, help="pytest -k filter, e.g. 'criterion_09'")
    args = ap.parse_args()
    argv = [os.path.join(HERE, "..", "tests", "test_acceptance.py"), "-q", "-p", "no:cacheprovider"]
    if args.k:
        argv += ["-k", args.k]
    return pytest.main(argv)


if __name__ == "__main__":
    sys.exit(main())
