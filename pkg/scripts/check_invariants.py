"""Run the exact bound battery and exit non-zero on any violation.

    python3 scripts/check_invariants.py random=200,eps=0.2,policies=20,subsets=50
"""

import sys

from sim2real_lab.harness import check_suite


def main():
    report = check_suite(sys.argv[1] if len(sys.argv) > 1 else None)
    print(report)
    sys.exit(0 if report.passed else 3)


if __name__ == "__main__":
    main()
