"""Numerical checks of the information identities, bounds and the transfer result.

Thin wrapper over ``reasoning-entropy verify`` that also times each suite.
"""

import sys
import time

from reasoning_entropy.verify import VerifyConfig, bound_suite, identity_suite, transfer_suite


def main() -> int:
    vc = VerifyConfig()
    failed = 0
    for name, suite in (("identities", identity_suite), ("bounds", bound_suite), ("transfer", transfer_suite)):
        t = time.perf_counter()
        results = suite(vc)
        print(f"== {name} ({time.perf_counter() - t:.2f}s)")
        for r in results:
            print("\n".join(r.lines()))
            failed += not r.passed
    print("all checks passed" if not failed else f"{failed} checks failed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
