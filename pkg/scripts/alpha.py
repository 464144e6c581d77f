"""Scaling exponent alpha in T ~ dofs^alpha from pairs of (seconds, dofs).

    python scripts/alpha.py                       # the published 2D pair
    python scripts/alpha.py 12.0 10116 61.5 40020
"""
import sys

from fsisolve.metrics import estimate_alpha


def main(argv):
    vals = [float(v) for v in argv] or [37.58, 81492, 139.08, 323524]
    if len(vals) % 2 or len(vals) < 4:
        sys.exit("give pairs: T1 dofs1 T2 dofs2 [T3 dofs3 ...]")
    pairs = list(zip(vals[0::2], vals[1::2]))
    for (t1, n1), (t2, n2) in zip(pairs, pairs[1:]):
        print(f"{n1:>10.0f} -> {n2:<10.0f} T {t1:8.2f} -> {t2:<8.2f} alpha = {estimate_alpha(t1, n1, t2, n2):.4f}")


if __name__ == "__main__":
    main(sys.argv[1:])
