"""Greedy assignment on the 4x4 scenario as the channels get idler.

Prints the greedy throughput for p_idle = 0.1 .. 1.0. Pass --brute to also
run the exhaustive search (about 8 minutes per point on one core).
"""
import argparse

from cogmac.assign import brute_force_assignment, greedy_assignment
from cogmac.config import load_bundle


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--brute", action="store_true", help="also run the exhaustive search")
    args = parser.parse_args()
    print("p_idle  greedy   steps" + ("   optimal  gap%" if args.brute else ""))
    for k in range(1, 11):
        p0 = k / 10
        sc = load_bundle("table1_4x4", p_idle=p0).scenario
        g = greedy_assignment(sc)
        line = f"{p0:6.1f}  {g.nt:.4f}  {len(g.iterations) - 1:5d}"
        if args.brute:
            b = brute_force_assignment(sc)
            line += f"   {b.nt:.4f}  {100 * (b.nt - g.nt) / b.nt:4.2f}"
        print(line)


if __name__ == "__main__":
    main()
