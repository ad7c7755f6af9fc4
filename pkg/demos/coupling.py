"""Coupling of two wired chains.

Starts two uniformly driven wired chains from configurations that differ by
one sleeper, drives both with the same particle placements and instruction
stacks, and reports how many steps it takes until they coincide.
"""

import argparse

from arwlab import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--L", type=int, default=12)
    ap.add_argument("--replicas", type=int, default=50)
    ap.add_argument("--out", default="demo-out/coupling")
    args = ap.parse_args()

    man = harness.run_experiment({"experiment": "coupling", "L": args.L, "lambda": 1.0,
                                  "replicas": args.replicas, "out": args.out})
    rows = open(f"{args.out}/coupling.csv").read().splitlines()[1:]
    times = sorted(int(r.split(",")[2]) for r in rows)
    print(f"coupled fraction {man.summary['coupled_fraction']}")
    print(f"coupling times: median {times[len(times) // 2]}, max {times[-1]} "
          f"(box has {args.L ** 2} sites)")


if __name__ == "__main__":
    main()
