"""The hockey stick of the driven wired chain.

Adds particles one at a time at uniform sites of a wired box and stabilizes
after each. The density first grows like t = k / L^2, then flattens at the
critical density once particles start to leave through the boundary.
"""

import argparse

import numpy as np

from arwlab.chains import wired_drive_uniform
from arwlab.statistics import hockey_distance


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--L", type=int, default=64)
    ap.add_argument("--lambda", dest="lam", type=float, default=2.0)
    ap.add_argument("--zeta-c", type=float, default=0.813)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    vol = args.L ** 2
    record = np.round(np.arange(0, 1.21, 0.1) * vol).astype(int)
    curve = wired_drive_uniform(args.L, args.lam, int(record[-1]), args.seed, record=record)
    print("    t   global   bulk   min(t, zeta_c)")
    for t, g, b in zip(curve.t, curve.global_density, curve.bulk_density):
        print(f"{t:5.2f}   {g:.4f}  {b:.4f}   {min(t, args.zeta_c):.4f}")
    dist, plateau = hockey_distance(curve.t, curve.global_density, args.zeta_c)
    print(f"sup distance to the stick {dist:.4f}, plateau {plateau:.4f}")


if __name__ == "__main__":
    main()
