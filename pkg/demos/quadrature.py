"""Quadrature inequality for a disk source.

One particle per lattice site of a disk spreads into a larger region A*.
For superharmonic test functions u the source sum of u should dominate the
density-weighted sum of u over A*; for u = 1 both sides agree up to the
boundary layer.
"""

import argparse

import numpy as np

from arwlab.chains import Disk, region_source
from arwlab.statistics import constant, neg_sq_dist, quadrature_check, sleeper_support


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps", type=float, default=1 / 32)
    ap.add_argument("--replicas", type=int, default=5)
    ap.add_argument("--zeta-a", type=float, default=0.68)
    args = ap.parse_args()

    outs = [region_source(Disk((0.0, 0.0), 1.0), args.eps, 1.0, s) for s in range(args.replicas)]
    src = outs[0].extra["source_sites"]
    sup = sleeper_support(outs[0].final, args.zeta_a)
    x0s = sup[np.random.default_rng(0).choice(len(sup), 5, replace=False)] * args.eps
    reps = quadrature_check(src, outs, args.eps, args.zeta_a,
                            [constant(1.0)] + [neg_sq_dist(x) for x in x0s])
    for r in reps:
        print(f"{r.function_id:28s} lhs {r.lhs:+.4f} rhs {r.rhs:+.4f} "
              f"margin {r.margin:+.4f} +- {r.stderr:.4f}")


if __name__ == "__main__":
    main()
