"""The free chain on a torus and its work threshold.

Keeps adding particles to a torus with no killing. The work U_k needed to
stabilize step k stays small until the density approaches the critical
value, where it explodes; the threshold detector marks the first step with
U_k >= N log^2 N.
"""

import argparse

from arwlab.chains import ThresholdDetector, free_run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--L", type=int, default=32)
    ap.add_argument("--lambda", dest="lam", type=float, default=2.0)
    ap.add_argument("--seed", type=int, default=2)
    args = ap.parse_args()

    vol = args.L ** 2
    trace = free_run(args.L, 2, args.lam, vol, args.seed, ThresholdDetector("nlog2n"))
    window = max(1, vol // 50)
    for frac in (0.2, 0.4, 0.6, 0.7, 0.75, 0.8):
        k = int(frac * vol)
        if k <= len(trace.U):
            mean = trace.U[max(0, k - window):k].mean()
            print(f"density {k / vol:.2f}: mean U_k over the last {window} steps {mean:.1f}")
    if trace.tau_f is None:
        print("threshold not reached")
    else:
        print(f"threshold reached at k={trace.tau_f}, density {trace.tau_f / vol:.3f}")


if __name__ == "__main__":
    main()
