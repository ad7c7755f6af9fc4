"""Command-line front end: ``arwlab <experiment> [flags]``.

Exit codes: 0 success, 2 usage or config error, 3 a budget was exceeded,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from .harness import EXPERIMENT_KEYS, EXPERIMENTS, ConfigError, ExperimentConfig, run_experiment
from .chains import ChainBudgetExceeded
from .stabilizer import DEFAULT_BUDGET, BudgetExceeded

EXIT_OK, EXIT_USAGE, EXIT_BUDGET, EXIT_IO = 0, 2, 3, 4


def _float(text: str) -> float:
    v = float(text)
    if math.isnan(v):
        raise argparse.ArgumentTypeError("NaN is not allowed")
    return v


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers") from None


# experiment-specific flags: name -> (type, help)
_EXTRA = {
    "n": (int, "particles at the origin"),
    "t": (_float, "Poisson sprinkle intensity per site"),
    "tmax": (_float, "largest driving time t = k / L^d"),
    "tstep": (_float, "spacing of the recorded t grid"),
    "zeta": (_float, "particle density (initial or nominal, depending on the experiment)"),
    "steps": (int, "chain steps"),
    "r-max": (int, "largest correlation offset"),
    "boxes": (_int_list, "comma-separated box side lengths"),
    "region": (str, "source region: disk, two-disks or square"),
    "eps": (_float, "lattice spacing for region sources"),
    "f": (str, "work threshold: nlog2n, n1.5 or nlogn"),
    "f-c": (_float, "threshold constant"),
    "zeta-a": (_float, "density used for the sleeper support and quadrature"),
    "x0-samples": (int, "number of -|x - x0|^2 test functions"),
    "chain": (str, "sample source for correlations: free, wired, point or wake"),
    "max-steps": (int, "coupling horizon in chain steps"),
}

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arwlab", description="Run activated random walk experiments.",
        epilog="Exit codes: 0 success, 2 usage or config error, 3 budget exceeded, 4 I/O error.")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment",
                           argument_default=argparse.SUPPRESS)
        p.add_argument("--dim", type=int, help="lattice dimension (default 2)")
        p.add_argument("--L", type=int, help="box or torus side length")
        p.add_argument("--lambda", dest="lambda", type=_float,
                       help="sleep rate; inf is allowed in collapsed mode (default 1)")
        p.add_argument("--seed", type=int, help="master seed (default 0)")
        p.add_argument("--replicas", type=int, help="independent replicas (default 1)")
        p.add_argument("--threads", type=int, help="worker threads (default 1)")
        p.add_argument("--mode", choices=("literal", "collapsed"),
                       help="instruction mode (default literal)")
        p.add_argument("--budget", type=int,
                       help=f"instruction budget per stabilization (default {DEFAULT_BUDGET})")
        p.add_argument("--out", help="output directory (default arw-out)")
        p.add_argument("--config", help="JSON config file; flags override its values")
        for key in EXPERIMENT_KEYS[name]:
            flag = key.replace("_", "-")
            typ, text = _EXTRA[flag]
            p.add_argument("--" + flag, dest=flag.replace("-", "_"), type=typ, help=text)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    given = vars(args).copy()
    experiment = given.pop("experiment")
    path = given.pop("config", None)
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        if data.get("experiment", experiment) != experiment:
            raise ConfigError(f"config file is for {data['experiment']!r}, not {experiment!r}")
    data.update(given)
    data["experiment"] = experiment
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = config_from_args(args)
        manifest = run_experiment(cfg)
    except (BudgetExceeded, ChainBudgetExceeded) as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ConfigError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"experiment={cfg.experiment}")
    print(f"out={cfg.out}")
    print(f"replicas={cfg.replicas}")
    for k, v in manifest.summary.items():
        print(f"{k}={v}")
    print(f"budget_events={len(manifest.budget_events)}")
    print(f"wall_time={manifest.wall_time:.2f}")
    return EXIT_BUDGET if manifest.budget_events else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
