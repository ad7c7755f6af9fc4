"""Experiment orchestration: configs, replica seeds, outputs and manifests.

A run writes ``manifest.json``, one or more CSV files and (for some
experiments) ``snapshots/*.pgm`` into the output directory. Replicas are
independent and run on a thread pool; their results are folded in replica
order, so every non-manifest output is byte-identical for a given config
whatever the thread count.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, keyed
from . import chains as ch
from . import statistics as st
from .lattice import Topology, density, write_pgm
from .stabilizer import DEFAULT_BUDGET, MODES, BudgetExceeded, InstructionSource

EXPERIMENTS = ("aggregate", "region", "sprinkle", "wired-sample", "hockey", "free",
               "wake", "correlations", "hyperuniformity", "quadrature", "coupling")
REGIONS = ("disk", "two-disks", "square")
CHAINS = ("free", "wired", "point", "wake")
COMMON_KEYS = ("dim", "L", "lambda", "seed", "replicas", "threads", "mode", "budget", "out")
EXPERIMENT_KEYS = {
    "aggregate": ("n",),
    "region": ("region", "eps", "zeta_a"),
    "sprinkle": ("t",),
    "wired-sample": (),
    "hockey": ("tmax", "tstep", "zeta"),
    "free": ("steps", "f", "f_c"),
    "wake": ("zeta", "steps"),
    "correlations": ("chain", "zeta", "r_max", "n", "steps"),
    "hyperuniformity": ("zeta", "boxes"),
    "quadrature": ("region", "eps", "zeta_a", "x0_samples"),
    "coupling": ("max_steps",),
}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def derive_seed(master: int, replica_index: int, stream_tag: int | str = 0) -> int:
    """64-bit seed for replica ``replica_index`` of stream ``stream_tag``."""
    if isinstance(stream_tag, str):
        stream_tag = int.from_bytes(hashlib.sha256(stream_tag.encode()).digest()[:8], "little")
    return keyed.key(master, keyed.TAG_REPLICA, replica_index, stream_tag)


@dataclass
class ExperimentConfig:
    """Flat experiment description; keys mirror the command-line flags.

    ``lambda`` is spelled ``lam`` in Python and ``lambda`` in JSON/flags.
    """

    experiment: str
    dim: int = 2
    L: int | None = None
    lam: float = 1.0
    mode: str = "literal"
    seed: int = 0
    replicas: int = 1
    budget: int = DEFAULT_BUDGET
    out: str = "arw-out"
    threads: int = 1
    n: int | None = None
    t: float | None = None
    tmax: float = 1.2
    tstep: float = 0.05
    zeta: float | None = None
    steps: int | None = None
    r_max: int = 5
    boxes: list | None = None
    region: str = "disk"
    eps: float = 1 / 16
    f: str = "nlog2n"
    f_c: float = 1.0
    zeta_a: float | None = None
    x0_samples: int = 50
    chain: str = "free"
    max_steps: int | None = None

    @classmethod
    def field_names(cls) -> list[str]:
        return [("lambda" if f.name == "lam" else f.name) for f in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "experiment" not in data:
            raise ConfigError("config needs an 'experiment' key")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lambda"] = d.pop("lam")
        return {k: d[k] for k in self.field_names()}

    def to_argv(self) -> list[str]:
        """Command line reproducing this config."""
        argv = [self.experiment]
        d = self.to_dict()
        for k in COMMON_KEYS + EXPERIMENT_KEYS[self.experiment]:
            v = d[k]
            if v is None:
                continue
            flag = "--" + k.replace("_", "-")
            if isinstance(v, list):
                argv += [flag, ",".join(str(x) for x in v)]
            else:
                argv += [flag, repr(v) if isinstance(v, float) else str(v)]
        return argv

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.experiment in EXPERIMENTS, f"unknown experiment {self.experiment!r}")
        need(isinstance(self.dim, int) and 1 <= self.dim <= 3, "dim must be 1, 2 or 3")
        need(isinstance(self.lam, (int, float)) and self.lam > 0, "lambda must be positive")
        need(self.mode in MODES, f"mode must be one of {MODES}")
        need(self.mode == "collapsed" or math.isfinite(self.lam),
             "lambda = inf needs collapsed mode")
        need(isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed must be a 64-bit integer")
        need(isinstance(self.replicas, int) and self.replicas >= 1, "replicas must be >= 1")
        need(isinstance(self.threads, int) and self.threads >= 1, "threads must be >= 1")
        need(isinstance(self.budget, int) and self.budget >= 1, "budget must be positive")
        need(self.L is None or (isinstance(self.L, int) and self.L >= 1), "L must be positive")
        need(self.n is None or (isinstance(self.n, int) and self.n >= 1), "n must be >= 1")
        need(self.t is None or self.t >= 0, "t must be non-negative")
        need(self.tmax > 0 and 0 < self.tstep <= self.tmax, "need 0 < tstep <= tmax")
        need(self.zeta is None or 0 < self.zeta <= 1, "zeta must lie in (0, 1]")
        need(self.steps is None or self.steps >= 0, "steps must be non-negative")
        need(self.r_max >= 0, "r_max must be non-negative")
        need(self.region in REGIONS, f"region must be one of {REGIONS}")
        need(self.eps > 0, "eps must be positive")
        need(self.f in ("nlog2n", "n1.5", "nlogn"), "f must be nlog2n, n1.5 or nlogn")
        need(self.f_c > 0, "f_c must be positive")
        need(self.chain in CHAINS, f"chain must be one of {CHAINS}")
        need(self.x0_samples >= 1, "x0_samples must be >= 1")
        if self.boxes is not None:
            need(all(isinstance(b, int) and b >= 1 for b in self.boxes), "boxes are positive side lengths")
        needs_L = {"sprinkle", "wired-sample", "hockey", "free", "wake", "hyperuniformity", "coupling"}
        if self.experiment in needs_L or (self.experiment == "correlations" and self.chain != "point"):
            need(self.L is not None, f"{self.experiment} needs --L")
        if self.experiment in {"sprinkle", "free", "wake"} or (
                self.experiment in {"correlations", "hyperuniformity"} and self.chain in ("free", "wake")):
            need(self.L is None or self.L >= 3, "torus side must be >= 3")


@dataclass
class RunManifest:
    config: dict
    version: str
    replica_seeds: list
    wall_time: float
    budget_events: list
    outputs: dict  # relative path -> sha256
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# --------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class _Result:
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    snapshots: dict = field(default_factory=dict)  # name -> Configuration
    summary: dict = field(default_factory=dict)
    budget_events: list = field(default_factory=list)


def _map(cfg: ExperimentConfig, fn, seeds):
    """Run ``fn(replica, seed)`` for every replica; results in replica order."""
    if cfg.threads == 1:
        return [fn(i, s) for i, s in enumerate(seeds)]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(fn, range(len(seeds)), seeds))


def _mean_se(xs):
    xs = np.asarray(xs, dtype=float)
    se = xs.std(ddof=1) / math.sqrt(len(xs)) if len(xs) > 1 else float("nan")
    return float(xs.mean()), float(se)


def _pm(mean, se) -> str:
    return f"{mean:.4f}±{se:.4f}" if math.isfinite(se) else f"{mean:.4f}"


def _region(name: str, d: int):
    if name == "disk":
        return ch.Disk((0.0,) * d, 1.0)
    if name == "square":
        return ch.Box((-1.0,) * d, (1.0,) * d)
    off = np.zeros(d)
    off[0] = 1.1
    return ch.Union((ch.Disk(tuple(-off), 1.0), ch.Disk(tuple(off), 1.0)))


# --------------------------------------------------------------------------
# experiments


def _exp_aggregate(cfg, seeds):
    n = cfg.n or 1000

    def one(i, s):
        try:
            o = ch.point_source(n, cfg.lam, cfg.dim, s, cfg.mode, budget=cfg.budget)
        except BudgetExceeded as exc:
            return None, str(exc)
        return (st.aggregate_metrics(o), o.final if i == 0 else None), None

    res = _Result()
    rows = []
    for i, (r, err) in enumerate(_map(cfg, one, seeds)):
        if err:
            res.budget_events.append({"replica": i, "error": err})
            continue
        m, snap = r
        rows.append((i, seeds[i], m.n, m.zeta_hat, m.inradius, m.outradius, m.sphericity))
        if snap is not None and cfg.dim <= 3:
            res.snapshots["aggregate_r0"] = snap
    res.tables["metrics"] = (("replica", "seed", "n", "zeta_hat", "inradius", "outradius",
                              "sphericity"), rows)
    if rows:
        res.summary["zeta_hat"] = _pm(*_mean_se([r[3] for r in rows]))
        res.summary["sphericity"] = _pm(*_mean_se([r[6] for r in rows]))
    return res


def _exp_region(cfg, seeds):
    region = _region(cfg.region, cfg.dim)

    def one(i, s):
        o = ch.region_source(region, cfg.eps, cfg.lam, s, cfg.mode, budget=cfg.budget)
        sup = st.sleeper_support(o.final, cfg.zeta_a or o.initial_particles / o.visited.sum())
        return o, len(sup)

    res = _Result()
    rows = []
    for i, (o, nsup) in enumerate(_map(cfg, one, seeds)):
        rows.append((i, seeds[i], o.initial_particles, nsup, cfg.eps ** cfg.dim * nsup,
                     o.initial_particles / nsup))
        if i == 0:
            res.snapshots["region_r0"] = o.final
    res.tables["region"] = (("replica", "seed", "particles", "support_sites", "support_area",
                             "density"), rows)
    res.summary["density"] = _pm(*_mean_se([r[5] for r in rows]))
    return res


def _exp_sprinkle(cfg, seeds):
    t = cfg.t if cfg.t is not None else 0.3

    def one(i, s):
        try:
            o = ch.poisson_stabilize(cfg.L, cfg.dim, None, t, cfg.lam, s, cfg.mode, cfg.budget)
            return (o.extra["sprinkled"], o.extra["resamples"], o.moves, density(o.final), 1), None
        except BudgetExceeded as exc:
            return (exc.partial.initial_particles, 0, exc.partial.moves, float("nan"), 0), str(exc)

    res = _Result()
    rows = []
    for i, (r, err) in enumerate(_map(cfg, one, seeds)):
        if err:
            res.budget_events.append({"replica": i, "error": err})
        rows.append((i, seeds[i]) + r)
    res.tables["sprinkle"] = (("replica", "seed", "sprinkled", "resamples", "moves",
                               "density", "stabilized"), rows)
    res.summary["stabilized_fraction"] = repr(float(np.mean([r[-1] for r in rows])))
    return res


def _exp_wired_sample(cfg, seeds):
    top = Topology.wired(cfg.L, cfg.dim)
    win = ch.bulk_window(top.shape)

    def one(i, s):
        return ch.wired_exact_sample(top, cfg.lam, s, cfg.mode, cfg.budget)

    res = _Result()
    rows = []
    for i, c in enumerate(_map(cfg, one, seeds)):
        rows.append((i, seeds[i], c.total_particles, density(c),
                     float(np.count_nonzero(c.states[win]) / c.states[win].size)))
        if i == 0:
            res.snapshots["wired_sample_r0"] = c
    res.tables["samples"] = (("replica", "seed", "particles", "density", "bulk_density"), rows)
    res.summary["density"] = _pm(*_mean_se([r[3] for r in rows]))
    return res


def _exp_hockey(cfg, seeds):
    vol = cfg.L ** cfg.dim
    T = int(round(cfg.tmax * vol))
    grid = np.arange(0, cfg.tmax + cfg.tstep / 2, cfg.tstep)
    record = np.minimum(np.round(grid * vol).astype(np.int64), T)

    def one(i, s):
        return ch.wired_drive_uniform(cfg.L, cfg.lam, T, s, cfg.dim, record, cfg.mode, cfg.budget)

    curves = _map(cfg, one, seeds)
    g = np.mean([c.global_density for c in curves], axis=0)
    b = np.mean([c.bulk_density for c in curves], axis=0)
    t = record / vol
    res = _Result()
    res.tables["hockey"] = (("t", "global_density", "bulk_density"), list(zip(t, g, b)))
    zc = cfg.zeta if cfg.zeta is not None else None
    dist, plateau = st.hockey_distance(t, g, zc if zc is not None else 1.0)
    res.summary["plateau"] = repr(plateau)
    if zc is not None:
        res.summary["hockey_distance"] = repr(dist)
    return res


def _exp_free(cfg, seeds):
    steps = cfg.steps if cfg.steps is not None else cfg.L ** cfg.dim
    det = ch.ThresholdDetector(cfg.f, cfg.f_c)

    def one(i, s):
        return ch.free_run(cfg.L, cfg.dim, cfg.lam, steps, s, det, mode=cfg.mode,
                           budget=cfg.budget)

    res = _Result()
    vol = cfg.L ** cfg.dim
    rows, taus = [], []
    for i, tr in enumerate(_map(cfg, one, seeds)):
        rows += [(i, k + 1, k + 1, 0, int(u), (k + 1) / vol) for k, u in enumerate(tr.U)]
        taus.append((i, seeds[i], -1 if tr.tau_f is None else tr.tau_f, len(tr.U)))
        if i == 0:
            res.snapshots["free_r0"] = tr.final.config
    res.tables["trace"] = (("replica", "step", "particles", "exits", "moves", "density"), rows)
    res.tables["threshold"] = (("replica", "seed", "tau_f", "steps_run"), taus)
    hit = [t[2] / vol for t in taus if t[2] >= 0]
    res.summary["tau_f_density"] = _pm(*_mean_se(hit)) if hit else "none"
    return res


def _wake_chain(cfg, s, steps):
    top = Topology.torus(cfg.L, cfg.dim)
    k = int(math.floor((cfg.zeta or 0.3) * top.num_sites))
    state = ch.ChainState(ch.uniform_active(top, k, s), InstructionSource(s, cfg.lam, cfg.mode),
                          budget=cfg.budget)
    out = []
    for _ in range(steps):
        state = ch.wake_step(state)
        out.append(state.config)
    return out


def _exp_wake(cfg, seeds):
    steps = cfg.steps if cfg.steps is not None else 10

    def one(i, s):
        try:
            return _wake_chain(cfg, s, steps), None
        except ch.ChainBudgetExceeded as exc:
            return None, str(exc)

    res = _Result()
    runs = []
    for i, (r, err) in enumerate(_map(cfg, one, seeds)):
        if err:
            res.budget_events.append({"replica": i, "error": err})
        else:
            runs.append(r)
    rows = []
    for k in range(steps):
        if len(runs) < 2 or cfg.dim != 2:
            break
        cm = st.covariance_map([r[k] for r in runs], r_max=1)
        rows.append((k + 1, cm.at(1, 0), cm.se(1, 0), len(runs)))
    res.tables["wake_covariance"] = (("step", "cov_nn", "stderr", "replicas"), rows)
    if rows:
        res.summary["cov_nn_last"] = f"{rows[-1][1]:.3e}±{rows[-1][2]:.1e}"
    return res


def _correlation_samples(cfg, seeds):
    zeta = cfg.zeta or 0.81
    if cfg.chain == "free":
        k = int(math.floor(zeta * cfg.L ** 2))
        return (lambda i, s: ch.free_sample(cfg.L, 2, cfg.lam, k, s, cfg.mode, cfg.budget)), "torus"
    if cfg.chain == "wired":
        top = Topology.wired(cfg.L, 2)
        return (lambda i, s: ch.wired_exact_sample(top, cfg.lam, s, cfg.mode, cfg.budget)), "d8"
    if cfg.chain == "point":
        n = cfg.n or 3215
        return (lambda i, s: ch.point_source(n, cfg.lam, 2, s, cfg.mode, budget=cfg.budget).final), "d8"
    steps = cfg.steps or 10
    return (lambda i, s: _wake_chain(cfg, s, steps)[-1]), "torus"


def _exp_correlations(cfg, seeds):
    if cfg.dim != 2:
        raise ConfigError("correlations need dim = 2")
    sample, group = _correlation_samples(cfg, seeds)
    samples = _map(cfg, sample, seeds)
    if cfg.chain == "point":
        # crop a common square around the origin, well inside the aggregate
        radius = math.sqrt((cfg.n or 3215) / (math.pi * 0.9))
        half = max(2 * cfg.r_max + 2, int(0.7 * radius))
        arrs = []
        for c in samples:
            o = c.origin
            arrs.append(c.states[o[0] - half:o[0] + half + 1, o[1] - half:o[1] + half + 1] == -1)
        samples = arrs
    tab = st.correlation_table(samples, group, cfg.r_max, zeta_nominal=cfg.zeta)
    res = _Result()
    rows = [(x, y, c, s, tab.samples) for x, y, c, s, _ in tab.rows()]
    res.tables["correlations"] = (("x", "y", "corr", "stderr", "samples"), rows)
    res.summary["zeta_hat"] = repr(tab.zeta_hat)
    if cfg.r_max >= 1:
        res.summary["corr_1_0"] = _pm(tab[(1, 0)], tab.se((1, 0)))
    return res


def _exp_hyperuniformity(cfg, seeds):
    zeta = cfg.zeta or 0.3
    top = Topology.torus(cfg.L, cfg.dim)
    k = int(math.floor(zeta * top.num_sites))
    boxes = cfg.boxes or [max(1, cfg.L // 8), max(1, cfg.L // 4), max(1, cfg.L // 2)]

    def one(i, s):
        c = ch.free_sample(cfg.L, cfg.dim, cfg.lam, k, s, cfg.mode, cfg.budget)
        return [st.box_count(c, (b,) * cfg.dim) for b in boxes]

    counts = np.array(_map(cfg, one, seeds))
    vols = [b ** cfg.dim for b in boxes]
    vc = st.variance_curve(counts, vols, zeta=k / top.num_sites, dim=cfg.dim)
    res = _Result()
    res.tables["variance"] = (("vol", "variance", "replicas"),
                              [(v, x, vc.replicas) for v, x in zip(vols, vc.variance)])
    res.tables["tail"] = (("vol", "p_count_ge_zeta_vol"), list(zip(vols, vc.tail)))
    if vc.fitted_alpha is not None:
        res.summary["alpha"] = f"{vc.fitted_alpha:.3f} [{vc.alpha_ci[0]:.3f},{vc.alpha_ci[1]:.3f}]"
    return res


def _exp_quadrature(cfg, seeds):
    region = _region(cfg.region, cfg.dim)
    zeta_a = cfg.zeta_a or 0.68
    outs = _map(cfg, lambda i, s: ch.region_source(region, cfg.eps, cfg.lam, s, cfg.mode,
                                                   budget=cfg.budget), seeds)
    src = outs[0].extra["source_sites"]
    sup = st.sleeper_support(outs[0].final, zeta_a)
    rng = np.random.default_rng(derive_seed(cfg.seed, 0, "x0"))
    x0s = sup[rng.choice(len(sup), size=min(cfg.x0_samples, len(sup)), replace=False)] * cfg.eps
    fns = [st.constant(1.0), st.affine(np.ones(cfg.dim), 1.0)] + [st.neg_sq_dist(x) for x in x0s]
    reps = st.quadrature_check(src, outs, cfg.eps, zeta_a, fns)
    res = _Result()
    res.tables["quadrature"] = (("function_id", "lhs", "rhs", "margin", "stderr"),
                                [(r.function_id, r.lhs, r.rhs, r.margin, r.stderr) for r in reps])
    q = reps[2:]
    ok = sum(r.margin >= -3 * r.stderr for r in q)
    res.summary["margin_const"] = repr(reps[0].margin)
    res.summary["superharmonic_pass"] = f"{ok}/{len(q)}"
    return res


def _exp_coupling(cfg, seeds):
    top = Topology.wired(cfg.L, cfg.dim)
    max_steps = cfg.max_steps or 4 * top.num_sites

    def one(i, s):
        w = ch.wired_exact_sample(top, cfg.lam, derive_seed(s, 0, "start"), cfg.mode)
        a = ch.ChainState.start(w, s, cfg.lam, cfg.mode, cfg.budget)
        w2 = w.copy()
        empty = np.argwhere(w2.states == 0)
        if len(empty):
            w2.states[tuple(empty[0])] = -1
        else:
            w2.states[(0,) * cfg.dim] = 0
        w2.total_particles = int(np.count_nonzero(w2.states))
        b = ch.ChainState.start(w2, s, cfg.lam, cfg.mode, cfg.budget)
        return ch.coupling_run(a, b, max_steps)

    times = _map(cfg, one, seeds)
    res = _Result()
    res.tables["coupling"] = (("replica", "seed", "coupling_time"),
                              [(i, seeds[i], -1 if t is None else t) for i, t in enumerate(times)])
    res.summary["coupled_fraction"] = repr(float(np.mean([t is not None for t in times])))
    return res


_RUNNERS = {
    "aggregate": _exp_aggregate, "region": _exp_region, "sprinkle": _exp_sprinkle,
    "wired-sample": _exp_wired_sample, "hockey": _exp_hockey, "free": _exp_free,
    "wake": _exp_wake, "correlations": _exp_correlations,
    "hyperuniformity": _exp_hyperuniformity, "quadrature": _exp_quadrature,
    "coupling": _exp_coupling,
}


def run_experiment(config: ExperimentConfig | dict) -> RunManifest:
    """Run all replicas of an experiment and write its outputs and manifest."""
    if isinstance(config, dict):
        config = ExperimentConfig.from_dict(config)
    config.validate()
    t0 = time.perf_counter()
    seeds = [derive_seed(config.seed, i, config.experiment) for i in range(config.replicas)]
    res = _RUNNERS[config.experiment](config, seeds)

    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    index = {}
    for name, (header, rows) in res.tables.items():
        p = out / f"{name}.csv"
        p.write_text(_csv(header, rows))
        index[p.name] = _sha256(p)
    for name, cfg in res.snapshots.items():
        if cfg.dim > 3:
            continue
        (out / "snapshots").mkdir(exist_ok=True)
        p = write_pgm(cfg, out / "snapshots" / f"{name}.pgm")
        index[f"snapshots/{p.name}"] = _sha256(p)
    manifest = RunManifest(config.to_dict(), __version__, [str(s) for s in seeds],
                           time.perf_counter() - t0, res.budget_events, index, res.summary)
    fd, tmp = tempfile.mkstemp(dir=out, prefix=".manifest", suffix=".json")
    with os.fdopen(fd, "w") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
    os.replace(tmp, out / "manifest.json")
    return manifest


def verify_manifest(out_dir) -> bool:
    """True if every file listed in ``manifest.json`` matches its checksum."""
    out = Path(out_dir)
    man = json.loads((out / "manifest.json").read_text())
    return all(_sha256(out / rel) == digest for rel, digest in man["outputs"].items())
