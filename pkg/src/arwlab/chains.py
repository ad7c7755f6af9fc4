"""Experiment drivers: point and region sources, Poisson sprinkling, and the
wired, free and wake Markov chains on stable configurations.

Each chain step stabilizes with a fresh instruction epoch. Uniform driving
sites come from their own keyed stream (indexed by the chain's step number),
so two chains built from the same seed see the same additions and the same
instruction stacks -- which is what :func:`coupling_run` relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from . import keyed
from .lattice import ASLEEP, Configuration, DomainError, Kind, Topology
from .stabilizer import (DEFAULT_BUDGET, POLICIES, BudgetExceeded,
                         InfeasibleError, InstructionSource,
                         StabilizationOutcome, _table, stabilize)

# --------------------------------------------------------------------------
# finite sources on Z^d


def point_source(n: int, lam: float, d: int = 2, seed: int = 0,
                 mode: str = "literal", policy: str = "fifo",
                 budget: int = DEFAULT_BUDGET) -> StabilizationOutcome:
    """Stabilize ``n`` active particles at the origin of ``Z^d``."""
    if n < 1:
        raise DomainError("point source needs n >= 1")
    cfg = Configuration.empty(Topology.dynamic(d))
    cfg.add_active((0,) * d, n)
    return stabilize(cfg, InstructionSource(seed, lam, mode), policy=policy,
                     budget=budget)


@dataclass(frozen=True)
class Disk:
    """Euclidean ball ``|x - center| < radius`` in R^d."""
    center: tuple
    radius: float

    def contains(self, pts: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        return ((pts - c) ** 2).sum(axis=-1) < self.radius ** 2

    def bbox(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius

    @property
    def volume(self) -> float:
        d = len(self.center)
        return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * self.radius ** d


@dataclass(frozen=True)
class Box:
    """Open box ``lo < x < hi``."""
    lo: tuple
    hi: tuple

    def contains(self, pts):
        return np.all((pts > np.asarray(self.lo)) & (pts < np.asarray(self.hi)), axis=-1)

    def bbox(self):
        return np.asarray(self.lo, float), np.asarray(self.hi, float)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))


@dataclass(frozen=True)
class Union:
    parts: tuple

    def contains(self, pts):
        return np.any([p.contains(pts) for p in self.parts], axis=0)

    def bbox(self):
        los, his = zip(*(p.bbox() for p in self.parts))
        return np.min(los, axis=0), np.max(his, axis=0)


def discretize(region, eps: float) -> np.ndarray:
    """Lattice sites ``x`` with ``eps * x`` inside ``region`` as an (m, d) array."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    lo, hi = region.bbox()
    axes = [np.arange(math.floor(a / eps) - 1, math.ceil(b / eps) + 2) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    return grid[region.contains(grid * eps)]


def region_source(region, eps: float, lam: float, seed: int = 0,
                  mode: str = "literal", policy: str = "fifo",
                  budget: int = DEFAULT_BUDGET) -> StabilizationOutcome:
    """One active particle at every site of ``region`` on the ``eps``-lattice,
    stabilized on ``Z^d`` (lattice units)."""
    sites = discretize(region, eps)
    if len(sites) == 0:
        raise DomainError("the region contains no lattice sites")
    d = sites.shape[1]
    cfg = Configuration.empty(Topology.dynamic(d))
    span = int(np.abs(sites).max()) + 2
    while min(cfg.states.shape) < 2 * span + 4:
        cfg.grow()
    idx = sites + np.asarray(cfg.origin)
    np.add.at(cfg.states, tuple(idx.T), 1)
    cfg.total_particles = len(sites)
    out = stabilize(cfg, InstructionSource(seed, lam, mode), policy=policy, budget=budget)
    out.extra["source_sites"] = sites
    return out


def poisson_stabilize(L: int, d: int, base: Configuration | None, t: float,
                      lam: float, seed: int = 0, mode: str = "literal",
                      budget: int = DEFAULT_BUDGET) -> StabilizationOutcome:
    """Stabilize ``base + Poisson(t)`` active particles per site on the torus.

    Sprinkles that would overfill the torus are redrawn; the number of
    redraws is reported in ``outcome.extra["resamples"]``.
    """
    top = Topology.torus(L, d)
    cfg = base.copy() if base is not None else Configuration.empty(top)
    if cfg.topology != top:
        raise DomainError("base configuration lives on a different topology")
    if not cfg.is_stable():
        raise DomainError("base configuration must be stable")
    if t < 0:
        raise DomainError("sprinkle intensity must be non-negative")
    rng = np.random.default_rng(keyed.key(seed, keyed.TAG_SPRINKLE))
    resamples = 0
    while True:
        xi = rng.poisson(t, size=top.shape) if t > 0 else np.zeros(top.shape, np.int64)
        if cfg.total_particles + xi.sum() <= top.num_sites:
            break
        resamples += 1
        if resamples > 10_000:
            raise InfeasibleError("sprinkle keeps overfilling the torus")
    hit = xi > 0
    cfg.states[hit] = np.where(cfg.states[hit] == ASLEEP, 1, cfg.states[hit]) + xi[hit]
    cfg.total_particles += int(xi.sum())
    out = stabilize(cfg, InstructionSource(seed, lam, mode), budget=budget)
    out.extra["resamples"] = resamples
    out.extra["sprinkled"] = int(xi.sum())
    return out


# --------------------------------------------------------------------------
# Markov chains


@dataclass
class ChainState:
    """A stable configuration plus the bookkeeping needed to keep stepping.

    ``moves`` and ``exits`` hold per-step counts for every committed step.
    When ``stacks`` is set (a flat cumulative odometer), uniformly driven
    steps keep reading the stacks of epoch ``stack_epoch`` where the previous
    step stopped instead of starting a fresh epoch per step.
    """

    config: Configuration
    source: InstructionSource
    step: int = 0
    epoch_counter: int = 0
    budget: int = DEFAULT_BUDGET
    moves: list = field(default_factory=list)
    exits: list = field(default_factory=list)
    stacks: np.ndarray | None = None
    stack_epoch: int = 0

    def use_persistent_stacks(self):
        """Switch to cumulative stacks on a newly reserved epoch."""
        self.stacks = np.zeros(self.config.states.size, np.int64)
        self.stack_epoch = self.epoch_counter
        self.epoch_counter += 1

    @classmethod
    def start(cls, config: Configuration, seed: int, lam: float,
              mode: str = "literal", budget: int = DEFAULT_BUDGET) -> "ChainState":
        if not config.is_stable():
            raise DomainError("chains start from a stable configuration")
        return cls(config.copy(), InstructionSource(seed, lam, mode), budget=budget)

    def copy(self) -> "ChainState":
        return replace(self, config=self.config.copy(), moves=list(self.moves),
                       exits=list(self.exits),
                       stacks=None if self.stacks is None else self.stacks.copy())

    @property
    def particles(self) -> int:
        return self.config.total_particles


def _commit(state: ChainState, out: StabilizationOutcome) -> ChainState:
    new = state.copy()
    new.config = out.final
    new.step += 1
    new.epoch_counter += 1
    new.moves.append(out.moves)
    new.exits.append(out.exits)
    return new


def wired_step(state: ChainState, v) -> ChainState:
    """Add one active particle at ``v`` and stabilize with killing."""
    if state.config.topology.kind is not Kind.WIRED:
        raise DomainError("wired_step needs a wired box")
    if state.stacks is not None:
        raise DomainError("persistent stacks are only used by uniformly driven steps")
    cfg = state.config.copy()
    cfg.add_active(v)
    out = stabilize(cfg, state.source, budget=state.budget, epoch=state.epoch_counter)
    return _commit(state, out)


def wired_exact_sample(V: Topology, lam: float, seed: int = 0,
                       mode: str = "literal", budget: int = DEFAULT_BUDGET,
                       ) -> Configuration:
    """One exact draw from the wired chain's stationary law: stabilize ``1_V``."""
    if V.kind is not Kind.WIRED:
        raise DomainError("exact sampling is defined for wired boxes")
    out = stabilize(Configuration.full(V), InstructionSource(seed, lam, mode), budget=budget)
    return out.final


def _drive(state: ChainState, nsteps: int, threshold: float = 0) -> tuple[ChainState, bool]:
    """Uniformly driven add-and-stabilize steps. Returns the new state and
    whether the run ended early because the threshold was reached."""
    new = state.copy()
    cfg = new.config
    top = cfg.topology
    if top.kind is Kind.TORUS and cfg.total_particles + nsteps > top.num_sites:
        raise InfeasibleError("driving would overfill the torus")
    flat = cfg.states.reshape(-1)
    n = flat.size
    persistent = new.stacks is not None
    odo = new.stacks if persistent else np.zeros(n, np.int64)
    touched = np.zeros(n, np.int64)
    queue = np.zeros(n, np.int64)
    inq = np.zeros(n, np.uint8)
    moves = np.zeros(nsteps, np.int64)
    exits = np.zeros(nsteps, np.int64)
    noops = np.zeros(nsteps, np.int64)
    src = state.source
    done, status = K.drive_kernel(
        flat, odo, touched, queue, inq, _table(top.kind, top.shape),
        np.zeros(0, np.uint64), np.uint64(keyed.combine(src.run_seed, keyed.TAG_INSTRUCTIONS)),
        new.stack_epoch if persistent else new.epoch_counter,
        np.uint64(keyed.drive_root(src.run_seed)), new.step,
        nsteps, src.p_sleep, src.mode == "collapsed", POLICIES["fifo"],
        state.budget, int(math.ceil(threshold)), moves, exits, noops, persistent)
    if status == K.BUDGET:
        # replay the committed prefix from the saved state (runs are keyed)
        new = _drive(state, done)[0] if done else state.copy()
        raise ChainBudgetExceeded(new, new.step)
    new.moves.extend(moves[:done].tolist())
    new.exits.extend(exits[:done].tolist())
    new.step += done
    if not persistent:
        new.epoch_counter += done
    cfg.total_particles += done - int(exits[:done].sum())
    return new, done < nsteps


def drive_uniform(state: ChainState, nsteps: int) -> ChainState:
    """Add ``nsteps`` particles at uniform sites, stabilizing after each."""
    if nsteps < 0:
        raise ValueError("nsteps must be non-negative")
    return _drive(state, nsteps)[0] if nsteps else state.copy()


class ChainBudgetExceeded(RuntimeError):
    """A chain step ran out of budget; ``state`` is the last committed state."""

    def __init__(self, state: ChainState, step: int):
        super().__init__(f"chain step {step} exceeded its instruction budget")
        self.state = state
        self.step = step


@dataclass
class DriveCurve:
    steps: np.ndarray
    global_density: np.ndarray
    bulk_density: np.ndarray
    exits: np.ndarray  # per driving step

    @property
    def t(self) -> np.ndarray:
        return self.steps / self.volume

    volume: int = 1


def bulk_window(shape) -> tuple:
    """Central sub-box of side ``L/2`` (rounded down) along every axis."""
    return tuple(slice((L - L // 2) // 2, (L - L // 2) // 2 + L // 2) for L in shape)


def wired_drive_uniform(L: int, lam: float, T_steps: int, seed: int = 0,
                        d: int = 2, record=None, mode: str = "literal",
                        budget: int = DEFAULT_BUDGET) -> DriveCurve:
    """Run the uniformly driven wired chain on ``[1, L]^d`` from empty.

    ``record`` lists the step numbers at which global density ``|w_k|/L^d``
    and bulk density (central box of side ``L/2``) are recorded; default is
    every ``L^d / 20`` steps.
    """
    top = Topology.wired(L, d)
    vol = top.num_sites
    if record is None:
        record = np.arange(0, T_steps + 1, max(1, vol // 20))
    record = np.unique(np.asarray(record, dtype=np.int64))
    if len(record) and (record[0] < 0 or record[-1] > T_steps):
        raise DomainError("record steps must lie in [0, T_steps]")
    state = ChainState.start(Configuration.empty(top), seed, lam, mode, budget)
    win = bulk_window(top.shape)
    bulk_vol = int(np.prod([s.stop - s.start for s in win]))
    glob, bulk = [], []
    for k in record:
        if k > state.step:
            state, _ = _drive(state, int(k - state.step))
        glob.append(state.particles / vol)
        bulk.append(np.count_nonzero(state.config.states[win]) / bulk_vol)
    if state.step < T_steps:
        state, _ = _drive(state, T_steps - state.step)
    return DriveCurve(record, np.array(glob), np.array(bulk),
                      np.array(state.exits, dtype=np.int64), volume=vol)


@dataclass(frozen=True)
class ThresholdDetector:
    """Superlinear work threshold ``f(N)`` for the free chain.

    ``kind`` is ``"nlog2n"`` (``c N log^2 N``), ``"n1.5"`` (``c N^1.5``) or
    ``"nlogn"`` (``c N log N``).
    """

    kind: str = "nlog2n"
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("nlog2n", "n1.5", "nlogn"):
            raise ValueError(f"unknown threshold function {self.kind!r}")
        if not self.c > 0:
            raise ValueError("threshold constant must be positive")

    def threshold(self, N: int) -> float:
        if self.kind == "nlog2n":
            return self.c * N * math.log(N) ** 2
        if self.kind == "n1.5":
            return self.c * N ** 1.5
        return self.c * N * math.log(N)

    def triggered_at(self, U, N: int) -> int | None:
        f = self.threshold(N)
        hits = np.flatnonzero(np.asarray(U) >= f)
        return int(hits[0]) if hits.size else None


@dataclass
class FreeTrace:
    U: np.ndarray  # U_k: moves needed to stabilize phi_k + delta_{v_{k+1}}
    tau_f: int | None
    configs: dict  # step -> stable Configuration
    final: ChainState


def free_run(L: int, d: int, lam: float, steps: int, seed: int = 0,
             detector: ThresholdDetector | None = ThresholdDetector(),
             record=(), stop_at_threshold: bool = True, mode: str = "literal",
             budget: int = DEFAULT_BUDGET) -> FreeTrace:
    """Free chain on the torus from empty, uniformly driven for ``steps`` steps.

    Records ``U_k`` for every step and snapshots at the steps in ``record``.
    With ``stop_at_threshold`` the run ends at the first step whose work
    reaches ``detector``'s threshold.
    """
    top = Topology.torus(L, d)
    if steps > top.num_sites:
        raise DomainError("cannot add more particles than the torus has sites")
    state = ChainState.start(Configuration.empty(top), seed, lam, mode, budget)
    thr = detector.threshold(top.num_sites) if (detector and stop_at_threshold) else 0
    marks = sorted({int(r) for r in record if 0 <= r <= steps} | {steps})
    configs = {}
    stopped = False
    try:
        for m in marks:
            if m > state.step:
                state, stopped = _drive(state, m - state.step, thr)
            if stopped:
                break
            if m in record:
                configs[m] = state.config.copy()
    except ChainBudgetExceeded as exc:
        state = exc.state
    U = np.array(state.moves, dtype=np.int64)
    tau = detector.triggered_at(U, top.num_sites) if detector else None
    return FreeTrace(U, tau, configs, state)


def free_sample(L: int, d: int, lam: float, k: int, seed: int = 0,
                mode: str = "literal", budget: int = DEFAULT_BUDGET) -> Configuration:
    """Free chain state ``phi_k`` drawn in one stabilization.

    By the abelian property, adding the ``k`` uniform particles one at a time
    with a stabilization after each gives the same law as stabilizing all of
    them at once, which is what this does.
    """
    top = Topology.torus(L, d)
    if k > top.num_sites:
        raise DomainError("cannot add more particles than the torus has sites")
    return stabilize(uniform_active(top, k, seed), InstructionSource(seed, lam, mode),
                     budget=budget).final


def uniform_active(top: Topology, k: int, seed: int) -> Configuration:
    """``k`` active particles at independent uniform sites (driving stream)."""
    root = keyed.drive_root(seed)
    n = top.num_sites
    sites = np.array([keyed.drive_site(root, i, n) for i in range(k)], dtype=np.int64)
    counts = np.bincount(sites, minlength=n).reshape(top.shape)
    return Configuration(top, counts)


def wake_step(state: ChainState) -> ChainState:
    """Wake every sleeper, then stabilize. Raises :class:`ChainBudgetExceeded`
    (carrying the unchanged state) if the stabilization runs out of budget."""
    if state.config.topology.kind is not Kind.TORUS:
        raise DomainError("the wake chain runs on a torus")
    if state.stacks is not None:
        raise DomainError("persistent stacks are only used by uniformly driven steps")
    cfg = state.config.copy()
    cfg.wake_all()
    try:
        out = stabilize(cfg, state.source, budget=state.budget, epoch=state.epoch_counter)
    except BudgetExceeded:
        raise ChainBudgetExceeded(state, state.step) from None
    return _commit(state, out)


def coupling_run(state_a: ChainState, state_b: ChainState, max_steps: int,
                 shared_seed: int | None = None) -> int | None:
    """Drive two chains in lockstep with the same additions and instruction
    stacks; return the first step at which they coincide, or None.

    Both chains consume one shared set of per-site stacks cumulatively, so
    the chain carrying an extra particle equals the other chain plus that
    particle stabilized on the unread part of the stacks, and the two
    coalesce as soon as the extra particle leaves without disturbing it.

    Works for wired and free chains. ``shared_seed`` overrides both chains'
    seeds (default: ``state_a``'s).
    """
    if state_a.config.topology != state_b.config.topology:
        raise DomainError("coupled chains must share a topology")
    seed = state_a.source.run_seed if shared_seed is None else shared_seed
    a = state_a.copy()
    b = state_b.copy()
    a.source = replace(a.source, run_seed=seed)
    b.source = replace(b.source, run_seed=seed, lam=a.source.lam, mode=a.source.mode)
    b.step, b.epoch_counter = a.step, a.epoch_counter
    a.use_persistent_stacks()
    b.use_persistent_stacks()
    for k in range(max_steps + 1):
        if a.config == b.config:
            return k
        if k == max_steps:
            break
        a, _ = _drive(a, 1)
        b, _ = _drive(b, 1)
    return None
