"""Abelian stabilization of ARW configurations.

Stabilization uses the site-wise representation: every site carries a stack
of instructions (``Sleep`` with probability ``lambda / (1 + lambda)``,
otherwise a move in a uniform direction), and an unstable site is toppled by
consuming its next instruction. A ``Sleep`` read at a site holding two or
more particles is consumed without effect.

In ``literal`` mode the instruction at ``(epoch, site, index)`` is a keyed
hash of the run seed, so the final configuration and odometer do not depend
on the toppling order. ``collapsed`` mode skips the ineffective sleep draws
(moves are drawn directly at crowded sites); it has the same law but its
realisations depend on the order, and it admits ``lambda = inf``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from . import _kernels as K
from . import keyed
from .lattice import (ASLEEP, KILL, Configuration, Kind,
                      Topology, neighbor_table, packed_key, packed_site_keys)

DEFAULT_BUDGET = 10**10
POLICIES = {"fifo": K.FIFO, "lifo": K.LIFO, "random": K.RANDOM}
MODES = ("literal", "collapsed")


class BudgetExceeded(RuntimeError):
    """Stabilization consumed its instruction budget.

    ``partial`` is a :class:`StabilizationOutcome` whose ``final`` field holds
    the (unstable) configuration reached when the budget ran out.
    """

    def __init__(self, partial: "StabilizationOutcome"):
        super().__init__(
            f"instruction budget exhausted after {partial.instructions_total} instructions")
        self.partial = partial


class InfeasibleError(ValueError):
    """More particles than sites on a torus: no stable configuration exists."""


@dataclass(frozen=True)
class Instruction:
    direction: int = -1  # -1 means Sleep

    @property
    def is_sleep(self) -> bool:
        return self.direction < 0

    def __repr__(self):
        return "Sleep" if self.is_sleep else f"Move({self.direction})"


SLEEP = Instruction()


def Move(direction: int) -> Instruction:
    if direction < 0:
        raise ValueError("direction index must be non-negative")
    return Instruction(direction)


def sleep_probability(lam: float) -> float:
    """Chance that the rate-``lam`` sleep clock rings before the rate-1 jump clock."""
    if not lam > 0:
        raise ValueError("sleep rate must be positive")
    if math.isinf(lam):
        return 1.0
    return lam / (1.0 + lam)


@dataclass(frozen=True)
class InstructionSource:
    run_seed: int
    lam: float
    mode: str = "literal"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        sleep_probability(self.lam)
        if self.mode == "literal" and math.isinf(self.lam):
            raise ValueError("literal mode needs a finite sleep rate")

    @property
    def p_sleep(self) -> float:
        return sleep_probability(self.lam)

    def epoch_key(self, epoch: int) -> int:
        return keyed.epoch_key(self.run_seed, epoch)


def site_key(topology: Topology, site, storage_shape=None) -> int:
    """Hash key of ``site``: flat storage index on finite topologies,
    packed coordinates on the dynamic lattice."""
    if topology.finite:
        lo = topology.lower
        return int(np.ravel_multi_index(tuple(c - lo for c in site), topology.shape))
    return packed_key(site)


def draw_instruction(source: InstructionSource, epoch: int, site, index: int,
                     topology: Topology) -> Instruction:
    """Instruction number ``index`` of the stack at ``site`` (literal mode)."""
    if source.mode != "literal":
        raise ValueError("instruction stacks are only defined in literal mode")
    h = keyed.combine(keyed.combine(source.epoch_key(epoch), site_key(topology, site)), index)
    u = keyed.to_unit(h)
    p = source.p_sleep
    if u < p:
        return SLEEP
    twod = 2 * topology.dim
    return Move(min(int((u - p) / (1.0 - p) * twod), twod - 1))


def apply_instruction(config: Configuration, site, instr: Instruction) -> str:
    """Apply one instruction at an unstable site.

    Returns ``"slept"``, ``"noop"``, ``"moved"`` or ``"killed"``.
    """
    state = config[site]
    if state.stable:
        raise ValueError(f"site {site} is stable; nothing to topple")
    if instr.is_sleep:
        if state.n == 1:
            config.states[config.index(site)] = ASLEEP
            return "slept"
        return "noop"
    if instr.direction >= 2 * config.dim:
        raise ValueError("direction index out of range")
    dest = config.topology.neighbors(site)[instr.direction]
    idx = config.index(site)
    config.states[idx] -= 1
    config.total_particles -= 1
    if dest is KILL:
        return "killed"
    config.add_active(dest)
    return "moved"


@dataclass
class StabilizationOutcome:
    """Result of one stabilization.

    ``odometer`` shares the storage layout of ``final`` (for the dynamic
    lattice, index ``final.origin`` is the lattice origin). ``moves`` is the
    random-walk step count, killed steps included.
    """

    final: Configuration
    odometer: np.ndarray
    moves: int
    sleeps: int
    sleep_noops: int
    exits: int
    initial_particles: int
    extra: dict = field(default_factory=dict)

    @property
    def instructions_total(self) -> int:
        return self.moves + self.sleeps + self.sleep_noops

    @property
    def visited(self) -> np.ndarray:
        """Boolean mask of sites that held an active particle."""
        return self.odometer > 0

    def visited_sites(self) -> np.ndarray:
        return np.argwhere(self.odometer > 0) - np.asarray(self.final.origin)


@lru_cache(maxsize=32)
def _table(kind: Kind, shape: tuple) -> np.ndarray:
    t = neighbor_table(kind, shape)
    t.setflags(write=False)
    return t


@lru_cache(maxsize=8)
def _dynamic_tables(shape: tuple, origin: tuple):
    keys = packed_site_keys(shape, origin)
    edge = np.zeros(shape, dtype=np.uint8)
    for a in range(len(shape)):
        sl = [slice(None)] * len(shape)
        sl[a] = 0
        edge[tuple(sl)] = 1
        sl[a] = -1
        edge[tuple(sl)] = 1
    for arr in (keys, edge):
        arr.setflags(write=False)
    return keys, edge.ravel()


_NO_KEYS = np.zeros(0, dtype=np.uint64)
_NO_EDGE = np.zeros(0, dtype=np.uint8)


def _check_feasible(config: Configuration):
    top = config.topology
    if top.kind is Kind.TORUS and config.total_particles > top.num_sites:
        raise InfeasibleError(
            f"{config.total_particles} particles cannot stabilize on {top.num_sites} sites")


def stabilize(config: Configuration, source: InstructionSource,
              policy: str = "fifo", budget: int = DEFAULT_BUDGET, epoch: int = 0,
              policy_seed: int | None = None) -> StabilizationOutcome:
    """Stabilize ``config`` (left untouched) with instruction epoch ``epoch``.

    Raises :class:`BudgetExceeded` if more than ``budget`` instructions would
    be needed, :class:`InfeasibleError` for over-full tori.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown scheduler policy {policy!r}")
    if budget < 1:
        raise ValueError("budget must be positive")
    _check_feasible(config)
    work = config.copy()
    states = work.states.reshape(-1)
    odo = np.zeros(states.size, dtype=np.int64)
    touched = np.zeros(states.size, dtype=np.int64)
    queue = np.zeros(states.size, dtype=np.int64)
    inq = np.zeros(states.size, dtype=np.uint8)
    counters = np.zeros(K.N_COUNTERS, dtype=np.int64)
    init = work.unstable_flat()
    if policy_seed is None:
        policy_seed = keyed.key(source.run_seed, keyed.TAG_POLICY)
    pkey = keyed.combine(policy_seed, epoch)
    hkey = np.uint64(source.epoch_key(epoch))
    initial = config.total_particles
    collapsed = source.mode == "collapsed"

    while True:
        shape = work.states.shape
        if work.topology.finite:
            nbr, skey, edge = _table(work.topology.kind, shape), _NO_KEYS, _NO_EDGE
        else:
            nbr = _table(Kind.DYNAMIC, shape)
            skey, edge = _dynamic_tables(shape, work.origin)
        status = K.stabilize_kernel(
            states, odo, touched, queue, inq, init, nbr, skey, edge, hkey,
            source.p_sleep, collapsed, POLICIES[policy], np.uint64(pkey),
            budget, counters)
        if status != K.GROW:
            break
        odo_grid = odo.reshape(shape)
        work.grow()
        pad = [((n - o) // 2, (n - o) - (n - o) // 2)
               for n, o in zip(work.states.shape, shape)]
        odo = np.pad(odo_grid, pad).reshape(-1)
        states = work.states.reshape(-1)
        touched = np.zeros(states.size, dtype=np.int64)
        nz = np.flatnonzero(odo)
        touched[:nz.size] = nz
        counters[K.C_NTOUCHED] = nz.size
        queue = np.zeros(states.size, dtype=np.int64)
        inq = np.zeros(states.size, dtype=np.uint8)
        init = work.unstable_flat()

    work.total_particles = initial - int(counters[K.C_EXITS])
    out = StabilizationOutcome(
        final=work,
        odometer=odo.reshape(work.states.shape),
        moves=int(counters[K.C_MOVES]),
        sleeps=int(counters[K.C_SLEEPS]),
        sleep_noops=int(counters[K.C_NOOPS]),
        exits=int(counters[K.C_EXITS]),
        initial_particles=initial,
    )
    if status == K.BUDGET:
        raise BudgetExceeded(out)
    return out


def stabilize_collapsed(config: Configuration, seed: int, lam: float,
                        policy: str = "fifo", budget: int = DEFAULT_BUDGET,
                        epoch: int = 0) -> StabilizationOutcome:
    """Stabilize with sleep draws at crowded sites skipped; ``lam`` may be inf."""
    return stabilize(config, InstructionSource(seed, lam, "collapsed"),
                     policy=policy, budget=budget, epoch=epoch)


def stabilize_reference(config: Configuration,
                        draw: Callable[[tuple, int], Instruction],
                        policy: str = "fifo", rng: np.random.Generator | None = None,
                        max_instructions: int = 10**7):
    """Slow pure-Python stabilizer driven by an arbitrary instruction stack.

    ``draw(site, index)`` returns instruction ``index`` of the stack at
    ``site``. Returns ``(final, odometer, counts)`` where ``odometer`` maps
    site -> instructions consumed and ``counts`` has keys ``moved``,
    ``killed``, ``slept`` and ``noop``. Meant as an independent check of the
    compiled engine and for scripted stacks.
    """
    work = config.copy()
    if work.topology.kind is Kind.TORUS and work.total_particles > work.topology.num_sites:
        raise InfeasibleError("over-full torus")
    odo: dict = {}
    counts = {"moved": 0, "killed": 0, "slept": 0, "noop": 0}
    pending = deque(work.flat_site(i) for i in work.unstable_flat())
    queued = set(pending)
    rng = rng or np.random.default_rng(0)
    used = 0
    while pending:
        if used >= max_instructions:
            raise RuntimeError("reference stabilizer ran out of instructions")
        if policy == "fifo":
            x = pending.popleft()
        elif policy == "lifo":
            x = pending.pop()
        else:
            j = int(rng.integers(len(pending)))
            pending.rotate(-j)
            x = pending.popleft()
        queued.discard(x)
        i = odo.get(x, 0)
        odo[x] = i + 1
        used += 1
        instr = draw(x, i)
        dest = None
        if not instr.is_sleep:
            dest = work.topology.neighbors(x)[instr.direction]
        effect = apply_instruction(work, x, instr)
        counts[effect] += 1
        for s in (dest, x):
            if s is not None and not work[s].stable and s not in queued:
                pending.append(s)
                queued.add(s)
    return work, odo, counts
