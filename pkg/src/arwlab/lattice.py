"""Sites, topologies and particle configurations.

A site is a tuple of integer coordinates. Three boundary conventions are
supported:

* ``wired`` -- the box ``[1, L_1] x ... x [1, L_d]``; particles stepping out
  of the box are killed.
* ``torus`` -- ``Z_{L_1} x ... x Z_{L_d}`` with coordinates ``0..L_i-1``.
* ``dynamic`` -- the whole of ``Z^d``; storage is an origin-centred window
  that is doubled whenever a particle reaches its edge.

Configurations are stored densely, one int64 per site: ``-1`` for a sleeping
particle, otherwise the number of active particles.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ASLEEP = -1
KILL = None  # neighbour marker for a move that leaves a wired box

_PACK_BIAS = 1 << 20
_PACK_BITS = 21


class Kind(str, enum.Enum):
    WIRED = "wired"
    TORUS = "torus"
    DYNAMIC = "dynamic"


class DomainError(ValueError):
    """A site or parameter lies outside the domain of an operation."""


@dataclass(frozen=True)
class SiteState:
    n: int
    asleep: bool

    def __post_init__(self):
        if self.asleep and self.n != 1:
            raise ValueError("a sleeping site holds exactly one particle")

    @property
    def stable(self) -> bool:
        return self.n == 0 or (self.n == 1 and self.asleep)


def _decode(v: int) -> SiteState:
    return SiteState(1, True) if v == ASLEEP else SiteState(int(v), False)


@dataclass(frozen=True)
class Topology:
    kind: Kind
    dim: int
    shape: tuple[int, ...] = ()

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        if self.kind is not Kind.DYNAMIC:
            if len(self.shape) != self.dim:
                raise ValueError("shape must have one side length per axis")
            if self.kind is Kind.TORUS and min(self.shape) < 3:
                raise ValueError("torus side lengths must be >= 3")
            if min(self.shape) < 1:
                raise ValueError("side lengths must be positive")

    @classmethod
    def wired(cls, L, dim: int = 2) -> "Topology":
        shape = (int(L),) * dim if np.isscalar(L) else tuple(int(s) for s in L)
        return cls(Kind.WIRED, len(shape), shape)

    @classmethod
    def torus(cls, L, dim: int = 2) -> "Topology":
        shape = (int(L),) * dim if np.isscalar(L) else tuple(int(s) for s in L)
        return cls(Kind.TORUS, len(shape), shape)

    @classmethod
    def dynamic(cls, dim: int = 2) -> "Topology":
        return cls(Kind.DYNAMIC, dim)

    @property
    def finite(self) -> bool:
        return self.kind is not Kind.DYNAMIC

    @property
    def num_sites(self) -> int:
        if not self.finite:
            raise DomainError("the dynamic lattice has no finite volume")
        return int(np.prod(self.shape))

    @property
    def lower(self) -> int:
        """Smallest coordinate along each axis (finite topologies)."""
        return 1 if self.kind is Kind.WIRED else 0

    def contains(self, site) -> bool:
        if len(site) != self.dim:
            return False
        if not self.finite:
            return True
        lo = self.lower
        return all(lo <= c < lo + s for c, s in zip(site, self.shape))

    def sites(self):
        """All sites in row-major storage order (finite topologies)."""
        lo = self.lower
        return [tuple(int(c) + lo for c in idx) for idx in np.ndindex(*self.shape)]

    def neighbors(self, site) -> list:
        """The 2d neighbours of ``site``: ``+e_0, -e_0, +e_1, -e_1, ...``.

        Wired boxes report :data:`KILL` for out-of-box neighbours, tori wrap.
        """
        site = tuple(int(c) for c in site)
        if not self.contains(site):
            raise DomainError(f"site {site} is outside the {self.kind.value} domain")
        out = []
        for a in range(self.dim):
            for step in (1, -1):
                y = list(site)
                y[a] += step
                if self.kind is Kind.TORUS:
                    y[a] %= self.shape[a]
                elif self.kind is Kind.WIRED and not self.contains(y):
                    out.append(KILL)
                    continue
                out.append(tuple(y))
        return out


def neighbor_table(kind: Kind, shape) -> np.ndarray:
    """Flat-index adjacency ``(N, 2d)`` for a dense array of ``shape``.

    Entries are -1 where a move leaves the array (killing for wired boxes;
    never reached on the dynamic lattice because storage grows first).
    """
    shape = tuple(shape)
    idx = np.arange(int(np.prod(shape)), dtype=np.int64).reshape(shape)
    cols = []
    for a in range(len(shape)):
        for step in (1, -1):
            # value at x of np.roll(idx, -step) is idx[x + step]
            nb = np.roll(idx, -step, axis=a)
            if kind is not Kind.TORUS:
                edge = [slice(None)] * len(shape)
                edge[a] = -1 if step == 1 else 0
                nb[tuple(edge)] = -1
            cols.append(nb.ravel())
    return np.ascontiguousarray(np.stack(cols, axis=1))


def packed_site_keys(shape, origin) -> np.ndarray:
    """Coordinate-packed hash keys for dynamic-lattice storage.

    Keys depend only on the lattice coordinates, so they survive re-centering
    of the storage window.
    """
    grids = np.indices(shape).reshape(len(shape), -1)
    keys = np.zeros(grids.shape[1], dtype=np.uint64)
    for a in range(len(shape)):
        c = (grids[a] - origin[a] + _PACK_BIAS).astype(np.uint64)
        keys |= c << np.uint64(_PACK_BITS * a)
    return keys


def packed_key(site) -> int:
    k = 0
    for a, c in enumerate(site):
        k |= (int(c) + _PACK_BIAS) << (_PACK_BITS * a)
    return k


class Configuration:
    """Particle configuration over a topology.

    ``states`` is the dense storage array (see module docstring). For the
    dynamic lattice, ``origin`` is the storage index of the lattice origin.
    """

    def __init__(self, topology: Topology, states: np.ndarray | None = None,
                 origin=None):
        self.topology = topology
        if topology.finite:
            shape = topology.shape
            if states is None:
                states = np.zeros(shape, dtype=np.int64)
            origin = tuple(-topology.lower for _ in shape)
        else:
            if states is None:
                states = np.zeros((16,) * topology.dim, dtype=np.int64)
            if origin is None:
                origin = tuple(s // 2 for s in states.shape)
        states = np.asarray(states, dtype=np.int64)
        if states.ndim != topology.dim:
            raise ValueError("states array has the wrong dimension")
        if topology.finite and states.shape != tuple(topology.shape):
            raise ValueError("states array does not match the topology")
        if np.any(states < ASLEEP):
            raise ValueError("invalid site value")
        self.states = states
        self.origin = tuple(int(o) for o in origin)
        self.total_particles = int(np.where(states < 0, 1, states).sum())

    # --- constructors --------------------------------------------------
    @classmethod
    def empty(cls, topology: Topology) -> "Configuration":
        return cls(topology)

    @classmethod
    def full(cls, topology: Topology, asleep: bool = False) -> "Configuration":
        """One particle per site (``1_V``)."""
        states = np.full(topology.shape, ASLEEP if asleep else 1, dtype=np.int64)
        return cls(topology, states)

    @classmethod
    def from_sites(cls, topology: Topology, sites, asleep: bool = False,
                   ) -> "Configuration":
        """One particle per listed site; repeated sites stack (active only)."""
        cfg = cls(topology)
        for s in sites:
            cfg.add_active(s)
        if asleep:
            if np.any(cfg.states > 1):
                raise ValueError("cannot put several sleepers on one site")
            cfg.states[cfg.states == 1] = ASLEEP
        return cfg

    @classmethod
    def from_occupancy(cls, topology: Topology, occupied) -> "Configuration":
        """Stable configuration with a sleeper wherever ``occupied`` is true."""
        occ = np.asarray(occupied, dtype=bool)
        return cls(topology, np.where(occ, ASLEEP, 0).astype(np.int64))

    # --- indexing ------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.topology.dim

    def index(self, site) -> tuple[int, ...]:
        """Storage index of ``site``; grows dynamic storage if needed."""
        site = tuple(int(c) for c in site)
        if len(site) != self.dim:
            raise DomainError(f"site {site} has the wrong dimension")
        if self.topology.finite:
            if not self.topology.contains(site):
                raise DomainError(f"site {site} is outside the domain")
        else:
            while not all(1 <= c + o < s - 1 for c, o, s
                          in zip(site, self.origin, self.states.shape)):
                self.grow()
        return tuple(c + o for c, o in zip(site, self.origin))

    def site_of(self, index) -> tuple[int, ...]:
        return tuple(int(i) - o for i, o in zip(index, self.origin))

    def flat_site(self, flat: int) -> tuple[int, ...]:
        return self.site_of(np.unravel_index(int(flat), self.states.shape))

    def __getitem__(self, site) -> SiteState:
        if not self.topology.finite:
            idx = tuple(int(c) + o for c, o in zip(site, self.origin))
            if not all(0 <= i < s for i, s in zip(idx, self.states.shape)):
                return SiteState(0, False)
            return _decode(self.states[idx])
        return _decode(self.states[self.index(site)])

    def __setitem__(self, site, value: SiteState):
        idx = self.index(site)
        old = self.states[idx]
        self.total_particles += value.n - (1 if old == ASLEEP else int(old))
        self.states[idx] = ASLEEP if value.asleep else value.n

    # --- mutation ------------------------------------------------------
    def add_active(self, site, count: int = 1):
        """Add ``count`` active particles at ``site``, waking any sleeper."""
        idx = self.index(site)
        v = self.states[idx]
        self.states[idx] = (1 if v == ASLEEP else v) + count
        self.total_particles += count

    def wake_all(self):
        self.states[self.states == ASLEEP] = 1

    def grow(self):
        """Double the dynamic storage window along every axis, re-centred."""
        if self.topology.finite:
            raise DomainError("only dynamic storage can grow")
        old = self.states
        pad = [(s // 2, s - s // 2) for s in old.shape]
        self.states = np.pad(old, pad)
        self.origin = tuple(o + p[0] for o, p in zip(self.origin, pad))

    def copy(self) -> "Configuration":
        return Configuration(self.topology, self.states.copy(), self.origin)

    # --- queries -------------------------------------------------------
    def sleepers(self) -> np.ndarray:
        """Boolean occupancy array of sleeping particles (storage layout)."""
        return self.states == ASLEEP

    def counts(self) -> np.ndarray:
        return np.where(self.states == ASLEEP, 1, self.states)

    def is_stable(self) -> bool:
        return not np.any(self.states >= 1)

    def unstable_flat(self) -> np.ndarray:
        return np.flatnonzero(self.states >= 1)

    def sleeper_sites(self) -> np.ndarray:
        """``(m, d)`` array of lattice coordinates of sleeping particles."""
        idx = np.argwhere(self.states == ASLEEP)
        return idx - np.asarray(self.origin)

    def __eq__(self, other):
        if not isinstance(other, Configuration) or other.topology != self.topology:
            return NotImplemented
        if self.topology.finite:
            return np.array_equal(self.states, other.states)
        a, b = self.sparse(), other.sparse()
        return a == b

    def sparse(self) -> dict:
        """Map site -> raw stored value over all non-empty sites."""
        idx = np.argwhere(self.states != 0)
        return {self.site_of(i): int(self.states[tuple(i)]) for i in idx}

    def __repr__(self):
        return (f"Configuration({self.topology.kind.value}, "
                f"storage={self.states.shape}, particles={self.total_particles})")


def density(config: Configuration) -> float:
    """Particles per site of a finite configuration."""
    if not config.topology.finite:
        raise DomainError("density needs a finite volume")
    return config.total_particles / config.topology.num_sites


def pgm_pixels(config: Configuration, slice_index=None) -> np.ndarray:
    """Grey levels (0 empty, 128 active, 255 asleep) as a (height, width) array."""
    s = config.states
    if config.dim >= 3:
        if slice_index is None:
            slice_index = [s.shape[a] // 2 for a in range(2, config.dim)]
        s = s[(slice(None), slice(None)) + tuple(int(i) for i in slice_index)]
    elif config.dim == 1:
        s = s[:, None]
    if not config.topology.finite:
        nz = np.argwhere(s != 0)
        if len(nz):
            lo, hi = nz.min(axis=0), nz.max(axis=0) + 1
            s = s[lo[0]:hi[0], lo[1]:hi[1]]
    pix = np.where(s == ASLEEP, 255, np.where(s >= 1, 128, 0))
    # rows are indexed by y, smallest y first
    return pix.T.astype(np.int64)


def write_pgm(config: Configuration, path, slice_index=None) -> Path:
    """Write an ASCII ``P2`` snapshot of a 1-d/2-d configuration or a 2-d slice."""
    pix = pgm_pixels(config, slice_index)
    h, w = pix.shape
    lines = ["P2", f"{w} {h}", "255"]
    lines += [" ".join(str(v) for v in row) for row in pix]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_pgm(path) -> np.ndarray:
    tokens = [t for line in Path(path).read_text().splitlines()
              for t in line.split("#")[0].split()]
    if tokens[0] != "P2":
        raise ValueError("not an ASCII PGM file")
    w, h, _ = int(tokens[1]), int(tokens[2]), int(tokens[3])
    return np.array(tokens[4:4 + w * h], dtype=np.int64).reshape(h, w)
