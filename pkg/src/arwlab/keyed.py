"""Keyed counter-based hashing.

Every random choice in the package is a pure function of a key tuple, so a
run can be replayed from its seed regardless of evaluation order or thread
count. The mixer is the splitmix64 finalizer; ``combine`` folds one more
64-bit word into a running key.

The numba versions in :mod:`arwlab._kernels` must stay bit-identical to the
pure-Python ones here (checked in the test suite).
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

# stream tags
TAG_INSTRUCTIONS = 0x1157
TAG_DRIVE = 0xD41E
TAG_POLICY = 0x9011
TAG_REPLICA = 0x4E91
TAG_SPRINKLE = 0x5931


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def combine(h: int, x: int) -> int:
    return mix64((h & MASK64) + mix64((x & MASK64) ^ GOLDEN))


def key(*words: int) -> int:
    """Fold a sequence of integers into one 64-bit key."""
    h = 0
    for w in words:
        h = combine(h, w)
    return h


def to_unit(r: int) -> float:
    """Top 53 bits of ``r`` as a float in [0, 1)."""
    return (r >> 11) * (1.0 / (1 << 53))


def epoch_key(run_seed: int, epoch: int) -> int:
    return combine(combine(run_seed, TAG_INSTRUCTIONS), epoch)


def drive_root(run_seed: int) -> int:
    return combine(run_seed, TAG_DRIVE)


def drive_site(root: int, step: int, nsites: int) -> int:
    """Uniform site index in ``range(nsites)`` for driving step ``step``."""
    return min(int(to_unit(combine(root, step)) * nsites), nsites - 1)
