"""Compiled inner loops.

Site states are stored as one int64 per site: ``-1`` is a sleeping particle,
``0`` an empty site and ``k >= 1`` a site holding ``k`` active particles.
Sites are addressed by their flat index into the storage array; direction
``2a`` moves along ``+e_a`` and ``2a + 1`` along ``-e_a``.
"""

import numpy as np
from numba import njit

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_INV53 = 1.0 / 9007199254740992.0

ASLEEP = -1

FIFO, LIFO, RANDOM = 0, 1, 2
DONE, BUDGET, GROW = 0, 1, 2

# slots of the counters array
C_MOVES, C_SLEEPS, C_NOOPS, C_EXITS, C_INSTR, C_PICKS, C_NTOUCHED = range(7)
N_COUNTERS = 7


@njit(inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(inline="always")
def combine(h, x):
    return mix64(h + mix64(x ^ _GOLDEN))


@njit(inline="always")
def to_unit(r):
    return np.float64(r >> _S11) * _INV53


@njit(cache=True)
def combine_u64(h, x):
    return combine(np.uint64(h), np.uint64(x))


@njit(cache=True, nogil=True)
def stabilize_kernel(state, odo, touched, queue, inq, init, nbr, skey, edge,
                     hkey, p_sleep, collapsed, policy, pkey, budget, counters):
    """Topple unstable sites until none is left, the budget runs out, or a
    particle lands on a site flagged in ``edge``.

    ``nbr[x, j]`` is the flat index reached from ``x`` in direction ``j``, or
    -1 when the move kills the particle. ``skey`` gives the hash key of each
    site (empty: the flat index is the key). ``queue`` and ``inq`` are scratch
    buffers of length ``state.size``; ``inq`` must be all zero on entry and is
    all zero again on a DONE exit. ``init`` seeds the queue (stable sites are
    skipped).
    """
    nsites = state.size
    twod = nbr.shape[1]
    use_skey = skey.size > 0
    use_edge = edge.size > 0
    head = 0
    size = 0
    hkey = np.uint64(hkey)
    pkey = np.uint64(pkey)
    for i in range(init.size):
        x = init[i]
        if state[x] >= 1 and inq[x] == 0:
            queue[(head + size) % nsites] = x
            size += 1
            inq[x] = 1

    status = DONE
    while size > 0:
        if counters[C_INSTR] >= budget:
            status = BUDGET
            break
        if policy == FIFO:
            x = queue[head]
            head += 1
            if head == nsites:
                head = 0
            size -= 1
        elif policy == LIFO:
            size -= 1
            x = queue[size]
        else:
            r = combine(pkey, np.uint64(counters[C_PICKS]))
            counters[C_PICKS] += 1
            j = int(to_unit(r) * size)
            if j >= size:
                j = size - 1
            x = queue[j]
            size -= 1
            queue[j] = queue[size]
        inq[x] = 0

        n = state[x]
        idx = odo[x]
        if idx == 0:
            touched[counters[C_NTOUCHED]] = x
            counters[C_NTOUCHED] += 1
        odo[x] = idx + 1
        counters[C_INSTR] += 1

        sk = skey[x] if use_skey else np.uint64(x)
        u = to_unit(combine(combine(hkey, sk), np.uint64(idx)))
        direction = -1
        if n == 1 or not collapsed:
            if u < p_sleep:
                if n == 1:
                    state[x] = ASLEEP
                    counters[C_SLEEPS] += 1
                else:
                    counters[C_NOOPS] += 1
            else:
                direction = int((u - p_sleep) / (1.0 - p_sleep) * twod)
                if direction >= twod:
                    direction = twod - 1
        else:
            direction = int(u * twod)
            if direction >= twod:
                direction = twod - 1

        grow = False
        if direction >= 0:
            counters[C_MOVES] += 1
            state[x] = n - 1
            y = nbr[x, direction]
            if y < 0:
                counters[C_EXITS] += 1
            else:
                m = state[y]
                if m < 0:
                    state[y] = 2
                else:
                    state[y] = m + 1
                if inq[y] == 0:
                    if policy == FIFO:
                        t = head + size
                        if t >= nsites:
                            t -= nsites
                        queue[t] = y
                    else:
                        queue[size] = y
                    size += 1
                    inq[y] = 1
                if use_edge and edge[y]:
                    grow = True

        if state[x] >= 1 and inq[x] == 0:
            if policy == FIFO:
                t = head + size
                if t >= nsites:
                    t -= nsites
                queue[t] = x
            else:
                queue[size] = x
            size += 1
            inq[x] = 1
        if grow:
            status = GROW
            break
    return status


@njit(cache=True, nogil=True)
def reset_scratch(odo, touched, inq, counters):
    nt = counters[C_NTOUCHED]
    for i in range(nt):
        odo[touched[i]] = 0
    counters[C_NTOUCHED] = 0
    for i in range(inq.size):
        inq[i] = 0


@njit(cache=True, nogil=True)
def drive_kernel(state, odo, touched, queue, inq, nbr, skey, instr_root,
                 first_epoch, drive_root, first_step, nsteps, p_sleep,
                 collapsed, policy, budget, threshold, out_moves, out_exits,
                 out_noops, persistent):
    """Run ``nsteps`` uniformly driven add-and-stabilize steps in place.

    Step ``s`` adds one active particle at driving site number
    ``first_step + s`` and stabilizes with epoch ``first_epoch + s``.
    Returns ``(steps_done, status)``. On BUDGET the failing step is left
    half-toppled and not counted. A step whose move count reaches
    ``threshold`` (when positive) is committed and ends the run.

    With ``persistent`` every step reads the stacks of epoch ``first_epoch``
    where the previous step left off: ``odo`` is the cumulative odometer and
    is not reset between steps.
    """
    nsites = state.size
    counters = np.zeros(N_COUNTERS, dtype=np.int64)
    init = np.zeros(1, dtype=np.int64)
    no_edge = np.zeros(0, dtype=np.uint8)
    droot = np.uint64(drive_root)
    iroot = np.uint64(instr_root)
    for s in range(nsteps):
        v = int(to_unit(combine(droot, np.uint64(first_step + s))) * nsites)
        if v >= nsites:
            v = nsites - 1
        if state[v] < 0:
            state[v] = 2
        else:
            state[v] += 1
        init[0] = v
        if persistent:
            hkey = combine(iroot, np.uint64(first_epoch))
        else:
            hkey = combine(iroot, np.uint64(first_epoch + s))
        for c in range(N_COUNTERS):
            counters[c] = 0
        status = stabilize_kernel(state, odo, touched, queue, inq, init, nbr,
                                  skey, no_edge, hkey, p_sleep, collapsed,
                                  policy, np.uint64(0), budget, counters)
        if status != DONE:
            return s, status
        out_moves[s] = counters[C_MOVES]
        out_exits[s] = counters[C_EXITS]
        out_noops[s] = counters[C_NOOPS]
        if not persistent:
            for i in range(counters[C_NTOUCHED]):
                odo[touched[i]] = 0
        if threshold > 0 and counters[C_MOVES] >= threshold:
            return s + 1, DONE
    return nsteps, DONE
