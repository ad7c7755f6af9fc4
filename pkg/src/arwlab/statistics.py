"""Estimators for stabilized configurations and chain traces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy import ndimage, stats

from .lattice import ASLEEP, Configuration, DomainError, Kind
from .stabilizer import StabilizationOutcome


class DegenerateDensityError(ValueError):
    """Empirical density is 0 or 1, so correlation coefficients are undefined."""


# --------------------------------------------------------------------------
# point-source aggregates


@dataclass(frozen=True)
class AggregateMetrics:
    n: int
    zeta_hat: float
    inradius: float
    outradius: float
    sphericity: float


def aggregate_metrics(outcome: StabilizationOutcome) -> AggregateMetrics:
    """Density ``n / #visited`` and in/out radii of the visited set.

    The inradius is the distance to the nearest unvisited site, the outradius
    the distance to the farthest visited one (Euclidean, site centres).
    """
    n = outcome.initial_particles
    if n < 1:
        raise DomainError("aggregate needs at least one particle")
    visited = outcome.visited
    origin = np.asarray(outcome.final.origin)
    r_vis = np.sqrt(((np.argwhere(visited) - origin) ** 2).sum(axis=1))
    r_out = float(r_vis.max())
    r_gap = np.sqrt(((np.argwhere(~visited) - origin) ** 2).sum(axis=1))
    r_in = float(r_gap.min())
    # a lone visited origin has r_out = 0; its inradius is 1
    sph = 1.0 if r_out == 0 else min(1.0, r_in / r_out)
    return AggregateMetrics(n, n / int(visited.sum()), r_in, r_out, sph)


@dataclass(frozen=True)
class AnnulusProfile:
    edges: np.ndarray
    density: np.ndarray
    flagged: bool


def annulus_profile(outcome_or_config, n_annuli: int, inradius: float | None = None,
                    min_sites: int = 8) -> AnnulusProfile:
    """Sleeper density in ``n_annuli`` equal-area origin-centred annuli
    filling the disk of radius ``inradius`` (default: the aggregate's).

    If some annulus would hold fewer than ``min_sites`` lattice sites the
    number of annuli is reduced and ``flagged`` is set.
    """
    if isinstance(outcome_or_config, StabilizationOutcome):
        cfg = outcome_or_config.final
        if inradius is None:
            inradius = aggregate_metrics(outcome_or_config).inradius
    else:
        cfg = outcome_or_config
        if inradius is None:
            raise ValueError("inradius is required for a bare configuration")
    pts = np.indices(cfg.states.shape).reshape(cfg.dim, -1).T - np.asarray(cfg.origin)
    r = np.sqrt((pts ** 2).sum(axis=1))
    occ = (cfg.states.reshape(-1) == ASLEEP)
    flagged = False
    k = n_annuli
    while k >= 1:
        edges = inradius * np.sqrt(np.arange(k + 1) / k)
        which = np.digitize(r, edges, right=False) - 1
        inside = (r < inradius)
        sites = np.bincount(which[inside], minlength=k)[:k]
        if sites.min() >= min_sites or k == 1:
            break
        k -= 1
        flagged = True
    filled = np.bincount(which[inside], weights=occ[inside], minlength=k)[:k]
    with np.errstate(invalid="ignore", divide="ignore"):
        dens = filled / sites
    return AnnulusProfile(edges, dens, flagged)


# --------------------------------------------------------------------------
# site correlations


@dataclass(frozen=True)
class SymmetryGroup:
    """Symmetries averaged over by :func:`correlation_table`.

    ``torus``: all translations plus the lattice reflections/rotations of a
    torus. ``d8``: rotations and reflections of a window about its centre.
    ``identity``: no averaging.
    """

    kind: str = "torus"

    def __post_init__(self):
        if self.kind not in ("torus", "d8", "identity"):
            raise ValueError(f"unknown symmetry group {self.kind!r}")

    def orbit(self, x: int, y: int, square: bool = True) -> list[tuple[int, int]]:
        if self.kind == "identity":
            return [(x, y)]
        imgs = {(sx * x, sy * y) for sx in (1, -1) for sy in (1, -1)}
        if square:
            imgs |= {(b, a) for a, b in imgs}
        return sorted(imgs)

    def act(self, occ: np.ndarray, element: int, shift=(0, 0)) -> np.ndarray:
        """Apply group element ``element`` (0..7: ``k`` quarter turns, then a
        reflection if ``element >= 4``) and, for tori, a translation."""
        out = np.rot90(occ, element % 4)
        if element >= 4:
            out = out[::-1, :]
        if self.kind == "torus":
            out = np.roll(out, shift, axis=(0, 1))
        return out


def offsets(r_max: int) -> list[tuple[int, int]]:
    return [(x, y) for x in range(r_max + 1) for y in range(x + 1)]


@dataclass
class CorrelationTable:
    offsets: list
    corr: np.ndarray
    stderr: np.ndarray
    zeta_hat: float
    samples: int
    corr_nominal: np.ndarray | None = None
    zeta_nominal: float | None = None

    def __getitem__(self, xy) -> float:
        return float(self.corr[self.offsets.index(tuple(xy))])

    def se(self, xy) -> float:
        return float(self.stderr[self.offsets.index(tuple(xy))])

    def rows(self):
        for (x, y), c, s in zip(self.offsets, self.corr, self.stderr):
            yield x, y, float(c), float(s), self.samples


def _occupancy(sample) -> np.ndarray:
    if isinstance(sample, Configuration):
        return sample.states == ASLEEP
    return np.asarray(sample, dtype=bool)


def default_window(shape) -> tuple:
    """Centred sub-box of side ``floor(L/2)`` along each axis."""
    return tuple(slice((L - L // 2) // 2, (L - L // 2) // 2 + L // 2) for L in shape)


def _torus_pair_counts(occ: np.ndarray, offs, group: SymmetryGroup):
    """Integer pair counts per offset, summed over translations and the orbit,
    plus the number of (site, image) terms."""
    o = occ.astype(np.float64)
    f = np.fft.rfft2(o)
    auto = np.rint(np.fft.irfft2(f * np.conj(f), s=o.shape)).astype(np.int64)
    L0, L1 = occ.shape
    square = L0 == L1
    out = np.empty(len(offs), dtype=np.int64)
    terms = np.empty(len(offs), dtype=np.int64)
    for i, (x, y) in enumerate(offs):
        orb = group.orbit(x, y, square)
        out[i] = sum(int(auto[a % L0, b % L1]) for a, b in orb)
        terms[i] = len(orb) * occ.size
    return out, terms


def _window_pair_counts(occ: np.ndarray, offs, group: SymmetryGroup, window):
    base = occ[window]
    starts = [s.start for s in window]
    out = np.empty(len(offs), dtype=np.int64)
    terms = np.empty(len(offs), dtype=np.int64)
    for i, (x, y) in enumerate(offs):
        total = 0
        orb = group.orbit(x, y)
        for a, b in orb:
            sl = []
            for ax, (st, d) in enumerate(zip(starts, (a, b))):
                lo = st + d
                hi = lo + base.shape[ax]
                if lo < 0 or hi > occ.shape[ax]:
                    raise DomainError("offset reaches outside the sample domain")
                sl.append(slice(lo, hi))
            total += int(np.count_nonzero(base & occ[tuple(sl)]))
        out[i] = total
        terms[i] = len(orb) * base.size
    return out, terms


def correlation_table(samples: Iterable, group: SymmetryGroup | str = "torus",
                      r_max: int = 5, window=None,
                      zeta_nominal: float | None = None) -> CorrelationTable:
    """Empirical correlation coefficients
    ``(E[1(0)1(x,y)] - zeta^2) / (zeta - zeta^2)`` for ``0 <= y <= x <= r_max``.

    ``zeta`` is the occupation density pooled over all samples (over the
    window for non-torus groups); ``zeta_nominal``, if given, produces a second
    table normalized with that value instead. Standard errors come from the
    spread of per-sample estimates. ``samples`` may be a generator.
    """
    if isinstance(group, str):
        group = SymmetryGroup(group)
    offs = offsets(r_max)
    per_sample = []
    occupied = 0
    sites = 0
    for s in samples:
        occ = _occupancy(s)
        if occ.ndim != 2:
            raise DomainError("correlation tables are defined for d = 2")
        if group.kind == "torus":
            cnt, terms = _torus_pair_counts(occ, offs, group)
            occupied += int(occ.sum())
            sites += occ.size
        else:
            win = window if window is not None else default_window(occ.shape)
            cnt, terms = _window_pair_counts(occ, offs, group, win)
            occupied += int(occ[win].sum())
            sites += occ[win].size
        per_sample.append(cnt / terms)
    S = len(per_sample)
    if S == 0:
        raise ValueError("no samples")
    zeta = occupied / sites
    if zeta <= 0 or zeta >= 1:
        raise DegenerateDensityError(f"empirical density {zeta} is degenerate")
    m = np.array(per_sample)
    var0 = zeta - zeta * zeta
    rho = (m - zeta * zeta) / var0
    corr = rho.mean(axis=0)
    corr[0] = 1.0
    stderr = rho.std(axis=0, ddof=1) / math.sqrt(S) if S > 1 else np.full(len(offs), np.nan)
    nominal = None
    if zeta_nominal is not None:
        nominal = (m.mean(axis=0) - zeta_nominal ** 2) / (zeta_nominal - zeta_nominal ** 2)
    return CorrelationTable(offs, corr, stderr, zeta, S, nominal, zeta_nominal)


@dataclass
class CovarianceMap:
    cov: np.ndarray  # (2r+1, 2r+1); cov[r + x, r + y] is the offset (x, y)
    stderr: np.ndarray
    samples: int

    def at(self, x: int, y: int) -> float:
        r = self.cov.shape[0] // 2
        return float(self.cov[r + x, r + y])

    def se(self, x: int, y: int) -> float:
        r = self.cov.shape[0] // 2
        return float(self.stderr[r + x, r + y])


def covariance_map(samples: Iterable, center=None, r_max: int = 5,
                   translate: bool | None = None) -> CovarianceMap:
    """``Cov(1(center), 1(center + offset))`` for offsets in ``[-r_max, r_max]^2``.

    With ``translate`` (default for torus samples) the centre is averaged over
    every site of the torus; otherwise ``center`` (default: the middle of the
    array) is fixed and the covariance is taken across samples.
    """
    occs = []
    is_torus = None
    for s in samples:
        if isinstance(s, Configuration):
            is_torus = s.topology.kind is Kind.TORUS
        occs.append(_occupancy(s).astype(np.float64))
    if not occs:
        raise ValueError("no samples")
    if translate is None:
        translate = bool(is_torus)
    S = len(occs)
    size = 2 * r_max + 1
    rng = np.arange(-r_max, r_max + 1)
    if translate:
        per = np.empty((S, size, size))
        for i, o in enumerate(occs):
            f = np.fft.rfft2(o)
            auto = np.fft.irfft2(f * np.conj(f), s=o.shape) / o.size
            z = o.mean()
            per[i] = auto[np.ix_(rng % o.shape[0], rng % o.shape[1])] - z * z
        cov = per.mean(axis=0)
        se = per.std(axis=0, ddof=1) / math.sqrt(S) if S > 1 else np.zeros_like(cov)
        return CovarianceMap(cov, se, S)
    stack = np.array(occs)
    if center is None:
        center = tuple(n // 2 for n in stack.shape[1:])
    cx, cy = center
    c = stack[:, cx, cy]
    block = stack[:, cx - r_max:cx + r_max + 1, cy - r_max:cy + r_max + 1]
    if block.shape[1:] != (size, size):
        raise DomainError("covariance window reaches outside the samples")
    prod = c[:, None, None] * block
    cov = prod.mean(axis=0) - c.mean() * block.mean(axis=0)
    if S > 1:
        resid = (c - c.mean())[:, None, None] * (block - block.mean(axis=0))
        se = resid.std(axis=0, ddof=1) / math.sqrt(S)
    else:
        se = np.zeros_like(cov)
    return CovarianceMap(cov, se, S)


def window_marginals(samples: Iterable, window) -> dict:
    """Empirical law of the sleeper pattern inside ``window`` (a tuple of
    slices): maps a pattern (tuple of 0/1) to its frequency."""
    counts: dict = {}
    S = 0
    for s in samples:
        pat = tuple(_occupancy(s)[window].astype(np.int8).ravel().tolist())
        counts[pat] = counts.get(pat, 0) + 1
        S += 1
    return {k: v / S for k, v in counts.items()}


# --------------------------------------------------------------------------
# number variance


@dataclass
class VarianceCurve:
    abscissa: np.ndarray
    variance: np.ndarray
    replicas: int
    fitted_alpha: float | None = None
    alpha_ci: tuple | None = None
    tail: np.ndarray | None = None  # P(count >= zeta * volume) per box
    histograms: list = field(default_factory=list)


def box_count(config: Configuration, box_shape, corner=None) -> int:
    """Sleepers in the box ``corner + [0, l_1 - 1] x ... x [0, l_d - 1]``
    (storage coordinates; default corner is the first storage site)."""
    corner = corner or (0,) * config.dim
    sl = tuple(slice(c, c + l) for c, l in zip(corner, box_shape))
    return int(np.count_nonzero(config.states[sl]))


def variance_curve(count_samples, volumes, zeta: float | None = None,
                   confidence: float = 0.95, dim: int = 1) -> VarianceCurve:
    """Unbiased variance of box counts.

    ``count_samples`` is ``(replicas, boxes)``. With three or more boxes the
    growth exponent is the least-squares slope of log variance against log
    linear box size ``volume ** (1 / dim)``, so that independent sites give
    ``alpha = dim``; the ``confidence`` interval comes from the regression
    residuals.
    With ``zeta``, the empirical tail ``P(count >= zeta * volume)`` is
    returned per box.
    """
    counts = np.asarray(count_samples, dtype=np.float64)
    if counts.ndim == 1:
        counts = counts[:, None]
    vols = np.asarray(volumes, dtype=np.float64)
    if counts.shape[0] < 2:
        raise DomainError("variance needs at least two replicas")
    if counts.shape[1] != vols.size:
        raise ValueError("one volume per box is required")
    var = counts.var(axis=0, ddof=1)
    out = VarianceCurve(vols, var, counts.shape[0])
    if vols.size >= 3 and np.all(var > 0):
        fit = stats.linregress(np.log(vols) / dim, np.log(var))
        q = stats.t.ppf(0.5 + confidence / 2, vols.size - 2)
        out.fitted_alpha = float(fit.slope)
        out.alpha_ci = (float(fit.slope - q * fit.stderr), float(fit.slope + q * fit.stderr))
    if zeta is not None:
        out.tail = (counts >= zeta * vols).mean(axis=0)
    out.histograms = [np.unique(counts[:, j], return_counts=True) for j in range(vols.size)]
    return out


# --------------------------------------------------------------------------
# hockey stick


def hockey_distance(t, density, zeta_c_hat: float) -> tuple[float, float]:
    """Sup distance between ``density(t)`` and ``min(t, zeta_c_hat)``, and the
    plateau estimate (mean density over ``1.0 <= t <= 1.2``; NaN if no
    points fall there)."""
    t = np.asarray(t, dtype=float)
    density = np.asarray(density, dtype=float)
    if t.size == 0:
        raise ValueError("empty curve")
    if np.any(np.diff(t) < 0):
        raise ValueError("curve must be sorted in t")
    dist = float(np.max(np.abs(density - np.minimum(t, zeta_c_hat))))
    sel = (t >= 1.0 - 1e-12) & (t <= 1.2 + 1e-12)
    plateau = float(density[sel].mean()) if sel.any() else float("nan")
    return dist, plateau


# --------------------------------------------------------------------------
# quadrature inequality


@dataclass(frozen=True)
class TestFunction:
    """A test function ``u`` on R^d, evaluated on ``(m, d)`` point arrays."""
    id: str
    fn: Callable[[np.ndarray], np.ndarray]

    __test__ = False  # not a pytest class

    def __call__(self, pts):
        return self.fn(np.asarray(pts, dtype=float))


def constant(b: float = 1.0) -> TestFunction:
    return TestFunction(f"const({b:g})", lambda p: np.full(len(p), float(b)))


def affine(a, b: float = 0.0) -> TestFunction:
    a = np.asarray(a, dtype=float)
    return TestFunction(f"affine({a.tolist()},{b:g})", lambda p: p @ a + b)


def neg_sq_dist(x0) -> TestFunction:
    x0 = np.asarray(x0, dtype=float)
    return TestFunction(f"-|x-{np.round(x0, 6).tolist()}|^2",
                        lambda p: -((p - x0) ** 2).sum(axis=1))


def check_superharmonic(u: TestFunction, points: np.ndarray, eps: float,
                        tol: float = 1e-9):
    """Raise ValueError if the discrete Laplacian of ``u`` (lattice spacing
    ``eps``) is positive at any of ``points``."""
    points = np.asarray(points, dtype=float)
    d = points.shape[1]
    lap = -2 * d * u(points)
    for a in range(d):
        e = np.zeros(d)
        e[a] = eps
        lap = lap + u(points + e) + u(points - e)
    bad = lap > tol * max(1.0, float(np.abs(u(points)).max()))
    if bad.any():
        i = int(np.argmax(lap))
        raise ValueError(f"{u.id} is not superharmonic: discrete Laplacian "
                         f"{lap[i]:.3g} > 0 at {points[i].tolist()}")


def sleeper_support(config: Configuration, zeta_a: float, radius: float = 3.0) -> np.ndarray:
    """Lattice sites of the coarse-grained sleeper region: sites where the
    sleeper density within ``radius`` is at least ``zeta_a / 2``. Returns
    ``(m, d)`` lattice coordinates."""
    occ = (config.states == ASLEEP).astype(np.float64)
    r = int(math.ceil(radius))
    grid = np.indices((2 * r + 1,) * config.dim) - r
    kernel = ((grid ** 2).sum(axis=0) <= radius ** 2).astype(np.float64)
    local = ndimage.convolve(occ, kernel / kernel.sum(), mode="constant")
    return np.argwhere(local >= zeta_a / 2) - np.asarray(config.origin)


@dataclass(frozen=True)
class QuadratureReport:
    function_id: str
    lhs: float
    rhs: float
    margin: float
    stderr: float


def quadrature_check(source_sites: np.ndarray, outcomes, eps: float, zeta_a: float,
                     test_functions, zeta_stderr: float = 0.0,
                     support_radius: float = 3.0) -> list[QuadratureReport]:
    """Compare ``eps^d sum_{source} u`` with ``zeta_a eps^d sum_{support} u``.

    ``outcomes`` is one region-source outcome or a sequence of replicas; lhs,
    rhs and margin are replica means, and ``stderr`` combines the replica
    spread of the margin with the uncertainty ``zeta_stderr`` of ``zeta_a``.
    Every test function is checked for superharmonicity first.
    """
    if isinstance(outcomes, StabilizationOutcome):
        outcomes = [outcomes]
    src = np.asarray(source_sites)
    d = src.shape[1]
    supports = [sleeper_support(o.final, zeta_a, support_radius) for o in outcomes]
    probe = np.concatenate([src] + supports) * eps
    reports = []
    for u in test_functions:
        check_superharmonic(u, probe, eps)
        lhs = eps ** d * float(u(src * eps).sum())
        sums = np.array([eps ** d * float(u(s * eps).sum()) for s in supports])
        rhs = zeta_a * sums
        margins = lhs - rhs
        R = len(outcomes)
        se_rep = float(margins.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0
        se_zeta = abs(float(sums.mean())) * zeta_stderr
        reports.append(QuadratureReport(u.id, lhs, float(rhs.mean()),
                                        float(margins.mean()),
                                        math.hypot(se_rep, se_zeta)))
    return reports
