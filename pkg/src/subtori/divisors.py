"""Step constants, Melnikov non-resonance scans and the excluded-measure grid sweeps.

The per-step constants follow the parameter ladder

    eps+ = eps**(10/9), r+ = r/2 + r0/4, s+ = eps**(1/3) s / 8, gamma+ = gamma/2 + gamma0/4

and the nominal Fourier cutoff ``K+ = (floor(log(1/eps)) + 1)**(a* + 2)`` is an exact
Python integer. Scans use the much smaller effective cutoff where the
exponential tail bound already holds.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache, partial
from multiprocessing import Pool
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import gammaln, logsumexp

from subtori.model import (
    NormalForm,
    NormalFormMap,
    ParamChart,
    Spectrum,
    derivative_orders,
    eigenvalues_of_JM,
    finite_difference_partials,
    symplectic_matrix,
)
from subtori.series import Dims, NormWeights

if TYPE_CHECKING:
    from collections.abc import Iterator, Sequence

    from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger(__name__)

A_STAR = 7
"""Smallest integer ``a`` with ``(10/9)**a > 2``."""

_LOG_FLOAT_MAX = math.log(np.finfo(float).max)


def _floor_log_inverse(eps: float) -> int:
    # Exact powers of e, such as eps = exp(-10), must not fall one short.
    value = -math.log(eps)
    return math.floor(value + 1e-12 * max(1.0, value))


def nominal_cutoff(eps: float, a_star: int = A_STAR) -> int:
    """``K+ = (floor(log(1/eps)) + 1)**(a* + 2)`` as an exact integer."""
    return (_floor_log_inverse(eps) + 1) ** (a_star + 2)


def lattice_shell_count(n: int, j: int) -> int:
    """Number of ``k`` in ``Z^n`` with ``|k|_1 = j``."""
    if j == 0:
        return 1
    return sum(2**i * math.comb(n, i) * math.comb(j - 1, i - 1) for i in range(1, min(n, j) + 1))


def _log_shell_counts(n: int, shells: NDArray[np.float64]) -> NDArray[np.float64]:
    i = np.arange(1, n + 1, dtype=float)[:, None]
    j = shells[None, :]
    valid = i <= j
    log_terms = (
        i * math.log(2.0)
        + gammaln(n + 1) - gammaln(i + 1) - gammaln(n - i + 1)
        + gammaln(np.maximum(j, 1.0)) - gammaln(np.minimum(i, j)) - gammaln(np.maximum(j - i + 1, 1.0))
    )
    log_terms = np.where(valid, log_terms, -np.inf)
    return logsumexp(log_terms, axis=0)


def gamma_exponent_E(dims: Dims, tau: float) -> float:  # noqa: N802
    """Power of ``|k|`` in the ``Gamma`` sum: ``tau (n+1) 4m^2 + 4m^2 n``."""
    four_m2 = 4 * dims.m * dims.m
    return tau * (dims.n + 1) * four_m2 + four_m2 * dims.n


def gamma_sum(dims: Dims, tau: float, r: float, r_plus: float, K: int) -> tuple[float, float]:  # noqa: N803
    """``Gamma = sum_{0<|k|<=K} |k|^E exp(-|k| (r - r+) / 8)`` summed by l1 shells.

    Returns:
        Tuple of (log Gamma, Gamma); Gamma is ``inf`` when it overflows a float
    """
    if K < 1:
        return -math.inf, 0.0
    shells = np.arange(1, K + 1, dtype=float)
    logs = (
        _log_shell_counts(dims.n, shells)
        + gamma_exponent_E(dims, tau) * np.log(shells)
        - shells * (r - r_plus) / 8.0
    )
    log_gamma = float(logsumexp(logs))
    return log_gamma, math.exp(log_gamma) if log_gamma < _LOG_FLOAT_MAX else math.inf


def _log_tail(n: int, K: float, gap: float) -> float:  # noqa: N803
    return float(gammaln(n + 2)) + n * math.log(K) - K * gap / 8.0


def tail_integral_bound(n: int, K: int, r: float, r_plus: float) -> float:  # noqa: N803
    """``(n+1)! K^n exp(-K (r - r+) / 8)``, evaluated in log space."""
    log_value = _log_tail(n, K, r - r_plus)
    return math.exp(log_value) if log_value < _LOG_FLOAT_MAX else math.inf


def effective_cutoff(n: int, eps: float, r: float, r_plus: float, K_plus: int) -> int:  # noqa: N803
    """Smallest ``K`` with ``(n+1)! K^n exp(-K (r - r+)/8) <= eps``, capped at ``K+``."""
    gap = r - r_plus
    target = math.log(eps)
    if _log_tail(n, 1, gap) <= target:
        return 1
    lo = max(1, math.ceil(8 * n / gap))
    hi = lo
    while _log_tail(n, hi, gap) > target:
        if hi >= K_plus:
            return K_plus
        hi *= 2
    while lo < hi:
        mid = (lo + hi) // 2
        if _log_tail(n, mid, gap) <= target:
            hi = mid
        else:
            lo = mid + 1
    return min(lo, K_plus)


@dataclass(frozen=True)
class StepBudget:
    """Constants of one KAM step and the values handed to the next one."""

    step: int
    r: float
    s: float
    gamma: float
    eps: float
    tau: float
    r0: float
    gamma0: float
    K_plus: int
    """Nominal cutoff ``(floor(log 1/eps) + 1)**(a* + 2)``."""
    K_eff: int
    """Cutoff actually used: the smallest ``K`` meeting the exponential tail bound."""
    r_plus: float
    s_plus: float
    gamma_plus: float
    eps_plus: float
    alpha: float
    log_Gamma: float
    Gamma: float
    a_star: int = A_STAR

    @property
    def weights(self) -> NormWeights:
        return NormWeights(self.r, self.s)

    @property
    def next_weights(self) -> NormWeights:
        return NormWeights(self.r_plus, self.s_plus)

    def scale(self, dims: Dims) -> float:
        """``eps s^2 gamma^G``, the size the step hypothesis allows for ``P``."""
        return self.eps * self.s**2 * self.gamma**dims.gamma_exponent

    def next_scale(self, dims: Dims) -> float:
        """``eps+ s+^2 gamma+^G``."""
        return self.eps_plus * self.s_plus**2 * self.gamma_plus**dims.gamma_exponent


def compute_budget(
    dims: Dims,
    *,
    r: float,
    s: float,
    gamma: float,
    eps: float,
    tau: float,
    r0: float,
    gamma0: float,
    step: int = 0,
) -> StepBudget:
    """All constants of one step from its ``(r, s, gamma, eps)``.

    Raises:
        ValueError: A constant leaves ``(0, 1)`` or ``r <= r0 / 2``
    """
    for name, value in (("r", r), ("s", s), ("gamma", gamma), ("eps", eps)):
        if not 0.0 < value < 1.0:
            msg = f"{name} must lie in (0, 1), got {value}"
            raise ValueError(msg)
    r_plus = r / 2 + r0 / 4
    if r_plus >= r:
        msg = f"strip width r={r} must exceed r0/2={r0 / 2}"
        raise ValueError(msg)
    alpha = eps ** (1.0 / 3.0)
    K_plus = nominal_cutoff(eps)  # noqa: N806
    K_eff = effective_cutoff(dims.n, eps, r, r_plus, K_plus)  # noqa: N806
    log_gamma, big_gamma = gamma_sum(dims, tau, r, r_plus, K_eff)
    budget = StepBudget(
        step=step,
        r=r,
        s=s,
        gamma=gamma,
        eps=eps,
        tau=tau,
        r0=r0,
        gamma0=gamma0,
        K_plus=K_plus,
        K_eff=K_eff,
        r_plus=r_plus,
        s_plus=alpha * s / 8.0,
        gamma_plus=gamma / 2 + gamma0 / 4,
        eps_plus=eps ** (10.0 / 9.0),
        alpha=alpha,
        log_Gamma=log_gamma,
        Gamma=big_gamma,
    )
    logger.debug(
        "step %d budget: eps=%.3e K+=%d K_eff=%d log Gamma=%.2f", step, eps, K_plus, K_eff, log_gamma
    )
    return budget


def initial_budget(
    dims: Dims, *, r0: float, s0: float, gamma0: float, eps0: float, tau: float
) -> StepBudget:
    return compute_budget(
        dims, r=r0, s=s0, gamma=gamma0, eps=eps0, tau=tau, r0=r0, gamma0=gamma0, step=0
    )


def next_budget(dims: Dims, budget: StepBudget) -> StepBudget:
    """Budget of the following step."""
    return compute_budget(
        dims,
        r=budget.r_plus,
        s=budget.s_plus,
        gamma=budget.gamma_plus,
        eps=budget.eps_plus,
        tau=budget.tau,
        r0=budget.r0,
        gamma0=budget.gamma0,
        step=budget.step + 1,
    )


# ---------------------------------------------------------------------------
# Lattice enumeration
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def lattice_ball(dim: int, radius: int) -> NDArray[np.int64]:
    """All integer vectors of length ``dim`` with l1 norm ``<= radius`` (read-only)."""
    if dim == 0:
        out = np.zeros((1, 0), dtype=np.int64)
    else:
        parts = []
        for first in range(-radius, radius + 1):
            rest = lattice_ball(dim - 1, radius - abs(first))
            head = np.full((rest.shape[0], 1), first, dtype=np.int64)
            parts.append(np.hstack([head, rest]))
        out = np.concatenate(parts)
    out.setflags(write=False)
    return out


def fourier_modes(n: int, K: int, *, half: bool = False) -> NDArray[np.int64]:  # noqa: N803
    """Nonzero ``k`` with ``|k|_1 <= K``; ``half`` keeps those whose first nonzero entry is positive."""
    ball = lattice_ball(n, K)
    nonzero = (ball != 0).any(axis=1)
    modes = ball[nonzero]
    if half:
        first = modes[np.arange(modes.shape[0]), np.argmax(modes != 0, axis=1)]
        modes = modes[first > 0]
    return modes


def normal_combinations(m: int) -> NDArray[np.int64]:
    """``l`` in ``Z^{2m}`` with ``sum |l_j| <= 2``, signs included."""
    return lattice_ball(2 * m, 2)


# ---------------------------------------------------------------------------
# Melnikov scans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DivisorEntry:
    k: tuple[int, ...]
    l: tuple[int, ...]  # noqa: E741
    margin: float
    threshold: float


@dataclass(frozen=True)
class MelnikovCertificate:
    """Every divisor ``|i<k, omega> + <l, Omega>|`` of a scan and its floor ``gamma/|k|^tau``."""

    lam: tuple[float, ...] | None
    gamma: float
    tau: float
    K: int
    ks: NDArray[np.int64]
    ls: NDArray[np.int64]
    margins: NDArray[np.float64]
    """Shape ``(len(ks), len(ls))``."""

    @property
    def thresholds(self) -> NDArray[np.float64]:
        return self.gamma / np.abs(self.ks).sum(axis=1).astype(float) ** self.tau

    @property
    def passed(self) -> bool:
        return bool((self.margins > self.thresholds[:, None]).all())

    @property
    def entry_count(self) -> int:
        return int(self.margins.size)

    def entries(self) -> Iterator[DivisorEntry]:
        thresholds = self.thresholds
        for i, j in itertools.product(range(self.ks.shape[0]), range(self.ls.shape[0])):
            yield DivisorEntry(
                tuple(self.ks[i].tolist()),
                tuple(self.ls[j].tolist()),
                float(self.margins[i, j]),
                float(thresholds[i]),
            )

    def worst(self) -> DivisorEntry:
        """The entry with the smallest ``margin / threshold``."""
        thresholds = self.thresholds
        ratios = self.margins / thresholds[:, None]
        i, j = np.unravel_index(int(np.argmin(ratios)), ratios.shape)
        return DivisorEntry(
            tuple(self.ks[i].tolist()),
            tuple(self.ls[j].tolist()),
            float(self.margins[i, j]),
            float(thresholds[i]),
        )

    def failures(self) -> list[DivisorEntry]:
        return [entry for entry in self.entries() if entry.margin <= entry.threshold]


def divisor_margins(
    omega: ArrayLike, Omega: ArrayLike, ks: NDArray[np.int64], ls: NDArray[np.int64]  # noqa: N803
) -> NDArray[np.float64]:
    phase = ks @ np.asarray(omega, dtype=float)
    normal = ls @ np.asarray(Omega, dtype=np.complex128) if ls.shape[1] else np.zeros(ls.shape[0])
    return np.abs(1j * phase[:, None] + normal[None, :])


def melnikov_scan(
    N: NormalForm,  # noqa: N803
    spectrum: Spectrum | None,
    gamma: float,
    tau: float,
    K: int,  # noqa: N803
    *,
    half: bool = False,
    lam: Sequence[float] | None = None,
) -> MelnikovCertificate:
    """Enumerate ``0 < |k| <= K``, ``|l| <= 2`` and record every Melnikov margin.

    With ``half`` only one of each ``+-k`` pair is scanned; since
    ``margin(-k, -l) == margin(k, l)`` and the ``l`` set is symmetric, the
    verdict and the worst entry coincide with the full scan.
    """
    if K < 1:
        msg = f"cutoff must be >= 1, got {K}"
        raise ValueError(msg)
    spectrum = spectrum if spectrum is not None else N.spectrum
    ks = fourier_modes(N.dims.n, K, half=half)
    ls = normal_combinations(N.dims.m)
    margins = divisor_margins(N.omega, spectrum.Omega, ks, ls)
    point = tuple(float(v) for v in lam) if lam is not None else None
    return MelnikovCertificate(point, gamma, tau, K, ks, ls, margins)


# ---------------------------------------------------------------------------
# Grid sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepResult:
    """Per-grid-point membership in the non-resonant set for one ``gamma``."""

    gamma: float
    tau: float
    K: int
    points: NDArray[np.float64]
    passed: NDArray[np.bool_]
    worst_margin: NDArray[np.float64]
    worst_k: NDArray[np.int64]
    worst_l: NDArray[np.int64]

    @property
    def excluded_fraction(self) -> float:
        return float(1.0 - self.passed.mean()) if self.passed.size else 0.0


def _scan_chunk(
    payload: tuple[NDArray[np.float64], NDArray[np.complex128]],
    *,
    ks: NDArray[np.int64],
    ls: NDArray[np.int64],
    thresholds: NDArray[np.float64],
) -> tuple[NDArray[np.bool_], NDArray[np.float64], NDArray[np.int64], NDArray[np.int64]]:
    omegas, spectra = payload
    count = omegas.shape[0]
    passed = np.zeros(count, dtype=bool)
    worst_margin = np.zeros(count)
    worst_k = np.zeros((count, ks.shape[1]), dtype=np.int64)
    worst_l = np.zeros((count, ls.shape[1]), dtype=np.int64)
    for p in range(count):
        margins = divisor_margins(omegas[p], spectra[p], ks, ls)
        ratios = margins / thresholds[:, None]
        i, j = np.unravel_index(int(np.argmin(ratios)), ratios.shape)
        passed[p] = ratios[i, j] > 1.0
        worst_margin[p] = margins[i, j]
        worst_k[p] = ks[i]
        worst_l[p] = ls[j]
    return passed, worst_margin, worst_k, worst_l


def normal_spectra(nf_map: NormalFormMap, ys: ArrayLike) -> NDArray[np.complex128]:
    """Eigenvalues of ``J M(y)`` for a stack of action points, shape ``(P, 2m)``."""
    mats = nf_map.M(np.asarray(ys, dtype=float).reshape(-1, nf_map.dims.n))
    if not nf_map.dims.m:
        return np.zeros((mats.shape[0], 0), dtype=np.complex128)
    return np.linalg.eigvals(symplectic_matrix(nf_map.dims.m)[None, :, :] @ mats).astype(
        np.complex128
    )


def scan_actions(
    nf_map: NormalFormMap,
    ys: ArrayLike,
    gamma: float,
    tau: float,
    K: int,  # noqa: N803
    *,
    workers: int = 1,
) -> tuple[NDArray[np.bool_], NDArray[np.float64], NDArray[np.int64], NDArray[np.int64]]:
    """Half-lattice Melnikov scan at many action points.

    Returns:
        Tuple of (pass bits, worst margins, worst k, worst l), one row per point
    """
    pts = np.asarray(ys, dtype=float).reshape(-1, nf_map.dims.n)
    omegas = nf_map.omega(pts).reshape(pts.shape[0], nf_map.dims.n)
    spectra = normal_spectra(nf_map, pts)
    ks = fourier_modes(nf_map.dims.n, K, half=True)
    ls = normal_combinations(nf_map.dims.m)
    thresholds = gamma / np.abs(ks).sum(axis=1).astype(float) ** tau
    worker = partial(_scan_chunk, ks=ks, ls=ls, thresholds=thresholds)
    if workers > 1 and pts.shape[0] > workers:
        bounds = np.array_split(np.arange(pts.shape[0]), workers)
        chunks = [(omegas[idx], spectra[idx]) for idx in bounds]
        with Pool(workers) as pool:
            results = pool.map(worker, chunks)
        return (
            np.concatenate([r[0] for r in results]),
            np.concatenate([r[1] for r in results]),
            np.concatenate([r[2] for r in results]),
            np.concatenate([r[3] for r in results]),
        )
    return worker((omegas, spectra))


def surviving_set_sweep(
    chart: ParamChart,
    nf_map: NormalFormMap,
    gamma: float,
    tau: float,
    K: int,  # noqa: N803
    *,
    resolution: int | None = None,
    workers: int = 1,
) -> SweepResult:
    """Melnikov scan at every grid point of the chart."""
    points = chart.grid_points(resolution)
    passed, worst_margin, worst_k, worst_l = scan_actions(
        nf_map, chart.y(points), gamma, tau, K, workers=workers
    )
    result = SweepResult(gamma, tau, K, points, passed, worst_margin, worst_k, worst_l)
    logger.info(
        "sweep gamma=%.1e K=%d: %d points, excluded fraction %.4f",
        gamma,
        K,
        points.shape[0],
        result.excluded_fraction,
    )
    return result


def resonance_zone(
    chart: ParamChart,
    nf_map: NormalFormMap,
    k: Sequence[int],
    l: Sequence[int],  # noqa: E741
    gamma: float,
    tau: float,
    *,
    resolution: int | None = None,
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Grid points where the single divisor ``(k, l)`` is at or below its floor.

    Returns:
        Tuple of (grid points, failing mask)
    """
    points = chart.grid_points(resolution)
    ys = chart.y(points)
    omegas = nf_map.omega(ys).reshape(points.shape[0], nf_map.dims.n)
    spectra = normal_spectra(nf_map, ys)
    kv = np.asarray(k, dtype=float)
    lv = np.asarray(l, dtype=float)
    margins = np.abs(1j * (omegas @ kv) + (spectra @ lv if lv.size else 0.0))
    threshold = gamma / float(np.abs(kv).sum()) ** tau
    return points, margins <= threshold


@dataclass(frozen=True)
class ExtensionSweep:
    """Sweep of a sub-manifold chart thickened by auxiliary action parameters."""

    axes: tuple[int, ...]
    """Action axes the auxiliary parameters move along."""
    offsets: NDArray[np.float64]
    """Auxiliary parameter values per slice, shape ``(slices, n - n0)``."""
    fractions: NDArray[np.float64]
    """Excluded fraction per slice."""

    @property
    def mean_fraction(self) -> float:
        return float(self.fractions.mean()) if self.fractions.size else 0.0


def _complement_axes(chart: ParamChart, nf_map: NormalFormMap) -> tuple[int, ...]:
    n, n0 = nf_map.dims.n, chart.n0
    if n0 >= n:
        return ()

    def y_of(points: NDArray[np.float64]) -> NDArray[np.float64]:
        return chart.y(points).reshape(points.shape[0], n)

    step = 1e-3 * max(1.0, float(np.abs(chart.upper).max()))
    _, columns = finite_difference_partials(y_of, chart.center, 1, step)
    tangent = columns[:, 1:]
    best: tuple[int, ...] = ()
    best_value = -1.0
    for axes in itertools.combinations(range(n), n - n0):
        frame = np.hstack([tangent, np.eye(n)[:, axes]])
        value = abs(float(np.linalg.det(frame)))
        if value > best_value * (1.0 + 1e-12):
            best, best_value = axes, value
    return best


def chart_extension_sweep(
    chart: ParamChart,
    nf_map: NormalFormMap,
    gamma: float,
    tau: float,
    K: int,  # noqa: N803
    *,
    resolution: int | None = None,
    extension_resolution: int = 5,
    workers: int = 1,
) -> ExtensionSweep:
    """Excluded fraction of the chart thickened to a full-dimensional family.

    The ``n - n0`` auxiliary parameters shift ``y`` by ``t - 1``, ``t`` in ``[1, 2]``,
    along the coordinate axes most transverse to the chart. The mean over slices
    is the grid form of integrating the slice measures.
    """
    axes = _complement_axes(chart, nf_map)
    points = chart.grid_points(resolution)
    base = chart.y(points).reshape(points.shape[0], nf_map.dims.n)
    if not axes:
        result = surviving_set_sweep(
            chart, nf_map, gamma, tau, K, resolution=resolution, workers=workers
        )
        return ExtensionSweep((), np.zeros((1, 0)), np.array([result.excluded_fraction]))
    grid = np.linspace(1.0, 2.0, extension_resolution)
    offsets = np.array(list(itertools.product(grid, repeat=len(axes))))
    fractions = np.zeros(offsets.shape[0])
    for row, t in enumerate(offsets):
        shifted = base.copy()
        shifted[:, list(axes)] += t - 1.0
        passed, *_ = scan_actions(nf_map, shifted, gamma, tau, K, workers=workers)
        fractions[row] = 1.0 - passed.mean()
    return ExtensionSweep(axes, offsets, fractions)


@dataclass(frozen=True)
class MeasureFit:
    """Fit of excluded fractions against ``gamma``."""

    exponent: float
    """Expected power ``1/(n-1)`` (``1`` when ``n = 1``)."""
    slope: float
    """Least-squares log-log slope over the nonzero fractions (``nan`` if fewer than two)."""
    C: float
    """Smallest ``C`` with ``fraction <= C * gamma**exponent`` on every rung."""
    monotone: bool
    """Fractions do not increase as ``gamma`` decreases."""


def fit_measure_scaling(gammas: Sequence[float], fractions: Sequence[float], n: int) -> MeasureFit:
    g = np.asarray(gammas, dtype=float)
    f = np.asarray(fractions, dtype=float)
    if g.shape != f.shape or g.size == 0:
        msg = "gamma ladder and fractions must be nonempty and of equal length"
        raise ValueError(msg)
    exponent = 1.0 / (n - 1) if n > 1 else 1.0
    order = np.argsort(g)[::-1]
    monotone = bool((np.diff(f[order]) <= 0.0).all())
    positive = f > 0.0
    if positive.sum() >= 2:
        slope = float(np.polyfit(np.log(g[positive]), np.log(f[positive]), 1)[0])
    else:
        slope = math.nan
    C = float((f / g**exponent).max())  # noqa: N806
    return MeasureFit(exponent, slope, C, monotone)


# ---------------------------------------------------------------------------
# sigma and the Melnikov cutoff
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SigmaEstimate:
    sigma: float
    """Smallest directional-derivative pairing over the grid."""
    K: float
    """``(4n/sigma) * max |d^r Omega|``."""
    omega_derivative_max: float
    """``max_{i, |r| <= n-1} |d^r Omega_i|`` over the grid."""
    lam_at_min: tuple[float, ...]


def melnikov_cutoff(n: int, sigma: float, omega_derivative_max: float) -> float:
    """``K = (4n / sigma) * max |d^r Omega_i|``."""
    if sigma <= 0.0:
        return math.inf
    return 4.0 * n / sigma * omega_derivative_max


def pairing_directions(n: int) -> NDArray[np.float64]:
    """Axis directions plus normalized ``+-1`` diagonals, one per sign class."""
    rows = []
    for signs in itertools.product((-1, 0, 1), repeat=n):
        v = np.array(signs, dtype=float)
        nonzero = np.flatnonzero(v)
        if nonzero.size and v[nonzero[0]] > 0:
            rows.append(v / np.linalg.norm(v))
    return np.array(rows)


def estimate_sigma_and_K(  # noqa: N802
    chart: ParamChart,
    nf_map: NormalFormMap,
    *,
    resolution: int = 21,
    h: float = 1e-2,
) -> SigmaEstimate:
    """Estimate ``sigma`` and the cutoff ``K`` on an interior grid of the chart."""
    n = nf_map.dims.n
    order = n - 1
    margin = order * h
    lower = np.array(chart.lower) + margin
    upper = np.array(chart.upper) - margin
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(lower, upper, strict=True)]
    points = np.stack([a.reshape(-1) for a in np.meshgrid(*axes, indexing="ij")], axis=1)
    directions = pairing_directions(n)
    m2 = nf_map.dims.normal

    def omega_on_chart(pts: NDArray[np.float64]) -> NDArray[np.float64]:
        return nf_map.omega(chart.y(pts)).reshape(pts.shape[0], n)

    def spectrum_on_chart(pts: NDArray[np.float64]) -> NDArray[np.float64]:
        mats = nf_map.M(chart.y(pts)).reshape(pts.shape[0], m2, m2)
        values = np.array([eigenvalues_of_JM(mat).Omega for mat in mats])
        return np.hstack([values.real, values.imag])

    sigma = math.inf
    at_min: tuple[float, ...] = tuple(points[0].tolist())
    omega_max = 0.0
    for lam in points:
        _, columns = finite_difference_partials(omega_on_chart, lam, order, h)
        pairing = float(np.abs(directions @ columns).max(axis=1).min())
        if pairing < sigma:
            sigma, at_min = pairing, tuple(lam.tolist())
        if m2:
            _, spec_columns = finite_difference_partials(spectrum_on_chart, lam, order, h)
            magnitudes = np.hypot(spec_columns[:m2], spec_columns[m2:])
            omega_max = max(omega_max, float(magnitudes.max()))
    count = len(derivative_orders(chart.n0, order))
    logger.debug("sigma=%.3e over %d points and %d partials", sigma, points.shape[0], count)
    return SigmaEstimate(sigma, melnikov_cutoff(n, sigma, omega_max), omega_max, at_min)
