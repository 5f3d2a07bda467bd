"""Normal-form data, chart pullback and the non-degeneracy checkers.

An integrable Hamiltonian ``N(y, u)`` restricted to a parameter chart
``lam -> y(lam)`` is expanded around ``(y(lam), 0)`` into the normal form
``e + <omega, y> + 1/2 <A y, y> + 1/2 <M u, u>``; everything of higher order
moves into the perturbation.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import TYPE_CHECKING, Literal

import numpy as np
from scipy import linalg
from scipy.special import comb

from subtori.errors import (
    ChartDomainError,
    ConditionError,
    DimensionMismatchError,
    SingularNormalFormError,
)
from subtori.series import (
    Dims,
    FTSeries,
    NormWeights,
    constant,
    evaluate_many,
    linear_form,
    partial_derivative,
    quadratic_form,
    shift_actions,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import ArrayLike, NDArray

    from subtori.polynomials import PolynomialMap

logger = logging.getLogger(__name__)

SpectrumClass = Literal["elliptic", "hyperbolic", "mixed", "none"]

SYMMETRY_TOL = 1e-12
RANK_RTOL = 1e-8
SINGULAR_TOL = 1e-12


def symplectic_matrix(m: int) -> NDArray[np.float64]:
    """Block-diagonal ``J`` with blocks ``[[0, 1], [-1, 0]]`` on ``(u_j, v_j)``."""
    block = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return np.kron(np.eye(m), block) if m else np.zeros((0, 0))


def _frozen(values: ArrayLike, shape: tuple[int, ...], name: str) -> NDArray[np.float64]:
    array = np.array(values, dtype=float)
    if array.size != math.prod(shape) or (array.ndim > 1 and array.shape != shape):
        msg = f"{name} has shape {array.shape}, expected {shape}"
        raise DimensionMismatchError(msg)
    array = array.reshape(shape)
    array.setflags(write=False)
    return array


def _check_symmetric(matrix: NDArray[np.float64], name: str) -> None:
    if matrix.size and np.abs(matrix - matrix.T).max() > SYMMETRY_TOL * max(
        1.0, float(np.abs(matrix).max())
    ):
        msg = f"{name} is not symmetric"
        raise ValueError(msg)


# ---------------------------------------------------------------------------
# Spectrum
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues ``Omega_j`` of ``J M``, sorted by real then imaginary part."""

    Omega: NDArray[np.complex128]

    def classify(self, tol: float = 1e-10) -> SpectrumClass:
        return classify_spectrum(self, tol)

    @property
    def gap(self) -> float:
        return normal_gap(self)

    def __len__(self) -> int:
        return int(self.Omega.shape[0])


def eigenvalues_of_JM(M: ArrayLike) -> Spectrum:  # noqa: N802
    """Spectrum of ``J M`` for a symmetric ``2m x 2m`` matrix ``M``.

    Real and imaginary parts below ``1e-12`` times the spectral scale are snapped
    to zero so elliptic and hyperbolic blocks classify exactly.
    """
    mat = np.asarray(M, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] % 2:
        msg = f"M must be a square matrix of even size, got shape {mat.shape}"
        raise DimensionMismatchError(msg)
    _check_symmetric(mat, "M")
    if mat.shape[0] == 0:
        return Spectrum(np.zeros(0, dtype=np.complex128))
    values = linalg.eigvals(symplectic_matrix(mat.shape[0] // 2) @ mat)
    scale = max(1.0, float(np.abs(values).max()))
    re = np.where(np.abs(values.real) < 1e-12 * scale, 0.0, values.real)
    im = np.where(np.abs(values.imag) < 1e-12 * scale, 0.0, values.imag)
    order = np.lexsort((im, re))
    return Spectrum((re + 1j * im)[order])


def classify_spectrum(spectrum: Spectrum, tol: float = 1e-10) -> SpectrumClass:
    """Elliptic (all imaginary), hyperbolic (all real) or mixed."""
    omega = spectrum.Omega
    if omega.shape[0] == 0:
        return "none"
    if (np.abs(omega.real) <= tol).all():
        return "elliptic"
    if (np.abs(omega.imag) <= tol).all():
        return "hyperbolic"
    return "mixed"


def normal_gap(spectrum: Spectrum) -> float:
    """``min_j |Omega_j|``; infinite when there are no normal directions."""
    if spectrum.Omega.shape[0] == 0:
        return math.inf
    return float(np.abs(spectrum.Omega).min())


# ---------------------------------------------------------------------------
# Normal form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalForm:
    """``e + <omega, y> + 1/2 <A y, y> + 1/2 <M u, u>`` with a principal minor of ``A``."""

    dims: Dims
    """Phase-space dimensions."""

    e: float
    """Energy offset."""

    omega: NDArray[np.float64]
    """Tangent frequencies (length n)."""

    A: NDArray[np.float64]
    """Symmetric action Hessian (n x n)."""

    M: NDArray[np.float64]
    """Symmetric normal Hessian (2m x 2m)."""

    minor_indices: tuple[int, ...] = ()
    """Sorted 0-based rows/columns of the nonsingular principal minor of ``A``."""

    def __post_init__(self) -> None:
        n, normal = self.dims.n, self.dims.normal
        object.__setattr__(self, "e", float(self.e))
        object.__setattr__(self, "omega", _frozen(self.omega, (n,), "omega"))
        object.__setattr__(self, "A", _frozen(self.A, (n, n), "A"))
        object.__setattr__(self, "M", _frozen(self.M, (normal, normal), "M"))
        _check_symmetric(self.A, "A")
        _check_symmetric(self.M, "M")
        minor = tuple(int(i) for i in self.minor_indices)
        if list(minor) != sorted(set(minor)) or any(not 0 <= i < n for i in minor):
            msg = f"minor indices {minor} must be sorted, unique and below {n}"
            raise ValueError(msg)
        object.__setattr__(self, "minor_indices", minor)
        if minor:
            sub = self.A_minor
            scale = max(1.0, float(np.abs(sub).max())) ** len(minor)
            if abs(float(np.linalg.det(sub))) <= SINGULAR_TOL * scale:
                msg = f"principal minor {minor} of A is singular"
                raise SingularNormalFormError(msg)
        if self.dims.m and self.spectrum.gap <= SINGULAR_TOL:
            msg = f"M is singular: min |Omega| = {self.spectrum.gap:.3e}"
            raise SingularNormalFormError(msg)

    @property
    def d(self) -> int:
        """Size of the principal minor."""
        return len(self.minor_indices)

    @property
    def A_minor(self) -> NDArray[np.float64]:  # noqa: N802
        idx = np.array(self.minor_indices, dtype=int)
        return self.A[np.ix_(idx, idx)]

    @property
    def omega_minor(self) -> NDArray[np.float64]:
        return self.omega[np.array(self.minor_indices, dtype=int)]

    @cached_property
    def spectrum(self) -> Spectrum:
        return eigenvalues_of_JM(self.M)

    def to_series(self) -> FTSeries:
        series = constant(self.dims, self.e) + linear_form(self.dims, "y", self.omega)
        series = series + quadratic_form(self.dims, "y", self.A)
        if self.dims.m:
            series = series + quadratic_form(self.dims, "u", self.M)
        return series

    def updated(self, **changes: object) -> NormalForm:
        """Copy with some fields replaced (validation runs again)."""
        return replace(self, **changes)  # type: ignore[arg-type]


@dataclass(frozen=True)
class ModelHamiltonian:
    """``H = N + I + P`` together with the weights of the current domain ``D(r, s)``.

    ``I`` holds the angle-independent, ``u``-free terms of degree >= 3. They
    Poisson-commute with ``N`` and stay out of the size of ``P``.
    """

    N: NormalForm
    P: FTSeries
    weights: NormWeights
    integrable: FTSeries | None = None

    def __post_init__(self) -> None:
        if self.P.dims != self.N.dims:
            msg = f"perturbation dims {self.P.dims} differ from normal form dims {self.N.dims}"
            raise DimensionMismatchError(msg)
        if self.integrable is not None and self.integrable.dims != self.N.dims:
            msg = f"integrable part dims {self.integrable.dims} differ from {self.N.dims}"
            raise DimensionMismatchError(msg)

    @property
    def dims(self) -> Dims:
        return self.N.dims

    @property
    def hamiltonian(self) -> FTSeries:
        series = self.N.to_series() + self.P
        return series if self.integrable is None else series + self.integrable

    def split_integrable(self) -> ModelHamiltonian:
        """Move the integrable terms of ``P`` into ``I``."""
        moved, rest = integrable_part(self.P)
        if not moved:
            return self
        total = moved if self.integrable is None else self.integrable + moved
        return replace(self, P=rest, integrable=total)


def integrable_part(P: FTSeries) -> tuple[FTSeries, FTSeries]:  # noqa: N803
    """Split ``P`` into its ``k = 0``, ``p = 0``, degree >= 3 terms and the rest."""
    mask = (P.k == 0).all(axis=1) & (P.p == 0).all(axis=1) & (P.degrees >= 3)
    return P.select(mask), P.select(~mask)


# ---------------------------------------------------------------------------
# Charts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamChart:
    """A box ``Lambda`` in ``R^{n0}`` with a polynomial map ``lam -> y(lam)``."""

    lower: tuple[float, ...]
    """Lower corner of the parameter box."""

    upper: tuple[float, ...]
    """Upper corner of the parameter box."""

    map: PolynomialMap
    """Polynomial map from the box to the action space."""

    grid: int = 101
    """Sampling resolution per axis."""

    def __post_init__(self) -> None:
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if len(self.lower) != self.map.n0 or len(self.upper) != self.map.n0:
            msg = f"domain box must have {self.map.n0} bounds per side"
            raise DimensionMismatchError(msg)
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper, strict=True)):
            msg = f"empty domain box {self.lower} .. {self.upper}"
            raise ValueError(msg)
        if self.grid < 2:
            msg = f"grid resolution must be >= 2, got {self.grid}"
            raise ValueError(msg)

    @property
    def n0(self) -> int:
        return self.map.n0

    @property
    def n(self) -> int:
        return self.map.dimension

    @property
    def center(self) -> NDArray[np.float64]:
        return 0.5 * (np.array(self.lower) + np.array(self.upper))

    def contains(self, lam: ArrayLike) -> bool:
        point = np.asarray(lam, dtype=float).reshape(-1)
        return point.shape[0] == self.n0 and bool(
            (point >= np.array(self.lower)).all() and (point <= np.array(self.upper)).all()
        )

    def interior(self, lam: ArrayLike, margin: float) -> bool:
        """Whether ``lam`` is at least ``margin`` away from every face of the box."""
        point = np.asarray(lam, dtype=float).reshape(-1)
        return point.shape[0] == self.n0 and bool(
            (point - np.array(self.lower) >= margin).all()
            and (np.array(self.upper) - point >= margin).all()
        )

    def require(self, lam: ArrayLike) -> NDArray[np.float64]:
        point = np.asarray(lam, dtype=float).reshape(-1)
        if not self.contains(point):
            msg = f"parameter {point.tolist()} outside the chart box {self.lower} .. {self.upper}"
            raise ChartDomainError(msg)
        return point

    def grid_points(self, resolution: int | None = None) -> NDArray[np.float64]:
        """Tensor grid over the box, shape ``(resolution**n0, n0)``."""
        count = resolution or self.grid
        axes = [np.linspace(lo, hi, count) for lo, hi in zip(self.lower, self.upper, strict=True)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([axis.reshape(-1) for axis in mesh], axis=1)

    def y(self, lam: ArrayLike) -> NDArray[np.float64]:
        return self.map(lam)


class NormalFormMap:
    """Vectorized ``(e, omega, A, M)`` of an integrable ``N(y, u)`` along ``u = 0``.

    Derivative series are built once; evaluation at many action points is a
    single matrix product per entry.
    """

    def __init__(self, N_full: FTSeries) -> None:  # noqa: N803
        if (N_full.k != 0).any():
            msg = "integrable Hamiltonian must not depend on the angles"
            raise ValueError(msg)
        dims = N_full.dims
        self.dims = dims
        self.series = N_full
        self._omega = [partial_derivative(N_full, "y", j) for j in range(dims.n)]
        self._A = [[partial_derivative(w, "y", j) for j in range(dims.n)] for w in self._omega]
        self._Nu = [partial_derivative(N_full, "u", a) for a in range(dims.normal)]
        self._M = [[partial_derivative(g, "u", b) for b in range(dims.normal)] for g in self._Nu]

    def _points(self, ys: ArrayLike) -> tuple[NDArray[np.float64], bool]:
        pts = np.asarray(ys, dtype=float)
        single = pts.ndim == 1
        pts = pts.reshape(-1, self.dims.n)
        return pts, single

    def _values(self, series: FTSeries, pts: NDArray[np.float64]) -> NDArray[np.float64]:
        zeros_x = np.zeros_like(pts)
        zeros_u = np.zeros((pts.shape[0], self.dims.normal))
        return evaluate_many(series, zeros_x, pts, zeros_u).real

    def energy(self, ys: ArrayLike) -> NDArray[np.float64]:
        pts, single = self._points(ys)
        out = self._values(self.series, pts)
        return out[0] if single else out

    def omega(self, ys: ArrayLike) -> NDArray[np.float64]:
        pts, single = self._points(ys)
        out = np.stack([self._values(w, pts) for w in self._omega], axis=-1)
        return out[0] if single else out

    def A(self, ys: ArrayLike) -> NDArray[np.float64]:  # noqa: N802
        pts, single = self._points(ys)
        out = np.stack(
            [np.stack([self._values(a, pts) for a in row], axis=-1) for row in self._A], axis=-2
        )
        return out[0] if single else out

    def M(self, ys: ArrayLike) -> NDArray[np.float64]:  # noqa: N802
        pts, single = self._points(ys)
        normal = self.dims.normal
        if not normal:
            out = np.zeros((pts.shape[0], 0, 0))
        else:
            out = np.stack(
                [np.stack([self._values(a, pts) for a in row], axis=-1) for row in self._M],
                axis=-2,
            )
        return out[0] if single else out

    def normal_gradient(self, ys: ArrayLike) -> NDArray[np.float64]:
        """``N_u(y, 0)``, which must vanish for the torus ``u = 0`` to be invariant."""
        pts, single = self._points(ys)
        if not self.dims.normal:
            out = np.zeros((pts.shape[0], 0))
        else:
            out = np.stack([self._values(g, pts) for g in self._Nu], axis=-1)
        return out[0] if single else out


# ---------------------------------------------------------------------------
# Condition checkers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionCheck:
    """Outcome of one non-degeneracy check with its measured quantity."""

    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


@dataclass(frozen=True)
class RankCheck:
    """Numerical rank of the frequency-derivative matrix at one parameter."""

    rank: int
    singular_values: NDArray[np.float64]
    required: int
    columns: NDArray[np.float64] = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.rank >= self.required


def numerical_rank(matrix: ArrayLike, rtol: float = RANK_RTOL) -> int:
    """Singular values ``>= rtol * largest`` count toward the rank."""
    mat = np.atleast_2d(np.asarray(matrix, dtype=float))
    if mat.size == 0:
        return 0
    values = linalg.svdvals(mat)
    if values[0] == 0.0:
        return 0
    return int((values >= rtol * values[0]).sum())


def check_A0(N_full: FTSeries, y: ArrayLike, tol: float = 1e-10) -> ConditionCheck:  # noqa: N802, N803
    """``N_u(y, 0) = 0`` and ``det N_uu(y, 0) != 0`` at one action point."""
    nf_map = NormalFormMap(N_full)
    point = np.asarray(y, dtype=float).reshape(-1)
    if N_full.dims.m == 0:
        return ConditionCheck("A0", True, 1.0, tol, "no normal directions")
    residual = float(np.abs(nf_map.normal_gradient(point)).max())
    det = abs(float(np.linalg.det(nf_map.M(point))))
    passed = residual <= tol and det > tol
    detail = f"|N_u(y,0)| = {residual:.3e}"
    return ConditionCheck("A0", passed, det, tol, detail)


def _stencil(order: int, h: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    i = np.arange(order + 1)
    offsets = (order / 2.0 - i) * h
    weights = (-1.0) ** i * comb(order, i) / h**order
    return offsets, weights


def derivative_orders(n0: int, order: int) -> list[tuple[int, ...]]:
    """Multi-indices ``alpha`` of length ``n0`` with ``|alpha| <= order``, graded."""
    out: list[tuple[int, ...]] = []
    for total in range(order + 1):
        out.extend(
            alpha
            for alpha in itertools.product(range(total + 1), repeat=n0)
            if sum(alpha) == total
        )
    return out


def finite_difference_partials(
    func: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    lam: ArrayLike,
    order: int,
    h: float,
) -> tuple[list[tuple[int, ...]], NDArray[np.float64]]:
    """Central-difference partials ``d^alpha func(lam)`` for all ``|alpha| <= order``.

    Args:
        func: Vectorized map ``(P, n0) -> (P, n)``
        lam: Base point of length ``n0``
        order: Highest total derivative order
        h: Step size

    Returns:
        Tuple of (multi-indices, matrix with one column per multi-index)
    """
    point = np.asarray(lam, dtype=float).reshape(-1)
    orders = derivative_orders(point.shape[0], order)
    columns = []
    for alpha in orders:
        stencils = [_stencil(a, h) for a in alpha]
        offsets = np.stack(
            [axis.reshape(-1) for axis in np.meshgrid(*[s[0] for s in stencils], indexing="ij")],
            axis=1,
        )
        weights = np.ones(offsets.shape[0])
        for axis in np.meshgrid(*[s[1] for s in stencils], indexing="ij"):
            weights = weights * axis.reshape(-1)
        values = func(point[None, :] + offsets)
        columns.append(weights @ values)
    return orders, np.stack(columns, axis=1)


def check_A1_rank(  # noqa: N802
    chart: ParamChart,
    nf_map: NormalFormMap,
    lam: ArrayLike,
    order: int | None = None,
    h: float = 1e-2,
) -> RankCheck:
    """Rank of ``{d^alpha omega(y(lam)) : |alpha| <= order}`` (order defaults to ``n - 1``).

    Raises:
        ChartDomainError: ``lam`` is closer than ``(n - 1) h`` to the box boundary
    """
    n = nf_map.dims.n
    order = n - 1 if order is None else order
    point = chart.require(lam)
    if not chart.interior(point, order * h):
        msg = f"parameter {point.tolist()} closer than {order * h:g} to the chart boundary"
        raise ChartDomainError(msg)

    def omega_on_chart(points: NDArray[np.float64]) -> NDArray[np.float64]:
        return nf_map.omega(chart.y(points)).reshape(points.shape[0], n)

    _, columns = finite_difference_partials(omega_on_chart, point, order, h)
    values = linalg.svdvals(columns) if columns.size else np.zeros(0)
    return RankCheck(numerical_rank(columns), values, n, columns)


def bordered_determinant(A_minor: ArrayLike, omega_minor: ArrayLike) -> float:  # noqa: N803
    """``det [[A~, w], [w^T, 0]]``."""
    sub = np.atleast_2d(np.asarray(A_minor, dtype=float))
    w = np.asarray(omega_minor, dtype=float).reshape(-1)
    d = w.shape[0]
    bordered = np.zeros((d + 1, d + 1))
    bordered[:d, :d] = sub.reshape(d, d)
    bordered[:d, d] = w
    bordered[d, :d] = w
    return float(np.linalg.det(bordered))


def check_A1_doubleprime(N: NormalForm, tol: float = 1e-10) -> ConditionCheck:  # noqa: N802, N803
    """Sub-isoenergetic non-degeneracy: the bordered minor determinant is nonzero."""
    det = bordered_determinant(N.A_minor, N.omega_minor)
    return ConditionCheck("A1''", abs(det) > tol, det, tol)


def select_principal_minor(A: ArrayLike, d: int, tol: float = SINGULAR_TOL) -> tuple[int, ...]:  # noqa: N803
    """0-based index set of a ``d x d`` principal minor with maximal ``|det|``.

    Candidates are scanned in lexicographic order and replaced only by a strictly
    larger determinant, so ties resolve to the lexicographically first set.

    Raises:
        ConditionError: Every ``d x d`` principal minor is singular
    """
    mat = np.asarray(A, dtype=float)
    n = mat.shape[0]
    if not 0 <= d <= n:
        msg = f"minor size {d} out of range for a {n} x {n} matrix"
        raise ValueError(msg)
    if d == 0:
        return ()
    best: tuple[int, ...] = ()
    best_det = 0.0
    for candidate in itertools.combinations(range(n), d):
        idx = np.array(candidate)
        det = abs(float(np.linalg.det(mat[np.ix_(idx, idx)])))
        if det > best_det * (1.0 + 1e-12):
            best, best_det = candidate, det
    scale = max(1.0, float(np.abs(mat).max())) ** d
    if best_det <= tol * scale:
        msg = f"no nonsingular {d} x {d} principal minor"
        raise ConditionError(msg)
    return best


def select_chart_minor(chart: ParamChart, nf_map: NormalFormMap) -> tuple[int, ...]:
    """One index set for the whole chart, chosen at the box center."""
    A = nf_map.A(chart.y(chart.center))  # noqa: N806
    return select_principal_minor(A, numerical_rank(A))


def check_A3(  # noqa: N802
    chart: ParamChart,
    nf_map: NormalFormMap,
    minor: Sequence[int],
    resolution: int | None = None,
) -> ConditionCheck:
    """``rank A = d`` on the grid with the fixed minor nonsingular everywhere."""
    pts = chart.grid_points(resolution)
    mats = nf_map.A(chart.y(pts)).reshape(pts.shape[0], nf_map.dims.n, nf_map.dims.n)
    d = len(minor)
    ranks = np.array([numerical_rank(a) for a in mats])
    if d:
        idx = np.array(minor, dtype=int)
        dets = np.abs(np.linalg.det(mats[:, idx[:, None], idx[None, :]]))
        smallest = float(dets.min())
    else:
        smallest = 1.0
    constant_rank = bool((ranks == d).all())
    passed = constant_rank and smallest > SINGULAR_TOL
    detail = f"d={d}, rank range [{ranks.min()}, {ranks.max()}], minor {tuple(minor)}"
    return ConditionCheck("A3'", passed, smallest, SINGULAR_TOL, detail)


# ---------------------------------------------------------------------------
# Pullback
# ---------------------------------------------------------------------------


def corollary_radius(dims: Dims, eps0: float, gamma0: float) -> float:
    """``s0 = eps0 * gamma0**(4 m^2 (n + 1))``."""
    return eps0 * gamma0**dims.gamma_exponent


def pullback_to_chart(
    N_full: FTSeries,  # noqa: N803
    P_full: FTSeries,  # noqa: N803
    chart: ParamChart,
    lam: ArrayLike,
    *,
    eps0: float,
    gamma0: float,
    r0: float = 0.5,
    s0: float | None = None,
    minor: Sequence[int] | None = None,
) -> ModelHamiltonian:
    """Expand ``N + P`` around ``(y(lam), 0)`` into normal form plus perturbation.

    Args:
        N_full: Integrable part ``N(y, u)`` in absolute actions
        P_full: Perturbation in absolute actions
        chart: Parameter chart
        lam: Parameter point in the chart box
        eps0: Initial perturbation size
        gamma0: Initial Diophantine constant
        r0: Initial strip width
        s0: Explicit polydisk radius; defaults to :func:`corollary_radius`
        minor: Principal minor of ``A``; selected at ``lam`` when omitted

    Returns:
        The model at ``lam`` with weights ``(r0, s0)``

    Raises:
        ChartDomainError: ``lam`` is outside the chart box
        ConditionError: A0) fails at ``y(lam)``
    """
    if N_full.dims != P_full.dims:
        msg = f"dimension mismatch: {N_full.dims} vs {P_full.dims}"
        raise DimensionMismatchError(msg)
    dims = N_full.dims
    point = chart.require(lam)
    y0 = np.asarray(chart.y(point), dtype=float).reshape(-1)
    if y0.shape[0] != dims.n:
        msg = f"chart maps into R^{y0.shape[0]} but the Hamiltonian has n={dims.n}"
        raise DimensionMismatchError(msg)
    a0 = check_A0(N_full, y0)
    if not a0.passed:
        msg = f"A0) fails at y={y0.tolist()}: |det N_uu| = {a0.value:.3e}, {a0.detail}"
        raise ConditionError(msg)

    nf_map = NormalFormMap(N_full)
    A = nf_map.A(y0)  # noqa: N806
    indices = tuple(minor) if minor is not None else select_principal_minor(A, numerical_rank(A))
    N = NormalForm(  # noqa: N806
        dims,
        e=float(nf_map.energy(y0)),
        omega=nf_map.omega(y0),
        A=A,
        M=nf_map.M(y0),
        minor_indices=indices,
    )

    remainder = shift_actions(N_full, y0) - N.to_series()
    scale = float(np.abs(remainder.coeffs).max(initial=0.0))
    roundoff = (remainder.degrees <= 2) & (np.abs(remainder.coeffs) <= 1e-13 * max(1.0, scale))
    remainder = remainder.select(~roundoff)
    P = shift_actions(P_full, y0) + FTSeries(  # noqa: N806
        dims, remainder.keys, remainder.coeffs.real, real=True
    )

    radius = corollary_radius(dims, eps0, gamma0) if s0 is None else s0
    logger.debug("pullback at lam=%s: y=%s, s0=%.3e, minor=%s", point, y0, radius, indices)
    return ModelHamiltonian(N, P, NormWeights(r0, radius))
