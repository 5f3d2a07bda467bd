"""Solve the homological equation for the averaging generator ``F``.

For a normal form ``N`` and the truncated perturbation ``R`` the generator
satisfies

    {N, F} + R - [R] + <p001, u> + <p011 y, u> = 0

cell by cell. For a Fourier mode ``k`` the bracket acts as
``Delta(y) = i <k, omega + A y>`` on scalar cells, as ``Delta I + M J`` on
``u``-linear cells and as ``X -> Delta X + M J X - X J M`` on ``u``-quadratic
cells (quadratic forms are stored as ``1/2 u^T X u``). ``1/Delta(y)`` is
expanded as a geometric series in ``y`` around ``Delta0 = i <k, omega>``; terms
above the degree cap are left in the residual, tagged as overflow.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Literal

import numpy as np
from scipy import linalg

from subtori.errors import (
    DimensionMismatchError,
    ResonantDivisorError,
    SingularNormalFormError,
)
from subtori.model import symplectic_matrix
from subtori.series import (
    FTSeries,
    NormWeights,
    average_over_torus,
    majorant_norm,
    poisson_bracket,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import ArrayLike, NDArray

    from subtori.model import NormalForm

logger = logging.getLogger(__name__)

CellKind = Literal["scalar", "vector", "matrix", "zero"]
Poly = dict[tuple[int, ...], Any]
"""``y``-polynomial with scalar, vector or matrix coefficients, keyed by exponent."""


@dataclass(frozen=True)
class DivisorGuard:
    """Floors below which a divisor is treated as resonant."""

    gamma: float
    """Diophantine constant."""

    tau: float
    """Diophantine exponent."""

    c_vector: float = 1.0
    """Constant in front of the vector floor ``(gamma/|k|^tau)^{2m}``."""

    c_matrix: float = 1.0
    """Constant in front of the matrix floor ``(gamma/|k|^tau)^{4m^2}``."""

    def base(self, k: Sequence[int]) -> float:
        return self.gamma / float(sum(abs(v) for v in k)) ** self.tau

    def floor_scalar(self, k: Sequence[int]) -> float:
        """``gamma / (2 |k|^tau)``."""
        return 0.5 * self.base(k)

    def log_floor_vector(self, k: Sequence[int], m: int) -> float:
        return 2 * m * math.log(self.base(k)) + math.log(self.c_vector)

    def log_floor_matrix(self, k: Sequence[int], m: int) -> float:
        return 4 * m * m * math.log(self.base(k)) + math.log(self.c_matrix)

    def floor_vector(self, k: Sequence[int], m: int) -> float:
        return math.exp(self.log_floor_vector(k, m))

    def floor_matrix(self, k: Sequence[int], m: int) -> float:
        return math.exp(self.log_floor_matrix(k, m))


@dataclass(frozen=True)
class DivisorRecord:
    """One solved cell: the divisor magnitude against its floor."""

    k: tuple[int, ...]
    kind: CellKind
    margin: float
    """``|Delta0|`` for scalar cells, ``|det|`` of the operator otherwise."""
    threshold: float
    condition: float
    """Condition number of the solved operator (1 for scalar cells)."""
    neumann_ratio: float
    """Bound on ``|<k, A y>| * |operator^-1|`` over ``|y| <= s`` (0 when ``s`` is unknown)."""


@dataclass(frozen=True)
class CellSolution:
    coeffs: Poly
    record: DivisorRecord


@dataclass(frozen=True)
class Generator:
    """Averaging generator ``F`` with the translation filled in later by the engine."""

    F: FTSeries
    y_star: NDArray[np.float64]
    divisor_log: tuple[DivisorRecord, ...] = ()
    residual: FTSeries | None = field(default=None, repr=False)
    """Homological residual up to the degree cap (should vanish to roundoff)."""
    overflow: FTSeries | None = field(default=None, repr=False)
    """Residual terms above the degree cap, left for the next perturbation."""

    @property
    def max_neumann_ratio(self) -> float:
        return max((rec.neumann_ratio for rec in self.divisor_log), default=0.0)

    def with_translation(self, y_star: ArrayLike) -> Generator:
        return Generator(
            self.F,
            np.asarray(y_star, dtype=float).reshape(-1),
            self.divisor_log,
            self.residual,
            self.overflow,
        )


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


def vector_operator(delta0: complex, M: ArrayLike) -> NDArray[np.complex128]:  # noqa: N803
    """``Delta0 I + M J``."""
    mat = np.asarray(M, dtype=float)
    size = mat.shape[0]
    return delta0 * np.eye(size) + mat @ symplectic_matrix(size // 2)


def kronecker_operator(delta0: complex, M: ArrayLike) -> NDArray[np.complex128]:  # noqa: N803
    """Row-major vectorization of ``X -> (Delta0 I + M J) X - X J M``.

    With ``vec`` stacking rows, ``vec(A X) = (A kron I) vec(X)`` and
    ``vec(X B) = (I kron B^T) vec(X)``; here ``B = -J M``.
    """
    mat = np.asarray(M, dtype=float)
    size = mat.shape[0]
    left = vector_operator(delta0, mat)
    right = -symplectic_matrix(size // 2) @ mat
    eye = np.eye(size)
    return np.kron(left, eye) + np.kron(eye, right.T)


def kronecker_spectrum(delta0: complex, Omega: ArrayLike) -> NDArray[np.complex128]:  # noqa: N803
    """``{Delta0 - Omega_j - Omega_k}`` over all ordered pairs."""
    values = np.asarray(Omega, dtype=np.complex128)
    return (delta0 - values[:, None] - values[None, :]).reshape(-1)


# ---------------------------------------------------------------------------
# Polynomial helpers
# ---------------------------------------------------------------------------


def _times_linear(poly: Poly, coeffs: NDArray[np.complex128], cap: int) -> Poly:
    out: Poly = {}
    active = np.flatnonzero(coeffs)
    for exponent, value in poly.items():
        if sum(exponent) + 1 > cap:
            continue
        for i in active:
            key = list(exponent)
            key[i] += 1
            target = tuple(key)
            out[target] = out.get(target, 0) + coeffs[i] * value
    return out


def _neumann(
    rhs: Poly, q: NDArray[np.complex128], apply_inverse: Callable[[Any], Any], cap: int
) -> Poly:
    """``-(L + q(y))^{-1} rhs`` expanded in powers of ``q``, truncated at y-degree ``cap``."""
    term = {e: apply_inverse(v) for e, v in rhs.items() if sum(e) <= cap}
    total: Poly = dict(term)
    while term:
        term = {e: apply_inverse(v) for e, v in _times_linear(term, -q, cap).items()}
        for e, v in term.items():
            total[e] = total.get(e, 0) + v
    return {e: -v for e, v in total.items()}


def _setup(k: Sequence[int], N: NormalForm) -> tuple[complex, NDArray[np.complex128], float]:  # noqa: N803
    kv = np.asarray(k, dtype=float)
    delta0 = 1j * float(kv @ N.omega)
    q = 1j * (N.A @ kv)
    return delta0, q, float(np.abs(N.A @ kv).sum())


def _ratio(a_k: float, inverse_norm: float, s: float | None) -> float:
    return a_k * s * inverse_norm if s is not None else 0.0


def _key(k: Sequence[int]) -> tuple[int, ...]:
    return tuple(int(v) for v in k)


# ---------------------------------------------------------------------------
# Cell solves
# ---------------------------------------------------------------------------


def solve_scalar(
    k: Sequence[int],
    p_coeff: Poly,
    N: NormalForm,  # noqa: N803
    guard: DivisorGuard,
    D_y: int = 2,  # noqa: N803
    *,
    s: float | None = None,
) -> CellSolution:
    """``f(y) = -p(y) / Delta(y)`` with ``1/Delta`` expanded up to y-degree ``D_y``.

    Raises:
        ResonantDivisorError: ``|Delta0| <= gamma / (2 |k|^tau)``
    """
    delta0, q, a_k = _setup(k, N)
    floor = guard.floor_scalar(k)
    if abs(delta0) <= floor:
        raise ResonantDivisorError(k, "scalar", abs(delta0), floor)
    coeffs = _neumann(p_coeff, q, lambda v: v / delta0, D_y)
    record = DivisorRecord(_key(k), "scalar", abs(delta0), floor, 1.0, _ratio(a_k, 1 / abs(delta0), s))
    return CellSolution(coeffs, record)


def solve_vector(
    k: Sequence[int],
    p_vec: Poly,
    N: NormalForm,  # noqa: N803
    guard: DivisorGuard,
    D_y: int = 2,  # noqa: N803
    *,
    s: float | None = None,
) -> CellSolution:
    """``(Delta(y) I + M J) f(y) = -p(y)`` up to y-degree ``D_y - 1``.

    Raises:
        ResonantDivisorError: ``|det(Delta0 I + M J)|`` is at or below the vector floor
    """
    delta0, q, a_k = _setup(k, N)
    op = vector_operator(delta0, N.M)
    log_det = float(np.linalg.slogdet(op)[1])
    log_floor = guard.log_floor_vector(k, N.dims.m)
    if log_det <= log_floor:
        raise ResonantDivisorError(k, "vector", math.exp(log_det), math.exp(log_floor))
    factor = linalg.lu_factor(op)
    coeffs = _neumann(
        {e: np.asarray(v, dtype=np.complex128) for e, v in p_vec.items()},
        q,
        lambda v: linalg.lu_solve(factor, v),
        D_y - 1,
    )
    inverse_norm = 1.0 / float(linalg.svdvals(op)[-1])
    record = DivisorRecord(
        _key(k),
        "vector",
        math.exp(log_det),
        math.exp(log_floor),
        float(np.linalg.cond(op)),
        _ratio(a_k, inverse_norm, s),
    )
    return CellSolution(coeffs, record)


def solve_matrix(
    k: Sequence[int],
    p_mat: Poly,
    N: NormalForm,  # noqa: N803
    guard: DivisorGuard,
    D_y: int = 2,  # noqa: N803
    *,
    s: float | None = None,
) -> CellSolution:
    """``Delta(y) X + M J X - X J M = -P(y)`` up to y-degree ``D_y - 2``.

    ``P`` is the Hessian of the cell's quadratic form; the solution is returned as
    symmetric matrices ``X`` of ``1/2 u^T X u``.

    Raises:
        ResonantDivisorError: The Kronecker determinant is at or below the matrix floor
    """
    delta0, q, a_k = _setup(k, N)
    size = N.dims.normal
    op = kronecker_operator(delta0, N.M)
    log_det = float(np.linalg.slogdet(op)[1])
    log_floor = guard.log_floor_matrix(k, N.dims.m)
    if log_det <= log_floor:
        raise ResonantDivisorError(k, "matrix", math.exp(log_det), math.exp(log_floor))
    factor = linalg.lu_factor(op)

    def apply_inverse(value: NDArray[np.complex128]) -> NDArray[np.complex128]:
        x = linalg.lu_solve(factor, np.asarray(value, dtype=np.complex128).reshape(-1))
        x = x.reshape(size, size)
        return 0.5 * (x + x.T)

    coeffs = _neumann(p_mat, q, apply_inverse, D_y - 2)
    inverse_norm = 1.0 / float(linalg.svdvals(op)[-1])
    record = DivisorRecord(
        _key(k),
        "matrix",
        math.exp(log_det),
        math.exp(log_floor),
        float(np.linalg.cond(op)),
        _ratio(a_k, inverse_norm, s),
    )
    return CellSolution(coeffs, record)


def solve_zero_mode(
    p001: ArrayLike, p011: ArrayLike, M: ArrayLike  # noqa: N803
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """``M J f001 = -p001`` and ``M J f011 = -p011`` (``p011`` is ``2m x n``).

    Raises:
        SingularNormalFormError: ``M`` is singular
    """
    rhs = np.column_stack(
        [np.asarray(p001, dtype=float).reshape(-1, 1), np.asarray(p011, dtype=float)]
    )
    solution = _solve_zero(M, rhs).real
    return solution[:, 0], solution[:, 1:]


def _solve_zero(M: ArrayLike, rhs: NDArray[Any]) -> NDArray[Any]:  # noqa: N803
    mat = np.asarray(M, dtype=float)
    op = mat @ symplectic_matrix(mat.shape[0] // 2)
    try:
        return -linalg.solve(op, rhs, check_finite=True)
    except (linalg.LinAlgError, ValueError) as e:
        msg = f"cannot solve the zero-mode equations: {e}"
        raise SingularNormalFormError(msg) from e


# ---------------------------------------------------------------------------
# Generator assembly
# ---------------------------------------------------------------------------


@dataclass
class _Cells:
    scalar: Poly = field(default_factory=dict)
    vector: Poly = field(default_factory=dict)
    matrix: Poly = field(default_factory=dict)


def _split_cells(R: FTSeries, half: bool) -> dict[tuple[int, ...], _Cells]:  # noqa: N803
    dims = R.dims
    normal = dims.normal
    cells: dict[tuple[int, ...], _Cells] = {}
    for index, value in R.iter_terms():
        k = index.k
        u_degree = sum(index.p)
        is_zero = not any(k)
        if half and not is_zero and next(v for v in k if v) < 0:
            continue
        if u_degree == 0:
            if is_zero:
                continue
            cell = cells.setdefault(k, _Cells()).scalar
            cell[index.l] = cell.get(index.l, 0) + value
        elif u_degree == 1:
            cell = cells.setdefault(k, _Cells()).vector
            vec = cell.setdefault(index.l, np.zeros(normal, dtype=np.complex128))
            vec[index.p.index(1)] += value
        elif u_degree == 2:
            if is_zero:
                continue
            cell = cells.setdefault(k, _Cells()).matrix
            mat = cell.setdefault(index.l, np.zeros((normal, normal), dtype=np.complex128))
            hot = [a for a, power in enumerate(index.p) for _ in range(power)]
            a, b = hot
            if a == b:
                mat[a, a] += 2.0 * value
            else:
                mat[a, b] += value
                mat[b, a] += value
        else:
            msg = f"perturbation term {index} has normal degree {u_degree} > 2"
            raise ValueError(msg)
    return cells


def _emit(
    keys: list[list[int]],
    coeffs: list[complex],
    k: tuple[int, ...],
    exponent: tuple[int, ...],
    p: Sequence[int],
    value: complex,
    mirror: bool,
) -> None:
    keys.append([*k, *exponent, *p])
    coeffs.append(complex(value))
    if mirror:
        keys.append([*(-v for v in k), *exponent, *p])
        coeffs.append(complex(np.conj(value)))


def build_generator(
    N: NormalForm,  # noqa: N803
    R: FTSeries,  # noqa: N803
    guard: DivisorGuard,
    D_y: int = 2,  # noqa: N803
    *,
    s: float | None = None,
    residual_weights: NormWeights | None = None,
) -> Generator:
    """Solve every cell of ``R`` and assemble ``F``.

    For real ``R`` only one of each ``+-k`` pair is solved and the other is its
    complex conjugate, so ``F`` is exactly conjugate-symmetric.

    Args:
        N: Current normal form
        R: Truncated perturbation (normal degree at most 2)
        guard: Divisor floors
        D_y: Total degree cap of the generator
        s: Polydisk radius used for the Neumann ratio
        residual_weights: Weights for logging the residual norm

    Returns:
        The generator with its divisor log and the tagged residual

    Raises:
        ResonantDivisorError: A divisor is at or below its floor
        SingularNormalFormError: ``M`` is singular
    """
    dims = N.dims
    if R.dims != dims:
        msg = f"dimension mismatch: {R.dims} vs {dims}"
        raise DimensionMismatchError(msg)
    mirror = R.real
    cells = _split_cells(R, half=mirror)
    keys: list[list[int]] = []
    coeffs: list[complex] = []
    records: list[DivisorRecord] = []
    zero_p = [0] * dims.normal
    zero_k = (0,) * dims.n

    for k in sorted(cells):
        if k == zero_k:
            continue
        cell = cells[k]
        if cell.scalar:
            solved = solve_scalar(k, cell.scalar, N, guard, D_y, s=s)
            records.append(solved.record)
            for exponent, value in solved.coeffs.items():
                _emit(keys, coeffs, k, exponent, zero_p, value, mirror)
        if cell.vector:
            solved = solve_vector(k, cell.vector, N, guard, D_y, s=s)
            records.append(solved.record)
            for exponent, vec in solved.coeffs.items():
                for a in np.flatnonzero(vec):
                    p = list(zero_p)
                    p[a] = 1
                    _emit(keys, coeffs, k, exponent, p, vec[a], mirror)
        if cell.matrix:
            solved = solve_matrix(k, cell.matrix, N, guard, D_y, s=s)
            records.append(solved.record)
            for exponent, mat in solved.coeffs.items():
                for a in range(dims.normal):
                    for b in range(a, dims.normal):
                        p = list(zero_p)
                        p[a] += 1
                        p[b] += 1
                        value = 0.5 * mat[a, a] if a == b else mat[a, b]
                        if value != 0:
                            _emit(keys, coeffs, k, exponent, p, value, mirror)

    zero = cells.get(zero_k)
    if zero is not None and zero.vector:
        exponents = sorted(zero.vector)
        rhs = np.column_stack([zero.vector[e] for e in exponents])
        if mirror:
            rhs = rhs.real
        solution = _solve_zero(N.M, rhs)
        op = N.M @ symplectic_matrix(dims.m)
        records.append(
            DivisorRecord(
                zero_k, "zero", abs(float(np.linalg.det(op))), 0.0, float(np.linalg.cond(op)), 0.0
            )
        )
        for column, exponent in enumerate(exponents):
            for a in np.flatnonzero(solution[:, column]):
                p = list(zero_p)
                p[a] = 1
                _emit(keys, coeffs, zero_k, exponent, p, solution[a, column], mirror=False)

    key_array = np.array(keys, dtype=np.int64).reshape(-1, dims.width)
    F = FTSeries(dims, key_array, coeffs, real=mirror)  # noqa: N806

    zero_mode = (R.k == 0).all(axis=1) & (R.p.sum(axis=1) == 1)
    full = poisson_bracket(N.to_series(), F) + R - average_over_torus(R) + R.select(zero_mode)
    low = full.degrees <= D_y
    residual, overflow = full.select(low), full.select(~low)
    if residual_weights is not None:
        logger.debug(
            "generator: %d terms, %d cells, residual %.3e vs |R| %.3e",
            len(F),
            len(records),
            majorant_norm(residual, residual_weights),
            majorant_norm(R, residual_weights),
        )
    return Generator(F, np.zeros(dims.n), tuple(records), residual, overflow)
