"""Fourier-Taylor series in angles x, actions y and normal coordinates u.

A series is a finite sum ``sum c[k,l,p] * y**l * u**p * exp(i<k,x>)`` on the phase
space ``T^n x R^n x R^{2m}``. Values are immutable; every operation returns a new
series in canonical form (sorted unique multi-indices, no stored zeros).

Normal coordinates are interleaved: ``u = (u1, v1, u2, v2, ...)`` and the
symplectic matrix ``J`` is block diagonal with blocks ``[[0, 1], [-1, 0]]``.

Python API::

    from subtori.series import Dims, FTSeries, poisson_bracket

    dims = Dims(n=2, m=1)
    omega_y = FTSeries.from_terms(dims, {((0, 0), (1, 0), (0, 0)): 1.0})
    wave = FTSeries.from_terms(dims, {((1, 0), (0, 0), (0, 0)): 1.0})
    poisson_bracket(omega_y, wave)  # i * exp(i x1)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import TYPE_CHECKING, Literal, NamedTuple

import numpy as np
from scipy.special import comb

from subtori.errors import DimensionMismatchError

if TYPE_CHECKING:
    from collections.abc import Iterator, Mapping, Sequence

    from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger(__name__)

Block = Literal["x", "y", "u"]

ZERO_CUTOFF = 1e-300
IMAG_LEAK_TOL = 1e-12
"""Coefficients with smaller magnitude are dropped during canonicalization."""

_CHUNK_ROWS = 1 << 18
_LOG_OVERFLOW = 709.0


@dataclass(frozen=True)
class Dims:
    """Dimensions of the phase space ``T^n x R^n x R^{2m}``."""

    n: int
    """Torus (and action) dimension."""

    m: int
    """Half the normal dimension."""

    def __post_init__(self) -> None:
        if self.n < 1:
            msg = f"torus dimension must be >= 1, got {self.n}"
            raise ValueError(msg)
        if self.m < 0:
            msg = f"normal half-dimension must be >= 0, got {self.m}"
            raise ValueError(msg)

    @property
    def normal(self) -> int:
        """Normal dimension ``2m``."""
        return 2 * self.m

    @property
    def width(self) -> int:
        """Length of a packed multi-index ``(k, l, p)``."""
        return 2 * self.n + 2 * self.m

    @property
    def gamma_exponent(self) -> int:
        """Exponent ``4m^2(n+1)`` of gamma in the step hypothesis."""
        return 4 * self.m * self.m * (self.n + 1)


class MultiIndex(NamedTuple):
    """Fourier index ``k``, action degrees ``l`` and normal degrees ``p``."""

    k: tuple[int, ...]
    l: tuple[int, ...]  # noqa: E741
    p: tuple[int, ...]

    @property
    def fourier_order(self) -> int:
        """l1 norm of ``k``."""
        return sum(abs(v) for v in self.k)

    @property
    def degree(self) -> int:
        """Total polynomial degree ``|l| + |p|``."""
        return sum(self.l) + sum(self.p)


@dataclass(frozen=True)
class NormWeights:
    """Weights ``(r, s)`` of the complex domain ``D(r, s)``."""

    r: float
    """Width of the complex strip around the torus."""

    s: float
    """Radius of the polydisk in (y, u)."""

    def __post_init__(self) -> None:
        if not 0.0 < self.r < 1.0:
            msg = f"weight r must lie in (0, 1), got {self.r}"
            raise ValueError(msg)
        if not 0.0 < self.s < 1.0:
            msg = f"weight s must lie in (0, 1), got {self.s}"
            raise ValueError(msg)


def _canonical(
    keys: NDArray[np.int64], coeffs: NDArray[np.complex128]
) -> tuple[NDArray[np.int64], NDArray[np.complex128]]:
    if keys.shape[0] == 0:
        return keys, coeffs
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    size = uniq.shape[0]
    re = np.bincount(inverse, weights=coeffs.real, minlength=size)
    im = np.bincount(inverse, weights=coeffs.imag, minlength=size)
    summed = re + 1j * im
    keep = np.abs(summed) >= ZERO_CUTOFF
    return uniq[keep], summed[keep]


def _freeze(array: NDArray[np.generic]) -> None:
    array.setflags(write=False)


class FTSeries:
    """Immutable Fourier-Taylor series with a reality flag.

    ``real`` marks series that represent real functions, i.e. whose coefficients
    satisfy ``c[-k, l, p] == conj(c[k, l, p])``.
    """

    __slots__ = ("_coeffs", "_keys", "dims", "real")

    dims: Dims
    real: bool
    _keys: NDArray[np.int64]
    _coeffs: NDArray[np.complex128]

    def __init__(
        self,
        dims: Dims,
        keys: ArrayLike,
        coeffs: ArrayLike,
        *,
        real: bool = False,
    ) -> None:
        key_array = np.asarray(keys, dtype=np.int64).reshape(-1, dims.width)
        coeff_array = np.asarray(coeffs, dtype=np.complex128).reshape(-1)
        if key_array.shape[0] != coeff_array.shape[0]:
            msg = f"{key_array.shape[0]} keys but {coeff_array.shape[0]} coefficients"
            raise ValueError(msg)
        if key_array.shape[0] and (key_array[:, dims.n :] < 0).any():
            msg = "polynomial degrees must be nonnegative"
            raise ValueError(msg)
        key_array, coeff_array = _canonical(key_array, coeff_array)
        _freeze(key_array)
        _freeze(coeff_array)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "real", real)
        object.__setattr__(self, "_keys", key_array)
        object.__setattr__(self, "_coeffs", coeff_array)

    def __setattr__(self, name: str, value: object) -> None:
        msg = "FTSeries is immutable"
        raise AttributeError(msg)

    # -- construction -----------------------------------------------------

    @classmethod
    def zero(cls, dims: Dims, *, real: bool = True) -> FTSeries:
        """The empty series."""
        return cls(dims, np.empty((0, dims.width), dtype=np.int64), [], real=real)

    @classmethod
    def from_terms(
        cls,
        dims: Dims,
        terms: Mapping[MultiIndex, complex] | Mapping[tuple[Sequence[int], ...], complex],
        *,
        real: bool = False,
    ) -> FTSeries:
        """Build a series from ``{(k, l, p): coefficient}``."""
        keys: list[list[int]] = []
        coeffs: list[complex] = []
        for index, value in terms.items():
            k, l, p = index  # noqa: E741
            if len(k) != dims.n or len(l) != dims.n or len(p) != dims.normal:
                msg = f"multi-index {index!r} does not match {dims}"
                raise DimensionMismatchError(msg)
            keys.append([*k, *l, *p])
            coeffs.append(complex(value))
        return cls(dims, np.array(keys, dtype=np.int64).reshape(-1, dims.width), coeffs, real=real)

    # -- access -------------------------------------------------------------

    @property
    def keys(self) -> NDArray[np.int64]:
        """Packed multi-indices, one row ``(k, l, p)`` per term (read-only)."""
        return self._keys

    @property
    def coeffs(self) -> NDArray[np.complex128]:
        """Coefficients aligned with :attr:`keys` (read-only)."""
        return self._coeffs

    @property
    def k(self) -> NDArray[np.int64]:
        return self._keys[:, : self.dims.n]

    @property
    def l(self) -> NDArray[np.int64]:  # noqa: E743
        return self._keys[:, self.dims.n : 2 * self.dims.n]

    @property
    def p(self) -> NDArray[np.int64]:
        return self._keys[:, 2 * self.dims.n :]

    @property
    def fourier_orders(self) -> NDArray[np.int64]:
        """l1 norm of ``k`` for every term."""
        return np.abs(self.k).sum(axis=1)

    @property
    def degrees(self) -> NDArray[np.int64]:
        """Total (y, u) degree for every term."""
        return self._keys[:, self.dims.n :].sum(axis=1)

    @property
    def terms(self) -> Mapping[MultiIndex, complex]:
        """Read-only mapping view ``MultiIndex -> coefficient``."""
        return MappingProxyType(dict(self.iter_terms()))

    def iter_terms(self) -> Iterator[tuple[MultiIndex, complex]]:
        n = self.dims.n
        for row, value in zip(self._keys.tolist(), self._coeffs.tolist(), strict=True):
            yield MultiIndex(tuple(row[:n]), tuple(row[n : 2 * n]), tuple(row[2 * n :])), value

    def coefficient(self, k: Sequence[int], l: Sequence[int], p: Sequence[int]) -> complex:  # noqa: E741
        """Coefficient of a single monomial (0 when absent)."""
        target = np.array([*k, *l, *p], dtype=np.int64)
        hit = np.flatnonzero((self._keys == target).all(axis=1))
        return complex(self._coeffs[hit[0]]) if hit.size else 0j

    def select(self, mask: NDArray[np.bool_]) -> FTSeries:
        """Sub-series of the terms where ``mask`` is true."""
        return FTSeries(self.dims, self._keys[mask], self._coeffs[mask], real=self.real)

    def __len__(self) -> int:
        return int(self._coeffs.shape[0])

    def __bool__(self) -> bool:
        return len(self) > 0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FTSeries):
            return NotImplemented
        return (
            self.dims == other.dims
            and np.array_equal(self._keys, other._keys)
            and np.array_equal(self._coeffs, other._coeffs)
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        flag = "real" if self.real else "complex"
        return f"FTSeries(n={self.dims.n}, m={self.dims.m}, terms={len(self)}, {flag})"

    # -- operators ----------------------------------------------------------

    def __add__(self, other: FTSeries) -> FTSeries:
        return add(self, other)

    def __sub__(self, other: FTSeries) -> FTSeries:
        return subtract(self, other)

    def __neg__(self) -> FTSeries:
        return scale(self, -1.0)

    def __mul__(self, other: FTSeries | complex) -> FTSeries:
        if isinstance(other, FTSeries):
            return multiply(self, other)
        return scale(self, other)

    def __rmul__(self, other: complex) -> FTSeries:
        return scale(self, other)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def constant(dims: Dims, value: float) -> FTSeries:
    """The constant series ``value``."""
    return FTSeries(dims, np.zeros((1, dims.width), dtype=np.int64), [value], real=True)


def _block_offset(dims: Dims, block: Block) -> tuple[int, int]:
    if block == "x":
        return 0, dims.n
    if block == "y":
        return dims.n, dims.n
    return 2 * dims.n, dims.normal


def linear_form(dims: Dims, block: Literal["y", "u"], vector: ArrayLike) -> FTSeries:
    """``<v, y>`` or ``<v, u>``."""
    offset, size = _block_offset(dims, block)
    v = np.asarray(vector, dtype=float).reshape(-1)
    if v.shape[0] != size:
        msg = f"vector of length {v.shape[0]} does not match block {block} of size {size}"
        raise DimensionMismatchError(msg)
    keys = np.zeros((size, dims.width), dtype=np.int64)
    keys[np.arange(size), offset + np.arange(size)] = 1
    return FTSeries(dims, keys, v, real=True)


def quadratic_form(dims: Dims, block: Literal["y", "u"], matrix: ArrayLike) -> FTSeries:
    """``1/2 <Q z, z>`` for ``z`` the ``y`` or ``u`` block; ``Q`` is symmetrized."""
    offset, size = _block_offset(dims, block)
    q = np.asarray(matrix, dtype=float)
    if q.shape != (size, size):
        msg = f"matrix of shape {q.shape} does not match block {block} of size {size}"
        raise DimensionMismatchError(msg)
    q = 0.5 * (q + q.T)
    rows, cols = np.triu_indices(size)
    keys = np.zeros((rows.shape[0], dims.width), dtype=np.int64)
    np.add.at(keys, (np.arange(rows.shape[0]), offset + rows), 1)
    np.add.at(keys, (np.arange(rows.shape[0]), offset + cols), 1)
    values = np.where(rows == cols, 0.5 * q[rows, cols], q[rows, cols])
    return FTSeries(dims, keys, values, real=True)


def mixed_form(dims: Dims, matrix: ArrayLike) -> FTSeries:
    """``<P y, u>`` for a ``2m x n`` matrix ``P``."""
    mat = np.asarray(matrix, dtype=float)
    if mat.shape != (dims.normal, dims.n):
        msg = f"mixed matrix of shape {mat.shape} does not match {(dims.normal, dims.n)}"
        raise DimensionMismatchError(msg)
    rows, cols = np.nonzero(np.ones_like(mat, dtype=bool))
    keys = np.zeros((rows.shape[0], dims.width), dtype=np.int64)
    keys[np.arange(rows.shape[0]), dims.n + cols] = 1
    keys[np.arange(rows.shape[0]), 2 * dims.n + rows] = 1
    return FTSeries(dims, keys, mat[rows, cols], real=True)


def _zero_mode_mask(a: FTSeries, y_degree: int, u_degree: int) -> NDArray[np.bool_]:
    return (
        (a.k == 0).all(axis=1)
        & (a.l.sum(axis=1) == y_degree)
        & (a.p.sum(axis=1) == u_degree)
    )


def constant_term(a: FTSeries) -> complex:
    """Coefficient of ``k = 0, l = 0, p = 0``."""
    mask = _zero_mode_mask(a, 0, 0)
    return complex(a.coeffs[mask].sum())


def gradient(a: FTSeries, block: Literal["y", "u"]) -> NDArray[np.complex128]:
    """Coefficients of the ``k = 0`` linear part in one block (the gradient at 0)."""
    offset, size = _block_offset(a.dims, block)
    mask = _zero_mode_mask(a, 1, 0) if block == "y" else _zero_mode_mask(a, 0, 1)
    out = np.zeros(size, dtype=np.complex128)
    if size == 0 or not mask.any():
        return out
    index = np.argmax(a.keys[mask][:, offset : offset + size], axis=1)
    np.add.at(out, index, a.coeffs[mask])
    return out


def hessian(a: FTSeries, block: Literal["y", "u"]) -> NDArray[np.complex128]:
    """Hessian at 0 of the ``k = 0`` quadratic part in one block."""
    offset, size = _block_offset(a.dims, block)
    mask = _zero_mode_mask(a, 2, 0) if block == "y" else _zero_mode_mask(a, 0, 2)
    out = np.zeros((size, size), dtype=np.complex128)
    for row, value in zip(a.keys[mask][:, offset : offset + size], a.coeffs[mask], strict=True):
        idx = np.flatnonzero(row)
        if idx.shape[0] == 1:
            out[idx[0], idx[0]] += 2.0 * value
        else:
            out[idx[0], idx[1]] += value
            out[idx[1], idx[0]] += value
    return out


def mixed_matrix(a: FTSeries) -> NDArray[np.complex128]:
    """The ``2m x n`` matrix ``P`` of the ``k = 0`` cell ``<P y, u>``."""
    dims = a.dims
    mask = _zero_mode_mask(a, 1, 1)
    out = np.zeros((dims.normal, dims.n), dtype=np.complex128)
    for row, value in zip(a.keys[mask], a.coeffs[mask], strict=True):
        j = int(np.argmax(row[dims.n : 2 * dims.n]))
        i = int(np.argmax(row[2 * dims.n :]))
        out[i, j] += value
    return out


# ---------------------------------------------------------------------------
# Algebra
# ---------------------------------------------------------------------------


def _check_dims(a: FTSeries, b: FTSeries) -> None:
    if a.dims != b.dims:
        msg = f"dimension mismatch: {a.dims} vs {b.dims}"
        raise DimensionMismatchError(msg)


def add(a: FTSeries, b: FTSeries) -> FTSeries:
    """Coefficientwise sum."""
    _check_dims(a, b)
    return FTSeries(
        a.dims,
        np.concatenate([a.keys, b.keys]),
        np.concatenate([a.coeffs, b.coeffs]),
        real=a.real and b.real,
    )


def scale(a: FTSeries, factor: complex) -> FTSeries:
    """Multiply every coefficient by ``factor``."""
    real = a.real and complex(factor).imag == 0.0
    return FTSeries(a.dims, a.keys, a.coeffs * factor, real=real)


def subtract(a: FTSeries, b: FTSeries) -> FTSeries:
    return add(a, scale(b, -1.0))


def conjugate(a: FTSeries) -> FTSeries:
    """Complex conjugate function: ``k -> -k`` with conjugated coefficients."""
    keys = a.keys.copy()
    keys[:, : a.dims.n] *= -1
    return FTSeries(a.dims, keys, np.conj(a.coeffs), real=a.real)


def realify(a: FTSeries) -> FTSeries:
    """Real part of the function, flagged real (exact conjugate symmetry)."""
    both = add(a, conjugate(a))
    return FTSeries(a.dims, both.keys, 0.5 * both.coeffs, real=True)


def conjugate_symmetric(a: FTSeries, tol: float = 1e-12) -> bool:
    """Whether ``c[-k] == conj(c[k])`` holds to ``tol`` relative to the largest term."""
    if not a:
        return True
    gap = subtract(a, conjugate(a))
    if not gap:
        return True
    return float(np.abs(gap.coeffs).max()) <= tol * float(np.abs(a.coeffs).max())


def _window(
    keys: NDArray[np.int64], dims: Dims, k_cap: float | None, degree_cap: float | None
) -> NDArray[np.bool_] | None:
    mask: NDArray[np.bool_] | None = None
    if k_cap is not None and math.isfinite(k_cap):
        mask = np.abs(keys[:, : dims.n]).sum(axis=1) <= k_cap
    if degree_cap is not None and math.isfinite(degree_cap):
        deg = keys[:, dims.n :].sum(axis=1) <= degree_cap
        mask = deg if mask is None else mask & deg
    return mask


def multiply(
    a: FTSeries,
    b: FTSeries,
    *,
    k_cap: float | None = None,
    degree_cap: float | None = None,
) -> FTSeries:
    """Product: convolution in ``k``, polynomial product in ``(l, p)``.

    Args:
        a: Left factor
        b: Right factor
        k_cap: Drop product terms with ``|k| > k_cap`` (no cap by default)
        degree_cap: Drop product terms with ``|l| + |p| > degree_cap``

    Returns:
        The (optionally windowed) product series
    """
    _check_dims(a, b)
    dims = a.dims
    real = a.real and b.real
    if not a or not b:
        return FTSeries.zero(dims, real=real)
    if len(a) > len(b):
        a, b = b, a

    chunk = max(1, _CHUNK_ROWS // len(b))
    key_parts: list[NDArray[np.int64]] = []
    coeff_parts: list[NDArray[np.complex128]] = []
    for start in range(0, len(a), chunk):
        a_keys = a.keys[start : start + chunk]
        a_coeffs = a.coeffs[start : start + chunk]
        keys = (a_keys[:, None, :] + b.keys[None, :, :]).reshape(-1, dims.width)
        coeffs = (a_coeffs[:, None] * b.coeffs[None, :]).reshape(-1)
        mask = _window(keys, dims, k_cap, degree_cap)
        if mask is not None:
            keys, coeffs = keys[mask], coeffs[mask]
        keys, coeffs = _canonical(keys, coeffs)
        key_parts.append(keys)
        coeff_parts.append(coeffs)
    return FTSeries(dims, np.concatenate(key_parts), np.concatenate(coeff_parts), real=real)


def partial_derivative(a: FTSeries, block: Block, index: int) -> FTSeries:
    """Termwise derivative with respect to ``x_j``, ``y_j`` or ``u_j`` (0-based ``index``).

    ``x_j`` multiplies by ``i k_j``; ``y_j`` and ``u_j`` lower the degree with the
    power as factor.
    """
    offset, size = _block_offset(a.dims, block)
    if not 0 <= index < size:
        msg = f"variable index {index} out of range for block {block} of size {size}"
        raise IndexError(msg)
    column = offset + index
    powers = a.keys[:, column]
    if block == "x":
        factor = 1j * powers
        keys = a.keys
    else:
        factor = powers.astype(np.complex128)
        keys = a.keys.copy()
        keys[:, column] = np.maximum(powers - 1, 0)
    keep = powers != 0
    return FTSeries(a.dims, keys[keep], (a.coeffs * factor)[keep], real=a.real)


def poisson_bracket(
    f: FTSeries,
    g: FTSeries,
    *,
    k_cap: float | None = None,
    degree_cap: float | None = None,
) -> FTSeries:
    """``{F, G} = <F_y, G_x> - <F_x, G_y> + <F_u, J G_u>``.

    With this sign ``{<omega, y>, exp(i<k,x>)} = i<k, omega> exp(i<k,x>)``.
    """
    _check_dims(f, g)
    dims = f.dims
    caps = {"k_cap": k_cap, "degree_cap": degree_cap}
    pieces: list[FTSeries] = []
    for j in range(dims.n):
        fy = partial_derivative(f, "y", j)
        gx = partial_derivative(g, "x", j)
        fx = partial_derivative(f, "x", j)
        gy = partial_derivative(g, "y", j)
        if fy and gx:
            pieces.append(multiply(fy, gx, **caps))
        if fx and gy:
            pieces.append(scale(multiply(fx, gy, **caps), -1.0))
    for q in range(dims.m):
        first, second = 2 * q, 2 * q + 1
        f1 = partial_derivative(f, "u", first)
        f2 = partial_derivative(f, "u", second)
        g1 = partial_derivative(g, "u", first)
        g2 = partial_derivative(g, "u", second)
        if f1 and g2:
            pieces.append(multiply(f1, g2, **caps))
        if f2 and g1:
            pieces.append(scale(multiply(f2, g1, **caps), -1.0))
    real = f.real and g.real
    if not pieces:
        return FTSeries.zero(dims, real=real)
    keys = np.concatenate([piece.keys for piece in pieces])
    coeffs = np.concatenate([piece.coeffs for piece in pieces])
    return FTSeries(dims, keys, coeffs, real=real)


def truncate(a: FTSeries, k_max: float, degree_max: float) -> FTSeries:
    """Keep exactly the terms with ``|k| <= k_max`` and ``|l| + |p| <= degree_max``."""
    if k_max < 0 or degree_max < 0:
        msg = f"truncation bounds must be nonnegative, got K={k_max}, D={degree_max}"
        raise ValueError(msg)
    return a.select((a.fourier_orders <= k_max) & (a.degrees <= degree_max))


def average_over_torus(a: FTSeries) -> FTSeries:
    """Torus average ``[a]``: keep exactly the ``k = 0`` terms."""
    return a.select((a.k == 0).all(axis=1))


def _log_weights(a: FTSeries, weights: NormWeights) -> NDArray[np.float64]:
    return (
        np.log(np.abs(a.coeffs))
        + a.fourier_orders * weights.r
        + a.degrees * math.log(weights.s)
    )


def majorant_norm(a: FTSeries, weights: NormWeights) -> float:
    """``sum |c| e^{|k| r} s^{|l|+|p|}``, an upper bound of the sup norm on ``D(r, s)``."""
    if not a:
        return 0.0
    logs = _log_weights(a, weights)
    if logs.max() > _LOG_OVERFLOW:
        logger.warning("majorant norm overflows at r=%g, s=%g; reporting inf", weights.r, weights.s)
        return math.inf
    return float(np.exp(logs).sum())


def prune(a: FTSeries, weights: NormWeights, threshold: float) -> tuple[FTSeries, float]:
    """Drop terms whose weighted contribution is below ``threshold``.

    Returns:
        Tuple of (kept series, majorant norm of the dropped terms)
    """
    if not a or threshold <= 0.0:
        return a, 0.0
    contribution = np.exp(np.minimum(_log_weights(a, weights), _LOG_OVERFLOW))
    keep = contribution >= threshold
    return a.select(keep), float(contribution[~keep].sum())


def evaluate(
    a: FTSeries, x: ArrayLike, y: ArrayLike, u: ArrayLike
) -> complex | float:
    """Evaluate at one phase-space point; real-flagged series return a float."""
    dims = a.dims
    xv = np.asarray(x, dtype=float).reshape(-1)
    yv = np.asarray(y, dtype=float).reshape(-1)
    uv = np.asarray(u, dtype=float).reshape(-1)
    if xv.shape[0] != dims.n or yv.shape[0] != dims.n or uv.shape[0] != dims.normal:
        msg = (
            f"point of lengths ({xv.shape[0]}, {yv.shape[0]}, {uv.shape[0]}) "
            f"does not match (n={dims.n}, n={dims.n}, 2m={dims.normal})"
        )
        raise DimensionMismatchError(msg)
    if not a:
        return 0.0 if a.real else 0j
    phase = np.exp(1j * (a.k @ xv))
    monomial = np.prod(yv[None, :] ** a.l, axis=1) * np.prod(uv[None, :] ** a.p, axis=1)
    value = complex(np.sum(a.coeffs * phase * monomial))
    if a.real:
        leak = abs(value.imag)
        if leak > IMAG_LEAK_TOL * len(a) * max(1.0, abs(value.real)):
            logger.warning(
                "real series of %d terms evaluated with imaginary part %.3e", len(a), leak
            )
        return value.real
    return value


def evaluate_many(
    a: FTSeries, x: ArrayLike, y: ArrayLike, u: ArrayLike
) -> NDArray[np.complex128]:
    """Evaluate at ``P`` points given as arrays of shape ``(P, n)``, ``(P, n)``, ``(P, 2m)``."""
    dims = a.dims
    xs = np.asarray(x, dtype=float).reshape(-1, dims.n)
    ys = np.asarray(y, dtype=float).reshape(-1, dims.n)
    us = np.asarray(u, dtype=float).reshape(-1, dims.normal)
    if not xs.shape[0] == ys.shape[0] == us.shape[0]:
        msg = f"point counts differ: {xs.shape[0]}, {ys.shape[0]}, {us.shape[0]}"
        raise DimensionMismatchError(msg)
    if not a:
        return np.zeros(xs.shape[0], dtype=np.complex128)
    phase = np.exp(1j * (xs @ a.k.T))
    monomial = np.prod(ys[:, None, :] ** a.l[None, :, :], axis=2)
    if dims.m:
        monomial = monomial * np.prod(us[:, None, :] ** a.p[None, :, :], axis=2)
    return (phase * monomial) @ a.coeffs


def shift_actions(a: FTSeries, y_star: ArrayLike) -> FTSeries:
    """Exact recomposition ``a(x, y + y*, u)`` by binomial expansion."""
    dims = a.dims
    shift = np.asarray(y_star, dtype=float).reshape(-1)
    if shift.shape[0] != dims.n:
        msg = f"shift of length {shift.shape[0]} does not match n={dims.n}"
        raise DimensionMismatchError(msg)
    keys, coeffs = a.keys, a.coeffs
    for j in np.flatnonzero(shift):
        column = dims.n + int(j)
        powers = keys[:, column]
        key_parts = []
        coeff_parts = []
        for i in range(int(powers.max(initial=0)) + 1):
            rows = powers >= i
            new_keys = keys[rows].copy()
            new_keys[:, column] = i
            exponent = powers[rows] - i
            factor = comb(powers[rows], i, exact=False) * shift[j] ** exponent
            key_parts.append(new_keys)
            coeff_parts.append(coeffs[rows] * factor)
        keys, coeffs = _canonical(np.concatenate(key_parts), np.concatenate(coeff_parts))
    return FTSeries(dims, keys, coeffs, real=a.real)
