"""Polynomial expressions for scenario files, parsed with sympy.

Hamiltonians are written in ``y1..yn`` and the interleaved normal pairs
``u1, v1, ..., um, vm`` (``u, v`` when ``m == 1``). Chart maps are written in
``lam1..lam_n0`` (``lam`` when ``n0 == 1``). Named constants are substituted
before expansion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
import sympy as sp
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from subtori.errors import ScenarioFormatError
from subtori.series import Dims, FTSeries

if TYPE_CHECKING:
    from collections.abc import Mapping, Sequence

    from numpy.typing import ArrayLike, NDArray

_TRANSFORMS = (*standard_transformations, convert_xor)


def hamiltonian_variables(dims: Dims) -> tuple[str, ...]:
    """Variable names in packed order: actions, then interleaved normal pairs."""
    names = [f"y{j + 1}" for j in range(dims.n)]
    for q in range(dims.m):
        names.extend([f"u{q + 1}", f"v{q + 1}"])
    return tuple(names)


def chart_variables(n0: int) -> tuple[str, ...]:
    return tuple(f"lam{j + 1}" for j in range(n0))


def _aliases(variables: Sequence[str]) -> dict[str, str]:
    aliases: dict[str, str] = {}
    if "lam1" in variables and "lam2" not in variables:
        aliases["lam"] = "lam1"
    if "u1" in variables and "u2" not in variables:
        aliases["u"] = "u1"
        aliases["v"] = "v1"
    return aliases


def parse_polynomial(
    text: str,
    variables: Sequence[str],
    constants: Mapping[str, float] | None = None,
    *,
    field_name: str = "expression",
) -> dict[tuple[int, ...], float]:
    """Parse ``text`` into ``{exponent tuple: coefficient}`` over ``variables``.

    Raises:
        ScenarioFormatError: The text does not parse, or leaves unknown symbols
    """
    symbols = {name: sp.Symbol(name) for name in variables}
    local: dict[str, object] = dict(symbols)
    for alias, target in _aliases(variables).items():
        local[alias] = symbols[target]
    for name, value in (constants or {}).items():
        local[name] = sp.Float(value) if not isinstance(value, int) else sp.Integer(value)
    try:
        expr = parse_expr(text, local_dict=local, transformations=_TRANSFORMS)
    except (SyntaxError, TypeError, sp.SympifyError) as e:
        msg = f"cannot parse {text!r}: {e}"
        raise ScenarioFormatError(msg, field=field_name) from e
    expr = sp.expand(sp.sympify(expr))
    unknown = sorted(str(s) for s in expr.free_symbols if str(s) not in symbols)
    if unknown:
        msg = f"unknown symbols {unknown} in {text!r}"
        raise ScenarioFormatError(msg, field=field_name)
    ordered = [symbols[name] for name in variables]
    if not ordered:
        return {(): float(expr)}
    try:
        poly = sp.Poly(expr, *ordered)
    except sp.PolynomialError as e:
        msg = f"{text!r} is not a polynomial: {e}"
        raise ScenarioFormatError(msg, field=field_name) from e
    return {tuple(int(v) for v in monom): float(coeff) for monom, coeff in poly.terms()}


def series_from_polynomial(dims: Dims, terms: Mapping[tuple[int, ...], float]) -> FTSeries:
    """A ``k = 0`` series from exponents over :func:`hamiltonian_variables`."""
    keys = np.zeros((len(terms), dims.width), dtype=np.int64)
    coeffs = np.zeros(len(terms))
    for row, (monom, coeff) in enumerate(terms.items()):
        keys[row, dims.n :] = monom
        coeffs[row] = coeff
    return FTSeries(dims, keys, coeffs, real=True)


def parse_hamiltonian(
    dims: Dims,
    text: str,
    constants: Mapping[str, float] | None = None,
) -> FTSeries:
    """Parse an integrable Hamiltonian ``N(y, u)`` into a series."""
    terms = parse_polynomial(text, hamiltonian_variables(dims), constants, field_name="hamiltonian")
    return series_from_polynomial(dims, terms)


@dataclass(frozen=True)
class PolynomialMap:
    """A polynomial map ``R^{n0} -> R^n`` given component by component."""

    n0: int
    """Number of input variables."""

    components: tuple[dict[tuple[int, ...], float], ...]
    """Exponent -> coefficient tables, one per output component."""

    texts: tuple[str, ...] = field(default=())
    """Source expressions, kept for export."""

    @classmethod
    def parse(
        cls,
        texts: Sequence[str],
        n0: int,
        constants: Mapping[str, float] | None = None,
    ) -> PolynomialMap:
        variables = chart_variables(n0)
        components = tuple(
            parse_polynomial(text, variables, constants, field_name=f"chart.map[{i}]")
            for i, text in enumerate(texts)
        )
        return cls(n0=n0, components=components, texts=tuple(texts))

    @property
    def dimension(self) -> int:
        return len(self.components)

    def __call__(self, points: ArrayLike) -> NDArray[np.float64]:
        """Evaluate at one point ``(n0,)`` or many ``(P, n0)``."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = pts.reshape(-1, self.n0)
        out = np.zeros((pts.shape[0], self.dimension))
        for j, table in enumerate(self.components):
            for monom, coeff in table.items():
                out[:, j] += coeff * np.prod(pts ** np.array(monom, dtype=float), axis=1)
        return out[0] if single else out
