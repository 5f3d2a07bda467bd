"""Tests for polynomial parsing of Hamiltonians and chart maps."""

from __future__ import annotations

import numpy as np
import pytest

from subtori.errors import ScenarioFormatError
from subtori.polynomials import (
    PolynomialMap,
    hamiltonian_variables,
    parse_hamiltonian,
    parse_polynomial,
)
from subtori.series import Dims, gradient, hessian


class TestVariables:
    def test_interleaved_normal_pairs(self) -> None:
        assert hamiltonian_variables(Dims(2, 2)) == ("y1", "y2", "u1", "v1", "u2", "v2")


class TestParsePolynomial:
    """Test the sympy-backed parser."""

    def test_constants_are_substituted(self) -> None:
        terms = parse_polynomial("a1*y1^2 + 2*y1*y2", ("y1", "y2"), {"a1": 0.5})
        assert terms == {(2, 0): 0.5, (1, 1): 2.0}

    def test_products_are_expanded(self) -> None:
        terms = parse_polynomial("(lam1 + 1)**2", ("lam1",))
        assert terms == {(2,): 1.0, (1,): 2.0, (0,): 1.0}

    def test_single_variable_alias(self) -> None:
        assert parse_polynomial("3*lam", ("lam1",)) == {(1,): 3.0}

    def test_unknown_symbol(self) -> None:
        with pytest.raises(ScenarioFormatError, match="unknown symbols") as info:
            parse_polynomial("y1 + z", ("y1",), field_name="hamiltonian.expression")
        assert info.value.field == "hamiltonian.expression"

    def test_not_a_polynomial(self) -> None:
        with pytest.raises(ScenarioFormatError, match="not a polynomial"):
            parse_polynomial("sin(y1)", ("y1",))

    def test_syntax_error(self) -> None:
        with pytest.raises(ScenarioFormatError, match="cannot parse"):
            parse_polynomial("y1 +* 2", ("y1",))


class TestParseHamiltonian:
    def test_normal_form_blocks(self) -> None:
        dims = Dims(2, 1)
        N = parse_hamiltonian(dims, "y1 + y1**2/2 + y2**2 + (u**2 + 4*v**2)/2")
        np.testing.assert_allclose(gradient(N, "y").real, [1.0, 0.0])
        np.testing.assert_allclose(hessian(N, "y").real, [[1.0, 0.0], [0.0, 2.0]])
        np.testing.assert_allclose(hessian(N, "u").real, [[1.0, 0.0], [0.0, 4.0]])
        assert N.real


class TestPolynomialMap:
    """Test chart maps R^n0 -> R^n."""

    def test_line(self) -> None:
        chart = PolynomialMap.parse(["lam", "1 - lam"], 1)
        np.testing.assert_allclose(chart([0.25]), [0.25, 0.75])
        assert chart.texts == ("lam", "1 - lam")
        assert chart.dimension == 2

    def test_vectorized(self) -> None:
        chart = PolynomialMap.parse(["lam1*lam2", "lam1^2"], 2)
        values = chart(np.array([[1.0, 2.0], [3.0, -1.0]]))
        np.testing.assert_allclose(values, [[2.0, 1.0], [-3.0, 9.0]])

    def test_constant_component(self) -> None:
        chart = PolynomialMap.parse(["c"], 1, {"c": 2.5})
        np.testing.assert_allclose(chart([7.0]), [2.5])

    def test_error_names_component(self) -> None:
        with pytest.raises(ScenarioFormatError) as info:
            PolynomialMap.parse(["lam", "mu"], 1)
        assert info.value.field == "chart.map[1]"
