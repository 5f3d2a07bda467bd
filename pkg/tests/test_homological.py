"""Tests for the homological equation and generator assembly."""

from __future__ import annotations

import math
from collections.abc import Callable

import numpy as np
import pytest

from subtori.errors import DimensionMismatchError, ResonantDivisorError, SingularNormalFormError
from subtori.homological import (
    DivisorGuard,
    build_generator,
    kronecker_operator,
    kronecker_spectrum,
    solve_matrix,
    solve_scalar,
    solve_vector,
    solve_zero_mode,
    vector_operator,
)
from subtori.model import NormalForm, eigenvalues_of_JM, symplectic_matrix
from subtori.scenarios import Scenario, example_4_1, example_4_2, example_4_3, initial_model
from subtori.series import (
    Dims,
    FTSeries,
    NormWeights,
    average_over_torus,
    conjugate_symmetric,
    linear_form,
    majorant_norm,
    poisson_bracket,
    realify,
    truncate,
)

ROOT2 = math.sqrt(2.0)
GUARD = DivisorGuard(gamma=0.1, tau=2.0)
WEIGHTS = NormWeights(0.1, 0.5)


def flat_form(A: np.ndarray | None = None, omega: tuple[float, float] = (1.0, ROOT2)) -> NormalForm:
    A = np.zeros((2, 2)) if A is None else A
    minor = (0, 1) if np.linalg.matrix_rank(A) == 2 else ()
    return NormalForm(Dims(2, 0), 0.0, omega, A, np.zeros((0, 0)), minor)


def elliptic_form() -> NormalForm:
    return NormalForm(Dims(1, 1), 0.0, [1.0], [[0.0]], ROOT2 * np.eye(2))


def term(dims: Dims, k: tuple[int, ...], l: tuple[int, ...], p: tuple[int, ...]) -> FTSeries:
    return FTSeries.from_terms(dims, {(k, l, p): 1.0})


def assert_multiset_close(actual: np.ndarray, expected: np.ndarray) -> None:
    remaining = list(actual)
    for value in expected:
        index = int(np.argmin([abs(a - value) for a in remaining]))
        assert abs(remaining.pop(index) - value) < 1e-10


class TestDivisorGuard:
    def test_floors(self) -> None:
        base = 0.1 / 9.0
        assert GUARD.floor_scalar((1, 2)) == pytest.approx(base / 2)
        assert GUARD.floor_vector((1, 2), 1) == pytest.approx(base**2)
        assert GUARD.floor_matrix((1, 2), 1) == pytest.approx(base**4)


class TestOperators:
    """Test the u-linear and u-quadratic cell operators."""

    def test_vector_operator(self) -> None:
        op = vector_operator(1j, ROOT2 * np.eye(2))
        assert abs(np.linalg.det(op)) == pytest.approx(1.0)

    def test_kronecker_spectrum_matches_operator(self) -> None:
        M = np.diag([1.0, 2.0, 3.0, 0.5])
        Omega = eigenvalues_of_JM(M).Omega
        op = kronecker_operator(0.7j, M)
        assert_multiset_close(np.linalg.eigvals(op), kronecker_spectrum(0.7j, Omega))


class TestCellSolves:
    """Test single Fourier cells."""

    def test_scalar_constant_frequency(self) -> None:
        solved = solve_scalar((1, 0), {(0, 0): 2.0}, flat_form(), GUARD)
        assert solved.coeffs == {(0, 0): pytest.approx(-2.0 / 1j)}
        assert solved.record.kind == "scalar"
        assert solved.record.margin == pytest.approx(1.0)
        assert solved.record.neumann_ratio == 0.0

    def test_scalar_neumann_expansion(self) -> None:
        solved = solve_scalar((1, 0), {(0, 0): 1.0}, flat_form(np.eye(2)), GUARD, 2, s=0.1)
        assert solved.coeffs[(0, 0)] == pytest.approx(1j)
        assert solved.coeffs[(1, 0)] == pytest.approx(-1j)
        assert solved.coeffs[(2, 0)] == pytest.approx(1j)
        assert (3, 0) not in solved.coeffs
        assert solved.record.neumann_ratio == pytest.approx(0.1)

    def test_scalar_resonance(self) -> None:
        with pytest.raises(ResonantDivisorError) as info:
            solve_scalar((1, -1), {(0, 0): 1.0}, flat_form(omega=(1.0, 1.0)), GUARD)
        assert info.value.k == (1, -1)
        assert info.value.kind == "scalar"
        assert info.value.exit_code == 2

    def test_vector_resonance(self) -> None:
        N = NormalForm(Dims(1, 1), 0.0, [ROOT2], [[0.0]], ROOT2 * np.eye(2))
        with pytest.raises(ResonantDivisorError, match="vector"):
            solve_vector((1,), {(0,): np.array([1.0, 0.0])}, N, GUARD)

    def test_vector_solution_solves_operator(self) -> None:
        rhs = np.array([1.0, -2.0], dtype=complex)
        solved = solve_vector((1,), {(0,): rhs}, elliptic_form(), GUARD)
        op = vector_operator(1j, ROOT2 * np.eye(2))
        np.testing.assert_allclose(op @ solved.coeffs[(0,)], -rhs)

    def test_zero_mode(self) -> None:
        M = ROOT2 * np.eye(2)
        f001, f011 = solve_zero_mode([0.3, -0.2], np.zeros((2, 1)), M)
        J = np.array([[0.0, 1.0], [-1.0, 0.0]])
        np.testing.assert_allclose(M @ J @ f001, [-0.3, 0.2])
        np.testing.assert_allclose(f011, np.zeros((2, 1)))

    def test_zero_mode_singular(self) -> None:
        with pytest.raises(SingularNormalFormError):
            solve_zero_mode([1.0, 0.0], np.zeros((2, 1)), np.zeros((2, 2)))


class TestBuildGenerator:
    """The generator cancels every solved cell of the perturbation."""

    def test_scalar_cells_cancel(self) -> None:
        dims = Dims(2, 0)
        R = realify(term(dims, (1, 0), (0, 0), ()) + term(dims, (2, -1), (1, 0), ()))
        generator = build_generator(flat_form(), R, GUARD)
        assert majorant_norm(generator.residual, WEIGHTS) < 1e-12
        assert generator.F.real
        assert conjugate_symmetric(generator.F)
        assert {rec.k for rec in generator.divisor_log} == {(1, 0), (2, -1)}

    def test_overflow_is_tagged(self) -> None:
        dims = Dims(2, 0)
        R = realify(term(dims, (1, 0), (0, 0), ()))
        generator = build_generator(flat_form(np.eye(2)), R, GUARD, D_y=2)
        assert majorant_norm(generator.residual, WEIGHTS) < 1e-12
        assert generator.overflow
        assert int(generator.overflow.degrees.min()) == 3

    def test_normal_cells_cancel(self) -> None:
        dims = Dims(1, 1)
        R = realify(
            term(dims, (1,), (0,), (1, 0))
            + term(dims, (1,), (0,), (1, 1))
            + term(dims, (2,), (0,), (0, 2))
        )
        generator = build_generator(elliptic_form(), R, GUARD)
        assert majorant_norm(generator.residual, WEIGHTS) < 1e-12
        kinds = sorted(rec.kind for rec in generator.divisor_log)
        assert kinds == ["matrix", "matrix", "vector"]

    def test_zero_mode_cells_cancel(self) -> None:
        dims = Dims(1, 1)
        R = linear_form(dims, "u", [0.3, -0.2]) + term(dims, (0,), (1,), (0, 1))
        generator = build_generator(elliptic_form(), R, GUARD)
        assert majorant_norm(generator.residual, WEIGHTS) < 1e-12
        assert [rec.kind for rec in generator.divisor_log] == ["zero"]
        assert (generator.F.k == 0).all()

    def test_averaged_terms_are_left_alone(self) -> None:
        dims = Dims(2, 0)
        R = term(dims, (0, 0), (2, 0), ())
        generator = build_generator(flat_form(), R, GUARD)
        assert not generator.F
        assert not generator.divisor_log

    def test_resonant_cell_raises(self) -> None:
        dims = Dims(2, 0)
        R = realify(term(dims, (1, -1), (0, 0), ()))
        with pytest.raises(ResonantDivisorError):
            build_generator(flat_form(omega=(1.0, 1.0)), R, GUARD)

    def test_normal_degree_above_two(self) -> None:
        dims = Dims(1, 1)
        with pytest.raises(ValueError, match="normal degree 3"):
            build_generator(elliptic_form(), realify(term(dims, (1,), (0,), (3, 0))), GUARD)

    def test_dimension_mismatch(self) -> None:
        with pytest.raises(DimensionMismatchError):
            build_generator(elliptic_form(), FTSeries.zero(Dims(2, 0)), GUARD)

    def test_translation_is_attached_later(self) -> None:
        dims = Dims(2, 0)
        generator = build_generator(flat_form(), realify(term(dims, (1, 0), (0, 0), ())), GUARD)
        np.testing.assert_array_equal(generator.y_star, [0.0, 0.0])
        moved = generator.with_translation([0.0, -0.5])
        np.testing.assert_array_equal(moved.y_star, [0.0, -0.5])
        assert moved.F == generator.F


def positive_normal_matrix(rng: np.random.Generator) -> np.ndarray:
    root = 0.5 * rng.normal(size=(4, 4))
    return root @ root.T + np.eye(4)


def brute_force_matrix_solve(
    delta0: complex, M: np.ndarray, P: np.ndarray  # noqa: N803
) -> tuple[np.ndarray, float]:
    """Solve ``delta0 X + M J X - X J M = -P`` by assembling the operator column by column."""
    J = symplectic_matrix(2)  # noqa: N806
    columns = []
    for index in range(16):
        unit = np.zeros(16, dtype=complex)
        unit[index] = 1.0
        E = unit.reshape(4, 4)  # noqa: N806
        columns.append((delta0 * E + M @ J @ E - E @ J @ M).reshape(-1))
    op = np.column_stack(columns)
    return np.linalg.solve(op, -P.reshape(-1)).reshape(4, 4), float(np.linalg.cond(op))


class TestRandomNormalCells:
    """Two normal pairs against dense linear algebra."""

    @pytest.mark.parametrize("seed", range(100))
    def test_matrix_cell_matches_dense_solve(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        while True:
            M = rng.normal(size=(4, 4))  # noqa: N806
            M = 0.5 * (M + M.T)  # noqa: N806
            omega = rng.uniform(0.5, 2.0)
            _, cond = brute_force_matrix_solve(1j * omega, M, np.eye(4))
            if cond < 1e3 and eigenvalues_of_JM(M).gap > 1e-3:
                break
        P = rng.normal(size=(4, 4))  # noqa: N806
        P = P + P.T  # noqa: N806
        expected, _ = brute_force_matrix_solve(1j * omega, M, P)
        N = NormalForm(Dims(1, 2), 0.0, [omega], [[0.0]], M)  # noqa: N806
        solved = solve_matrix((1,), {(0,): P}, N, DivisorGuard(1e-12, 2.0), 2)
        X = solved.coeffs[(0,)]  # noqa: N806
        np.testing.assert_allclose(X, expected, rtol=0.0, atol=1e-12 * max(1.0, np.abs(expected).max()))
        np.testing.assert_allclose(X, X.T, atol=1e-12 * max(1.0, np.abs(X).max()))

    @pytest.mark.parametrize("seed", range(50))
    def test_vector_spectrum_is_shifted_normal_spectrum(self, seed: int) -> None:
        rng = np.random.default_rng(1000 + seed)
        M = positive_normal_matrix(rng)  # noqa: N806
        delta0 = 1j * rng.uniform(0.1, 3.0)
        Omega = eigenvalues_of_JM(M).Omega  # noqa: N806
        assert_multiset_close(np.linalg.eigvals(vector_operator(delta0, M)), delta0 - Omega)

    @pytest.mark.parametrize("seed", range(50))
    def test_kronecker_spectrum_is_pairwise(self, seed: int) -> None:
        rng = np.random.default_rng(2000 + seed)
        M = positive_normal_matrix(rng)  # noqa: N806
        delta0 = 1j * rng.uniform(0.1, 3.0)
        Omega = eigenvalues_of_JM(M).Omega  # noqa: N806
        assert_multiset_close(
            np.linalg.eigvals(kronecker_operator(delta0, M)), kronecker_spectrum(delta0, Omega)
        )


class TestScenarioResiduals:
    """The homological residual rebuilt from brackets on the built-in scenarios."""

    @pytest.mark.parametrize("scenario", [example_4_1, example_4_2, example_4_3])
    def test_residual_vanishes(self, scenario: Callable[[], Scenario]) -> None:
        model, _ = initial_model(scenario(), eps0=1e-6, amplitude_mode="absolute", k_max=8)
        N = model.N  # noqa: N806
        R = truncate(model.P, 8, 2)  # noqa: N806
        generator = build_generator(N, R, DivisorGuard(1e-3, 3.0), 2)
        assert generator.F

        zero_mode = (R.k == 0).all(axis=1) & (R.p.sum(axis=1) == 1)
        full = poisson_bracket(N.to_series(), generator.F) + R - average_over_torus(R)
        full = full + R.select(zero_mode)
        residual = full.select(full.degrees <= 2)
        weights = NormWeights(0.25, 0.5)
        assert majorant_norm(residual, weights) <= 1e-11 * majorant_norm(R, weights)
