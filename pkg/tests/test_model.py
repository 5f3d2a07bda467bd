"""Tests for normal forms, charts, condition checkers and the pullback."""

from __future__ import annotations

import math

import numpy as np
import pytest

from subtori.errors import (
    ChartDomainError,
    ConditionError,
    DimensionMismatchError,
    SingularNormalFormError,
)
from subtori.model import (
    NormalForm,
    NormalFormMap,
    ParamChart,
    bordered_determinant,
    check_A0,
    check_A1_doubleprime,
    check_A1_rank,
    check_A3,
    classify_spectrum,
    corollary_radius,
    eigenvalues_of_JM,
    finite_difference_partials,
    integrable_part,
    numerical_rank,
    pullback_to_chart,
    select_principal_minor,
    symplectic_matrix,
)
from subtori.polynomials import PolynomialMap, parse_hamiltonian
from subtori.series import Dims, FTSeries, constant_term, gradient, hessian

DIMS = Dims(2, 1)
ROOT2 = math.sqrt(2.0)


def example_hamiltonian() -> FTSeries:
    return parse_hamiltonian(DIMS, "y1 + y2**2/2 + sqrt(2)/2*(u**2 + v**2)")


def line_chart(a2: float = 1.0) -> ParamChart:
    return ParamChart((1.0,), (2.0,), PolynomialMap.parse(["lam", "a2*lam"], 1, {"a2": a2}))


class TestSpectrum:
    """Test eigenvalues of J M and their classification."""

    def test_symplectic_matrix(self) -> None:
        np.testing.assert_array_equal(symplectic_matrix(1), [[0.0, 1.0], [-1.0, 0.0]])
        assert symplectic_matrix(0).shape == (0, 0)

    def test_elliptic(self) -> None:
        spectrum = eigenvalues_of_JM(ROOT2 * np.eye(2))
        np.testing.assert_allclose(spectrum.Omega, [-1j * ROOT2, 1j * ROOT2])
        assert classify_spectrum(spectrum) == "elliptic"
        assert spectrum.gap == pytest.approx(ROOT2)

    def test_hyperbolic(self) -> None:
        spectrum = eigenvalues_of_JM(np.diag([1.0, -1.0, 1.0, -3.0]))
        np.testing.assert_allclose(
            np.sort(spectrum.Omega.real), [-math.sqrt(3.0), -1.0, 1.0, math.sqrt(3.0)]
        )
        assert spectrum.classify() == "hyperbolic"

    def test_mixed(self) -> None:
        assert eigenvalues_of_JM(np.diag([1.0, 1.0, 1.0, -1.0])).classify() == "mixed"

    def test_no_normal_directions(self) -> None:
        spectrum = eigenvalues_of_JM(np.zeros((0, 0)))
        assert classify_spectrum(spectrum) == "none"
        assert spectrum.gap == math.inf

    def test_odd_size_rejected(self) -> None:
        with pytest.raises(DimensionMismatchError):
            eigenvalues_of_JM(np.eye(3))


class TestNormalForm:
    """Test NormalForm validation."""

    def test_series_blocks(self) -> None:
        N = NormalForm(DIMS, 2.0, [1.0, 1.3], np.diag([0.0, 1.0]), ROOT2 * np.eye(2), (1,))
        series = N.to_series()
        assert constant_term(series) == pytest.approx(2.0)
        np.testing.assert_allclose(gradient(series, "y").real, [1.0, 1.3])
        np.testing.assert_allclose(hessian(series, "u").real, ROOT2 * np.eye(2))
        assert N.d == 1
        np.testing.assert_allclose(N.omega_minor, [1.3])

    def test_arrays_are_read_only(self) -> None:
        N = NormalForm(DIMS, 0.0, [1.0, 1.0], np.eye(2), np.eye(2), (0, 1))
        with pytest.raises(ValueError):
            N.omega[0] = 3.0

    def test_singular_minor(self) -> None:
        with pytest.raises(SingularNormalFormError, match="principal minor"):
            NormalForm(DIMS, 0.0, [1.0, 1.0], np.diag([0.0, 1.0]), np.eye(2), (0,))

    def test_unsorted_minor(self) -> None:
        with pytest.raises(ValueError, match="sorted"):
            NormalForm(DIMS, 0.0, [1.0, 1.0], np.eye(2), np.eye(2), (1, 0))

    def test_asymmetric_A(self) -> None:
        with pytest.raises(ValueError, match="not symmetric"):
            NormalForm(DIMS, 0.0, [1.0, 1.0], [[1.0, 1.0], [0.0, 1.0]], np.eye(2))

    def test_singular_M(self) -> None:
        with pytest.raises(SingularNormalFormError, match="M is singular"):
            NormalForm(DIMS, 0.0, [1.0, 1.0], np.eye(2), np.diag([1.0, 0.0]))

    def test_wrong_shape(self) -> None:
        with pytest.raises(DimensionMismatchError):
            NormalForm(DIMS, 0.0, [1.0, 1.0, 1.0], np.eye(2), np.eye(2))

    def test_updated_revalidates(self) -> None:
        N = NormalForm(DIMS, 0.0, [1.0, 1.0], np.eye(2), np.eye(2), (0, 1))
        assert N.updated(e=1.5).e == 1.5
        with pytest.raises(SingularNormalFormError):
            N.updated(A=np.zeros((2, 2)))


class TestParamChart:
    """Test the parameter box."""

    def test_grid(self) -> None:
        chart = ParamChart((0.0, 0.0), (1.0, 2.0), PolynomialMap.parse(["lam1", "lam2"], 2), 3)
        points = chart.grid_points()
        assert points.shape == (9, 2)
        np.testing.assert_allclose(points[-1], [1.0, 2.0])
        np.testing.assert_allclose(chart.center, [0.5, 1.0])

    def test_require(self) -> None:
        chart = line_chart()
        np.testing.assert_allclose(chart.require([1.5]), [1.5])
        with pytest.raises(ChartDomainError, match="outside"):
            chart.require([2.5])

    def test_interior(self) -> None:
        chart = line_chart()
        assert chart.interior([1.5], 0.1)
        assert not chart.interior([1.05], 0.1)

    def test_bad_box(self) -> None:
        with pytest.raises(ValueError, match="empty domain"):
            ParamChart((2.0,), (1.0,), PolynomialMap.parse(["lam"], 1))
        with pytest.raises(DimensionMismatchError):
            ParamChart((0.0, 0.0), (1.0, 1.0), PolynomialMap.parse(["lam"], 1))


class TestNormalFormMap:
    def test_values_along_actions(self) -> None:
        nf_map = NormalFormMap(example_hamiltonian())
        ys = np.array([[1.3, 1.3], [2.0, 0.5]])
        np.testing.assert_allclose(nf_map.omega(ys), [[1.0, 1.3], [1.0, 0.5]])
        np.testing.assert_allclose(nf_map.A(ys[0]), np.diag([0.0, 1.0]))
        np.testing.assert_allclose(nf_map.M(ys[1]), ROOT2 * np.eye(2))
        assert nf_map.energy(ys[0]) == pytest.approx(1.3 + 0.5 * 1.3**2)

    def test_rejects_angle_dependence(self) -> None:
        wave = FTSeries.from_terms(DIMS, {((1, 0), (0, 0), (0, 0)): 1.0})
        with pytest.raises(ValueError, match="angles"):
            NormalFormMap(wave)


class TestRankAndMinors:
    """Test numerical rank and principal-minor selection."""

    def test_numerical_rank(self) -> None:
        assert numerical_rank(np.diag([1.0, 1e-12])) == 1
        assert numerical_rank(np.zeros((2, 2))) == 0
        assert numerical_rank(np.eye(3)) == 3

    def test_select_largest_minor(self) -> None:
        A = np.array([[1.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 0.0]])
        assert select_principal_minor(A, 1) == (1,)
        assert select_principal_minor(A, 2) == (0, 1)

    def test_ties_resolve_lexicographically(self) -> None:
        assert select_principal_minor(np.eye(3), 2) == (0, 1)

    def test_all_minors_singular(self) -> None:
        with pytest.raises(ConditionError):
            select_principal_minor(np.zeros((2, 2)), 1)

    def test_bordered_determinant(self) -> None:
        assert bordered_determinant([[1.0]], [1.3]) == pytest.approx(-(1.3**2))


class TestConditionCheckers:
    """Test A0, A1', A1'' and A3' on the one-pair example."""

    def test_A0_holds(self) -> None:
        check = check_A0(example_hamiltonian(), [1.3, 1.3])
        assert check.passed
        assert check.value == pytest.approx(2.0)

    def test_A0_fails_on_degenerate_normal_hessian(self) -> None:
        N_full = parse_hamiltonian(Dims(1, 1), "y1 + y1**2/2 + u**2/2")
        assert not check_A0(N_full, [1.0]).passed

    def test_A0_fails_on_normal_gradient(self) -> None:
        N_full = parse_hamiltonian(Dims(1, 1), "y1 + u + (u**2 + v**2)/2")
        check = check_A0(N_full, [1.0])
        assert not check.passed
        assert "N_u" in check.detail

    def test_A1_rank_full_on_tilted_line(self) -> None:
        nf_map = NormalFormMap(example_hamiltonian())
        rank = check_A1_rank(line_chart(1.0), nf_map, [1.5])
        assert rank.passed
        assert rank.rank == 2

    def test_A1_rank_deficient_on_flat_line(self) -> None:
        nf_map = NormalFormMap(example_hamiltonian())
        rank = check_A1_rank(line_chart(0.0), nf_map, [1.5])
        assert not rank.passed
        assert rank.rank == 1

    def test_A1_rank_needs_room_for_differences(self) -> None:
        nf_map = NormalFormMap(example_hamiltonian())
        with pytest.raises(ChartDomainError, match="boundary"):
            check_A1_rank(line_chart(), nf_map, [1.0])

    def test_A1_doubleprime(self) -> None:
        N = NormalForm(DIMS, 0.0, [1.0, 1.3], np.diag([0.0, 1.0]), ROOT2 * np.eye(2), (1,))
        check = check_A1_doubleprime(N)
        assert check.passed
        assert check.value == pytest.approx(-(1.3**2))

    def test_A3_constant_rank(self) -> None:
        nf_map = NormalFormMap(example_hamiltonian())
        check = check_A3(line_chart(), nf_map, (1,), resolution=11)
        assert check.passed
        assert check.value == pytest.approx(1.0)

    def test_A3_rank_changes(self) -> None:
        N_full = parse_hamiltonian(DIMS, "y1 + y2**3/3 + (u**2 + v**2)/2")
        chart = ParamChart((-1.0,), (1.0,), PolynomialMap.parse(["lam", "lam"], 1), grid=5)
        check = check_A3(chart, NormalFormMap(N_full), (1,))
        assert not check.passed


class TestFiniteDifferences:
    def test_first_derivative(self) -> None:
        def cube(points: np.ndarray) -> np.ndarray:
            return np.stack([points[:, 0] ** 2, points[:, 0] ** 3], axis=1)

        orders, columns = finite_difference_partials(cube, [1.0], 1, 1e-3)
        assert orders == [(0,), (1,)]
        np.testing.assert_allclose(columns[:, 0], [1.0, 1.0])
        np.testing.assert_allclose(columns[:, 1], [2.0, 3.0], rtol=1e-5)


class TestPullback:
    """Test expansion of N + P around y(lam)."""

    def test_exact_normal_form(self) -> None:
        N_full = example_hamiltonian()
        model = pullback_to_chart(
            N_full, FTSeries.zero(DIMS), line_chart(), [1.3], eps0=1e-8, gamma0=0.1
        )
        np.testing.assert_allclose(model.N.omega, [1.0, 1.3])
        np.testing.assert_allclose(model.N.A, np.diag([0.0, 1.0]))
        assert model.N.e == pytest.approx(1.3 + 0.5 * 1.3**2)
        assert model.N.minor_indices == (1,)
        assert not model.P
        assert model.weights.s == pytest.approx(corollary_radius(DIMS, 1e-8, 0.1))

    def test_higher_order_terms_move_to_perturbation(self) -> None:
        N_full = parse_hamiltonian(DIMS, "y1 + y2**3/3 + (u**2 + v**2)/2")
        chart = ParamChart((1.0,), (2.0,), PolynomialMap.parse(["lam", "lam"], 1))
        model = pullback_to_chart(
            N_full, FTSeries.zero(DIMS), chart, [1.5], eps0=1e-8, gamma0=0.1, s0=1e-3
        )
        np.testing.assert_allclose(model.N.A, np.diag([0.0, 3.0]))
        assert model.P.coefficient((0, 0), (0, 3), (0, 0)) == pytest.approx(1.0 / 3.0)
        assert len(model.P) == 1
        assert model.weights.s == 1e-3

    def test_integrable_terms_split_off(self) -> None:
        N_full = parse_hamiltonian(DIMS, "y1 + y2**3/3 + (u**2 + v**2)/2")
        P_full = FTSeries.from_terms(
            DIMS, {((0, 0), (0, 0), (2, 1)): 0.1, ((1, 0), (0, 0), (0, 0)): 0.2}
        )
        chart = ParamChart((1.0,), (2.0,), PolynomialMap.parse(["lam", "lam"], 1))
        model = pullback_to_chart(N_full, P_full, chart, [1.5], eps0=1e-8, gamma0=0.1, s0=1e-3)
        split = model.split_integrable()
        assert split.integrable is not None
        assert len(split.integrable) == 1
        assert split.integrable.coefficient((0, 0), (0, 3), (0, 0)) == pytest.approx(1.0 / 3.0)
        assert len(split.P) == 2
        assert split.hamiltonian == model.hamiltonian
        assert split.split_integrable() is split

    def test_integrable_part_keeps_angle_and_normal_terms(self) -> None:
        P = FTSeries.from_terms(  # noqa: N806
            DIMS,
            {
                ((0, 0), (2, 1), (0, 0)): 1.0,
                ((0, 0), (1, 0), (2, 0)): 2.0,
                ((1, 0), (3, 0), (0, 0)): 3.0,
                ((0, 0), (2, 0), (0, 0)): 4.0,
            },
        )
        moved, rest = integrable_part(P)
        assert len(moved) == 1
        assert moved.coefficient((0, 0), (2, 1), (0, 0)) == pytest.approx(1.0)
        assert len(rest) == 3
        assert moved + rest == P

    def test_perturbation_is_shifted(self) -> None:
        P_full = FTSeries.from_terms(DIMS, {((1, 0), (0, 1), (0, 0)): 0.5}, real=False)
        model = pullback_to_chart(
            example_hamiltonian(), P_full, line_chart(), [1.3], eps0=1e-8, gamma0=0.1
        )
        assert model.P.coefficient((1, 0), (0, 0), (0, 0)) == pytest.approx(0.65)
        assert model.P.coefficient((1, 0), (0, 1), (0, 0)) == pytest.approx(0.5)

    def test_outside_box(self) -> None:
        with pytest.raises(ChartDomainError):
            pullback_to_chart(
                example_hamiltonian(), FTSeries.zero(DIMS), line_chart(), [3.0], eps0=1e-8, gamma0=0.1
            )

    def test_A0_failure(self) -> None:
        dims = Dims(1, 1)
        N_full = parse_hamiltonian(dims, "y1 + y1**2/2 + u**2/2")
        chart = ParamChart((1.0,), (2.0,), PolynomialMap.parse(["lam"], 1))
        with pytest.raises(ConditionError, match="A0"):
            pullback_to_chart(N_full, FTSeries.zero(dims), chart, [1.5], eps0=1e-8, gamma0=0.1)
