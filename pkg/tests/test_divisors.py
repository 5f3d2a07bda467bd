"""Tests for step budgets, lattice enumeration, Melnikov scans and sweeps."""

from __future__ import annotations

import math

import numpy as np
import pytest

from subtori.divisors import (
    chart_extension_sweep,
    compute_budget,
    effective_cutoff,
    estimate_sigma_and_K,
    fit_measure_scaling,
    fourier_modes,
    gamma_exponent_E,
    gamma_sum,
    initial_budget,
    lattice_ball,
    lattice_shell_count,
    melnikov_cutoff,
    melnikov_scan,
    next_budget,
    nominal_cutoff,
    normal_combinations,
    resonance_zone,
    surviving_set_sweep,
    tail_integral_bound,
)
from subtori.model import NormalForm, NormalFormMap, ParamChart
from subtori.polynomials import PolynomialMap, parse_hamiltonian
from subtori.scenarios import example_4_3
from subtori.series import Dims

FLAT = Dims(2, 0)


def flat_chart() -> ParamChart:
    return ParamChart((0.5,), (1.5,), PolynomialMap.parse(["1", "lam"], 1), grid=101)


def flat_map() -> NormalFormMap:
    return NormalFormMap(parse_hamiltonian(FLAT, "y1**2/2 + y2**2/2"))


class TestCutoffs:
    """Test nominal and effective Fourier cutoffs."""

    def test_nominal_cutoff_is_exact(self) -> None:
        assert nominal_cutoff(1e-8) == 19**9
        assert isinstance(nominal_cutoff(1e-300), int)

    def test_exact_power_of_e(self) -> None:
        assert nominal_cutoff(math.exp(-10.0)) == 11**9

    def test_effective_cutoff_is_minimal(self) -> None:
        r, r_plus, eps = 0.5, 0.375, 1e-8
        K = effective_cutoff(2, eps, r, r_plus, nominal_cutoff(eps))
        assert tail_integral_bound(2, K, r, r_plus) <= eps
        assert tail_integral_bound(2, K - 1, r, r_plus) > eps

    def test_effective_cutoff_is_capped(self) -> None:
        assert effective_cutoff(2, 1e-8, 0.5, 0.375, 10) == 10


class TestLattice:
    def test_shell_counts(self) -> None:
        assert lattice_shell_count(2, 0) == 1
        assert [lattice_shell_count(2, j) for j in range(1, 5)] == [4, 8, 12, 16]
        assert lattice_shell_count(3, 1) == 6

    def test_ball_size_matches_shells(self) -> None:
        ball = lattice_ball(3, 4)
        assert ball.shape[0] == sum(lattice_shell_count(3, j) for j in range(5))
        assert (np.abs(ball).sum(axis=1) <= 4).all()

    def test_half_lattice(self) -> None:
        full = fourier_modes(2, 2)
        half = fourier_modes(2, 2, half=True)
        assert full.shape[0] == 12
        assert half.shape[0] == 6
        assert not (half == 0).all(axis=1).any()

    def test_normal_combinations(self) -> None:
        assert normal_combinations(1).shape == (13, 2)
        assert normal_combinations(0).shape == (1, 0)


class TestBudget:
    """Test the per-step parameter ladder."""

    def test_ladder(self) -> None:
        budget = initial_budget(Dims(2, 1), r0=0.5, s0=1e-20, gamma0=0.1, eps0=1e-8, tau=3.0)
        assert budget.r_plus == pytest.approx(0.375)
        assert budget.gamma_plus == pytest.approx(0.075)
        assert budget.eps_plus == pytest.approx(1e-8 ** (10 / 9))
        assert budget.s_plus == pytest.approx(1e-8 ** (1 / 3) * 1e-20 / 8)
        assert budget.K_eff <= budget.K_plus
        assert budget.scale(Dims(2, 1)) == pytest.approx(1e-8 * 1e-40 * 0.1**12)

    def test_next_budget(self) -> None:
        budget = initial_budget(Dims(2, 1), r0=0.5, s0=1e-3, gamma0=0.1, eps0=1e-8, tau=3.0)
        following = next_budget(Dims(2, 1), budget)
        assert following.step == 1
        assert following.r == budget.r_plus
        assert following.eps == budget.eps_plus
        assert following.r0 == budget.r0

    def test_rejects_out_of_range(self) -> None:
        with pytest.raises(ValueError, match="eps"):
            initial_budget(Dims(2, 1), r0=0.5, s0=1e-3, gamma0=0.1, eps0=1.0, tau=3.0)

    def test_strip_must_exceed_half_initial(self) -> None:
        with pytest.raises(ValueError, match="must exceed"):
            compute_budget(
                Dims(2, 1), r=0.2, s=1e-3, gamma=0.1, eps=1e-8, tau=3.0, r0=0.5, gamma0=0.1
            )

    def test_gamma_exponent(self) -> None:
        assert gamma_exponent_E(Dims(2, 1), 3.0) == pytest.approx(3.0 * 3 * 4 + 4 * 2)
        assert gamma_exponent_E(Dims(2, 0), 3.0) == 0.0


class TestGammaSum:
    def test_matches_direct_sum(self) -> None:
        r, r_plus = 0.5, 0.375
        log_gamma, value = gamma_sum(FLAT, 2.0, r, r_plus, 3)
        direct = sum(4 * j * math.exp(-j * (r - r_plus) / 8) for j in range(1, 4))
        assert value == pytest.approx(direct)
        assert log_gamma == pytest.approx(math.log(direct))

    def test_empty_sum(self) -> None:
        assert gamma_sum(FLAT, 2.0, 0.5, 0.375, 0) == (-math.inf, 0.0)


class TestMelnikovScan:
    """Test the divisor certificate."""

    def test_nonresonant(self) -> None:
        N = NormalForm(FLAT, 0.0, [1.0, math.sqrt(2.0)], np.eye(2), np.zeros((0, 0)))
        certificate = melnikov_scan(N, None, 0.01, 2.0, 4)
        assert certificate.passed
        assert certificate.entry_count == fourier_modes(2, 4).shape[0]
        assert not certificate.failures()

    def test_resonance_found(self) -> None:
        N = NormalForm(FLAT, 0.0, [1.0, 1.0], np.eye(2), np.zeros((0, 0)))
        certificate = melnikov_scan(N, None, 0.01, 2.0, 2, half=True, lam=[1.0])
        assert not certificate.passed
        worst = certificate.worst()
        assert worst.k == (1, -1)
        assert worst.margin == pytest.approx(0.0)
        assert certificate.lam == (1.0,)

    def test_half_scan_agrees(self) -> None:
        N = NormalForm(Dims(2, 1), 0.0, [1.0, 1.3], np.eye(2), math.sqrt(2.0) * np.eye(2))
        full = melnikov_scan(N, None, 0.1, 3.0, 5)
        half = melnikov_scan(N, None, 0.1, 3.0, 5, half=True)
        assert full.passed == half.passed
        assert full.worst().margin == pytest.approx(half.worst().margin)

    def test_cutoff_must_be_positive(self) -> None:
        N = NormalForm(FLAT, 0.0, [1.0, 1.0], np.eye(2), np.zeros((0, 0)))
        with pytest.raises(ValueError, match="cutoff"):
            melnikov_scan(N, None, 0.1, 2.0, 0)


class TestSweeps:
    """Test grid sweeps of the chart."""

    def test_smaller_gamma_excludes_less(self) -> None:
        chart, nf_map = flat_chart(), flat_map()
        coarse = surviving_set_sweep(chart, nf_map, 0.1, 2.0, 6, resolution=51)
        fine = surviving_set_sweep(chart, nf_map, 0.01, 2.0, 6, resolution=51)
        assert 0.0 < coarse.excluded_fraction <= 1.0
        assert fine.excluded_fraction <= coarse.excluded_fraction
        assert (fine.passed | ~coarse.passed).all()

    def test_rational_point_is_excluded(self) -> None:
        result = surviving_set_sweep(flat_chart(), flat_map(), 0.01, 2.0, 4, resolution=11)
        center = int(np.argmin(np.abs(result.points[:, 0] - 1.0)))
        assert not result.passed[center]
        assert result.worst_margin[center] == pytest.approx(0.0, abs=1e-12)

    def test_workers_give_same_result(self) -> None:
        chart, nf_map = flat_chart(), flat_map()
        serial = surviving_set_sweep(chart, nf_map, 0.05, 2.0, 5, resolution=41)
        parallel = surviving_set_sweep(chart, nf_map, 0.05, 2.0, 5, resolution=41, workers=2)
        np.testing.assert_array_equal(serial.passed, parallel.passed)
        np.testing.assert_allclose(serial.worst_margin, parallel.worst_margin)

    def test_resonance_zone(self) -> None:
        points, failing = resonance_zone(flat_chart(), flat_map(), (1, -1), (), 0.1, 1.0)
        lam = points[failing, 0]
        assert lam.size > 0
        assert (np.abs(lam - 1.0) <= 0.05 + 1e-9).all()
        assert np.isclose(points[:, 0], 1.0).any()

    @pytest.mark.parametrize(("k", "offset"), [((1, -1, 0), 0.0), ((1, 1, -3), 3.0)])
    def test_plane_resonances_are_lines(self, k: tuple[int, int, int], offset: float) -> None:
        scenario = example_4_3()
        nf_map = NormalFormMap(scenario.N_full)
        points, failing = resonance_zone(scenario.chart, nf_map, k, (), 0.01, 1.0)
        selected = points[failing]
        assert selected.shape[0] >= 20
        centered = selected - selected.mean(axis=0)
        assert np.linalg.svd(centered, compute_uv=False)[1] <= 1e-9
        np.testing.assert_allclose(selected @ np.array(k[:2], dtype=float), offset, atol=1e-9)

    def test_extension_sweep(self) -> None:
        extension = chart_extension_sweep(
            flat_chart(), flat_map(), 0.05, 2.0, 4, resolution=21, extension_resolution=3
        )
        assert extension.axes == (0,)
        assert extension.fractions.shape == (3,)
        assert 0.0 <= extension.mean_fraction <= 1.0


class TestMeasureFit:
    def test_linear_scaling(self) -> None:
        fit = fit_measure_scaling([0.1, 0.01, 0.001], [0.2, 0.02, 0.002], 2)
        assert fit.exponent == 1.0
        assert fit.slope == pytest.approx(1.0)
        assert fit.C == pytest.approx(2.0)
        assert fit.monotone

    def test_non_monotone_and_sparse(self) -> None:
        fit = fit_measure_scaling([0.1, 0.01], [0.0, 0.05], 3)
        assert fit.exponent == 0.5
        assert not fit.monotone
        assert math.isnan(fit.slope)

    def test_shape_mismatch(self) -> None:
        with pytest.raises(ValueError):
            fit_measure_scaling([0.1], [0.1, 0.2], 2)

    def test_fraction_ladder_is_linear_in_gamma(self) -> None:
        chart = ParamChart((0.51,), (1.49,), PolynomialMap.parse(["1", "lam"], 1))
        nf_map = flat_map()
        gammas = [1e-2, 1e-3, 1e-4, 1e-5]
        fractions = [
            surviving_set_sweep(chart, nf_map, gamma, 2.0, 6, resolution=10_000).excluded_fraction
            for gamma in gammas
        ]
        fit = fit_measure_scaling(gammas, fractions, FLAT.n)
        assert fit.monotone
        assert fractions[0] > fractions[1] > 0.0
        assert all(f <= fit.C * g for f, g in zip(fractions, gammas, strict=True))
        assert fit.C <= 2.0 * fractions[0] / gammas[0]


class TestSigma:
    def test_sigma_on_tilted_line(self) -> None:
        nf_map = NormalFormMap(parse_hamiltonian(FLAT, "y1 + y2**2/2"))
        chart = ParamChart((1.0,), (2.0,), PolynomialMap.parse(["lam", "lam"], 1))
        estimate = estimate_sigma_and_K(chart, nf_map, resolution=5)
        assert estimate.sigma == pytest.approx(1.0 / math.sqrt(2.0))
        assert estimate.K == 0.0

    def test_cutoff_is_infinite_without_sigma(self) -> None:
        assert melnikov_cutoff(2, 0.0, 1.0) == math.inf
        assert melnikov_cutoff(2, 0.5, 1.0) == pytest.approx(16.0)
