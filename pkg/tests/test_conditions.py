"""Tests for condition reports on the builtin scenarios."""

from __future__ import annotations

import pytest

from subtori.conditions import condition_report, matches_expectations
from subtori.errors import ChartDomainError
from subtori.scenarios import (
    ConditionExpectations,
    Scenario,
    example_4_1,
    example_4_2,
    example_4_3,
)


class TestConditionReport:
    @pytest.mark.parametrize(
        ("scenario", "lam"),
        [
            (example_4_1(), (1.3,)),
            (example_4_1(chart_kind="parabola"), (1.3,)),
            (example_4_2(), (1.55,)),
            (example_4_3(), (1.41421356, 1.73205081)),
        ],
        ids=["4.1-line", "4.1-parabola", "4.2-line", "4.3"],
    )
    def test_builtins_match_expectations(self, scenario: Scenario, lam: tuple[float, ...]) -> None:
        report = condition_report(scenario, lam, sigma_resolution=None)
        assert report.passed
        assert matches_expectations(report, scenario.expectations) == []

    def test_singular_minor_gets_bordered_determinant(self) -> None:
        report = condition_report(example_4_1(), (1.3,), sigma_resolution=None)
        assert report.d == 1
        assert report.get("A1''").passed

    def test_flat_chart_fails_rank(self) -> None:
        scenario = example_4_1(a2=0.0)
        report = condition_report(scenario, (1.3,), sigma_resolution=None)
        assert not report.get("A1'").passed
        assert not report.passed
        assert matches_expectations(report, scenario.expectations) == []

    def test_hyperbolic_class(self) -> None:
        report = condition_report(example_4_3(), sigma_resolution=None)
        assert report.spectrum_class == "hyperbolic"
        assert report.minor == (0, 1, 2)

    def test_sigma_estimate(self) -> None:
        report = condition_report(example_4_1(), (1.3,), sigma_resolution=5)
        assert report.sigma is not None
        assert report.sigma.sigma > 0.0
        assert report.to_dict()["sigma"] == report.sigma.sigma

    def test_point_outside_chart(self) -> None:
        with pytest.raises(ChartDomainError):
            condition_report(example_4_1(), (3.0,), sigma_resolution=None)

    def test_unknown_condition(self) -> None:
        report = condition_report(example_4_1(), (1.3,), sigma_resolution=None)
        with pytest.raises(KeyError, match="A9"):
            report.get("A9")


class TestExpectations:
    def test_mismatches_are_listed(self) -> None:
        report = condition_report(example_4_1(), (1.3,), sigma_resolution=None)
        wrong = ConditionExpectations(
            A1_prime=False, A_singular=False, d=2, minor=(0, 1), spectrum_class="hyperbolic"
        )
        mismatches = matches_expectations(report, wrong)
        assert len(mismatches) == 5
        assert any("spectrum" in line for line in mismatches)
