"""Condition report: every non-degeneracy check of a scenario in one place."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np

from subtori.divisors import SigmaEstimate, estimate_sigma_and_K, normal_spectra
from subtori.model import (
    RANK_RTOL,
    SINGULAR_TOL,
    ConditionCheck,
    NormalForm,
    SpectrumClass,
    check_A0,
    check_A1_doubleprime,
    check_A1_rank,
    check_A3,
    classify_spectrum,
    eigenvalues_of_JM,
)

if TYPE_CHECKING:
    from numpy.typing import ArrayLike

    from subtori.scenarios import ConditionExpectations, Scenario

logger = logging.getLogger(__name__)

REQUIRED = ("A0", "A1'", "A2", "A3'")


@dataclass(frozen=True)
class ConditionReport:
    """Measured value, threshold and verdict of each condition at one parameter."""

    scenario: str
    n: int
    """Number of actions."""

    lam: tuple[float, ...]
    checks: tuple[ConditionCheck, ...]
    minor: tuple[int, ...]
    spectrum_class: SpectrumClass
    sigma: SigmaEstimate | None = None

    @property
    def passed(self) -> bool:
        """Whether every required condition holds (``A1''`` is informational)."""
        return all(check.passed for check in self.checks if check.name in REQUIRED)

    @property
    def d(self) -> int:
        return len(self.minor)

    def get(self, name: str) -> ConditionCheck:
        for check in self.checks:
            if check.name == name:
                return check
        msg = f"no condition named {name!r} in the report"
        raise KeyError(msg)

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "lam": list(self.lam),
            "passed": self.passed,
            "minor": list(self.minor),
            "spectrum_class": self.spectrum_class,
            "sigma": None if self.sigma is None else self.sigma.sigma,
            "K_melnikov": None if self.sigma is None else self.sigma.K,
            "checks": [
                {
                    "name": c.name,
                    "passed": c.passed,
                    "value": c.value,
                    "threshold": c.threshold,
                    "detail": c.detail,
                }
                for c in self.checks
            ],
        }


def _check_A0_on_grid(scenario: Scenario, resolution: int) -> ConditionCheck:  # noqa: N802
    points = scenario.chart.grid_points(resolution)
    ys = scenario.chart.y(points).reshape(points.shape[0], scenario.dims.n)
    worst = None
    for y in ys:
        check = check_A0(scenario.N_full, y)
        if worst is None or (check.passed, abs(check.value)) < (worst.passed, abs(worst.value)):
            worst = check
    assert worst is not None
    return worst


def _check_A1_prime(  # noqa: N802
    scenario: Scenario, lam: ArrayLike, sigma: SigmaEstimate | None
) -> ConditionCheck:
    rank = check_A1_rank(scenario.chart, scenario.nf_map, lam)
    values = rank.singular_values
    n = scenario.dims.n
    value = float(values[n - 1]) if values.size >= n else 0.0
    threshold = RANK_RTOL * float(values[0]) if values.size else RANK_RTOL
    detail = f"rank {rank.rank} of {n}"
    if sigma is not None:
        detail += f", sigma={sigma.sigma:.3e}"
    return ConditionCheck("A1'", rank.passed, value, threshold, detail)


def _check_A2(  # noqa: N802
    scenario: Scenario, resolution: int, sigma: SigmaEstimate | None
) -> ConditionCheck:
    if not scenario.dims.m:
        return ConditionCheck("A2", True, math.inf, SINGULAR_TOL, "no normal directions")
    points = scenario.chart.grid_points(resolution)
    spectra = normal_spectra(scenario.nf_map, scenario.chart.y(points))
    gap = float(np.abs(spectra).min())
    detail = "c = min |Omega_j| over the grid"
    if sigma is not None and math.isfinite(sigma.K):
        detail += f", Melnikov cutoff K={sigma.K:.3g}"
    return ConditionCheck("A2", gap > SINGULAR_TOL, gap, SINGULAR_TOL, detail)


def condition_report(
    scenario: Scenario,
    lam: ArrayLike | None = None,
    *,
    resolution: int | None = None,
    sigma_resolution: int | None = 11,
) -> ConditionReport:
    """Run the checks of a scenario at ``lam`` and over its chart grid.

    ``A0`` and ``A2`` are checked on a grid of ``resolution`` points per axis
    (at most 11 by default), ``A1'`` at ``lam``, ``A3'`` on the chart grid. The
    bordered determinant ``A1''`` is added whenever the minor is nonempty.
    ``sigma_resolution=None`` skips the sigma estimate.
    """
    point = scenario.chart.require(scenario.default_lam() if lam is None else lam)
    coarse = resolution or min(scenario.chart.grid, 11)
    sigma = None
    if sigma_resolution:
        sigma = estimate_sigma_and_K(scenario.chart, scenario.nf_map, resolution=sigma_resolution)

    minor = scenario.minor
    checks = [
        _check_A0_on_grid(scenario, coarse),
        _check_A1_prime(scenario, point, sigma),
        _check_A2(scenario, coarse, sigma),
        check_A3(scenario.chart, scenario.nf_map, minor, resolution),
    ]
    y = scenario.chart.y(point)
    nf_map = scenario.nf_map
    spectrum = eigenvalues_of_JM(nf_map.M(y))
    if minor:
        N = NormalForm(  # noqa: N806
            scenario.dims,
            e=float(nf_map.energy(y)),
            omega=nf_map.omega(y),
            A=nf_map.A(y),
            M=nf_map.M(y),
            minor_indices=minor,
        )
        checks.append(check_A1_doubleprime(N))

    report = ConditionReport(
        scenario=scenario.name,
        n=scenario.dims.n,
        lam=tuple(float(v) for v in point),
        checks=tuple(checks),
        minor=minor,
        spectrum_class=classify_spectrum(spectrum),
        sigma=sigma,
    )
    for check in checks:
        logger.info(
            "%s %s: value %.3e vs %.3e %s",
            check.name,
            "ok" if check.passed else "FAILED",
            check.value,
            check.threshold,
            check.detail,
        )
    return report


def matches_expectations(report: ConditionReport, expected: ConditionExpectations) -> list[str]:
    """Differences between a report and a scenario's expected verdicts (empty when they agree)."""
    mismatches = []
    a1 = report.get("A1'").passed
    if a1 != expected.A1_prime:
        mismatches.append(f"A1' passed={a1}, expected {expected.A1_prime}")
    if report.d != expected.d:
        mismatches.append(f"rank of A is {report.d}, expected {expected.d}")
    singular = report.d < report.n
    if singular != expected.A_singular:
        mismatches.append(f"A singular={singular}, expected {expected.A_singular}")
    if tuple(report.minor) != tuple(expected.minor):
        mismatches.append(f"minor {report.minor}, expected {expected.minor}")
    if report.spectrum_class != expected.spectrum_class:
        mismatches.append(f"spectrum {report.spectrum_class}, expected {expected.spectrum_class}")
    return mismatches
