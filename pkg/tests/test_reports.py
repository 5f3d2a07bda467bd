"""Tests for JSON-lines and CSV outputs."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from subtori.divisors import MeasureFit, SweepResult
from subtori.engine import StepTolerances, TelescopedBound, kam_step
from subtori.homological import DivisorRecord
from subtori.reports import (
    read_step_reports,
    to_json,
    write_divisor_log,
    write_step_reports,
    write_sweep,
    write_sweep_summary,
    write_telescoped,
    write_trajectory,
)
from subtori.scenarios import example_4_1, initial_model
from subtori.verifier import TrajectorySample


def sweep_result(gamma: float, passed: list[bool]) -> SweepResult:
    count = len(passed)
    return SweepResult(
        gamma=gamma,
        tau=3.0,
        K=10,
        points=np.linspace(1.0, 2.0, count)[:, None],
        passed=np.array(passed),
        worst_margin=np.full(count, 0.25),
        worst_k=np.tile([1, -2], (count, 1)),
        worst_l=np.tile([1, 0], (count, 1)),
    )


class TestJson:
    def test_non_finite_values_become_strings(self) -> None:
        text = to_json({"b": math.inf, "a": [np.float64(1.5), math.nan], "c": np.arange(2)})
        assert json.loads(text) == {"a": [1.5, "nan"], "b": "inf", "c": [0, 1]}
        assert text.index('"a"') < text.index('"b"')

    def test_step_reports_round_trip(self, tmp_path: Path) -> None:
        model, budget = initial_model(example_4_1(), eps0=0.0)
        report = kam_step(model, budget, StepTolerances(k_scan_cap=16)).report
        path = tmp_path / "steps.jsonl"
        write_step_reports([report, report], path)
        rows = read_step_reports(path)
        assert len(rows) == 2
        assert rows[0]["step"] == 0
        assert rows[0]["hypotheses"]["H4"]["measured"]["passed"] is True
        assert rows[0]["contraction_ok"] is True


class TestCsv:
    def test_sweep(self, tmp_path: Path) -> None:
        path = tmp_path / "sweep.csv"
        write_sweep([sweep_result(0.1, [True, False]), sweep_result(0.01, [True, True])], path)
        lines = path.read_text().splitlines()
        assert lines[0] == "gamma,lam1,passed,worst_margin,k1,k2,l1,l2"
        assert len(lines) == 5
        assert lines[2].split(",")[2] == "0"

    def test_empty_sweep(self, tmp_path: Path) -> None:
        path = tmp_path / "sweep.csv"
        write_sweep([], path)
        assert path.read_text().strip() == "gamma"

    def test_sweep_summary(self, tmp_path: Path) -> None:
        path = tmp_path / "summary.csv"
        fit = MeasureFit(exponent=1.0, slope=math.nan, C=5.0, monotone=True)
        write_sweep_summary([sweep_result(0.1, [True, False])], fit, path)
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        np.testing.assert_allclose(data, [0.1, 10, 0.5, 5.0])

    def test_trajectory(self, tmp_path: Path) -> None:
        path = tmp_path / "trajectory_0.csv"
        t = np.linspace(0.0, 1.0, 3)
        sample = TrajectorySample(t, np.zeros((3, 2)), np.ones(3)).with_deviation([1e-9], [2])
        write_trajectory(sample, path)
        assert path.read_text().splitlines()[0] == "t,z1,z2,energy,deviation"
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        assert data.shape == (3, 5)
        assert np.isnan(data[0, -1])
        assert data[2, -1] == 1e-9

    def test_divisor_log(self, tmp_path: Path) -> None:
        path = tmp_path / "divisors_step0.csv"
        record = DivisorRecord((1, -1), "scalar", 0.3, 0.01, 1.0, 0.0)
        write_divisor_log([record], path)
        header, row = path.read_text().splitlines()
        assert header == "k1,k2,kind,margin,threshold,condition,neumann_ratio"
        assert row.split(",")[:3] == ["1", "-1", "scalar"]

    def test_empty_divisor_log(self, tmp_path: Path) -> None:
        path = tmp_path / "divisors_step0.csv"
        write_divisor_log([], path)
        assert path.read_text().splitlines()[0] == "kind,margin,threshold,condition,neumann_ratio"

    def test_telescoped(self, tmp_path: Path) -> None:
        path = tmp_path / "telescoped.csv"
        write_telescoped([TelescopedBound(0, "omega", 1e-12, 1e-10)], path)
        header, row = path.read_text().splitlines()
        assert header == "step,quantity,measured,bound,passed"
        assert row.split(",")[-1] == "1"
