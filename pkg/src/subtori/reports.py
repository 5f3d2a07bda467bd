"""Machine-readable outputs: JSON-lines step reports and plot-ready CSV tables."""

from __future__ import annotations

import json
import math
from typing import TYPE_CHECKING, Any

import numpy as np

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence
    from pathlib import Path

    from numpy.typing import NDArray

    from subtori.divisors import MeasureFit, SweepResult
    from subtori.engine import StepReport, TelescopedBound
    from subtori.homological import DivisorRecord
    from subtori.verifier import TrajectorySample


def _jsonable(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    return value


def to_json(data: Any, *, indent: int | None = None) -> str:
    """JSON text with ``inf``/``nan`` written as strings and keys in stable order."""
    return json.dumps(_jsonable(data), indent=indent, sort_keys=True)


def step_lines(reports: Iterable[StepReport]) -> list[str]:
    return [to_json(report.to_dict()) for report in reports]


def write_step_reports(reports: Iterable[StepReport], path: Path) -> None:
    """One JSON object per line, in step order."""
    lines = step_lines(reports)
    path.write_text("".join(f"{line}\n" for line in lines))


def read_step_reports(path: Path) -> list[dict[str, Any]]:
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def _write_csv(path: Path, header: Sequence[str], rows: NDArray[Any], fmt: str | Sequence[str]) -> None:
    np.savetxt(path, rows, delimiter=",", header=",".join(header), comments="", fmt=fmt)


def write_sweep(results: Sequence[SweepResult], path: Path) -> None:
    """Per-point membership for every rung of the gamma ladder."""
    if not results:
        _write_csv(path, ["gamma"], np.zeros((0, 1)), "%.17g")
        return
    n0 = results[0].points.shape[1]
    n = results[0].worst_k.shape[1]
    m2 = results[0].worst_l.shape[1]
    header = [
        "gamma",
        *(f"lam{j + 1}" for j in range(n0)),
        "passed",
        "worst_margin",
        *(f"k{j + 1}" for j in range(n)),
        *(f"l{j + 1}" for j in range(m2)),
    ]
    blocks = [
        np.hstack(
            [
                np.full((r.points.shape[0], 1), r.gamma),
                r.points,
                r.passed[:, None].astype(float),
                r.worst_margin[:, None],
                r.worst_k.astype(float),
                r.worst_l.astype(float),
            ]
        )
        for r in results
    ]
    fmt = ["%.17g"] * (1 + n0) + ["%d", "%.17g"] + ["%d"] * (n + m2)
    _write_csv(path, header, np.vstack(blocks), fmt)


def write_sweep_summary(
    results: Sequence[SweepResult], fit: MeasureFit | None, path: Path
) -> None:
    """Excluded fraction per gamma, with the fitted constant on every row."""
    rows = np.array(
        [
            [r.gamma, r.K, r.excluded_fraction, fit.C if fit else math.nan]
            for r in results
        ]
    ).reshape(-1, 4)
    _write_csv(path, ["gamma", "K", "excluded_fraction", "C"], rows, ["%.17g", "%d", "%.17g", "%.17g"])


def write_trajectory(sample: TrajectorySample, path: Path) -> None:
    """Time, state columns, energy and torus deviation (``nan`` between measured rows)."""
    width = sample.states.shape[1]
    header = ["t", *(f"z{j + 1}" for j in range(width)), "energy", "deviation"]
    rows = np.hstack(
        [
            sample.t[:, None],
            sample.states,
            sample.energy[:, None],
            sample.deviation_column()[:, None],
        ]
    )
    _write_csv(path, header, rows, "%.17g")


def write_divisor_log(records: Sequence[DivisorRecord], path: Path) -> None:
    """Solved cells with their divisor margins, floors and Neumann ratios."""
    n = len(records[0].k) if records else 0
    header = [
        *(f"k{j + 1}" for j in range(n)),
        "kind",
        "margin",
        "threshold",
        "condition",
        "neumann_ratio",
    ]
    rows = np.array(
        [
            [
                *(str(v) for v in rec.k),
                rec.kind,
                repr(rec.margin),
                repr(rec.threshold),
                repr(rec.condition),
                repr(rec.neumann_ratio),
            ]
            for rec in records
        ],
        dtype=object,
    ).reshape(-1, len(header))
    _write_csv(path, header, rows, "%s")


def write_telescoped(bounds: Sequence[TelescopedBound], path: Path) -> None:
    rows = np.array(
        [[b.step, b.quantity, repr(b.measured), repr(b.bound), int(b.passed)] for b in bounds],
        dtype=object,
    ).reshape(-1, 5)
    _write_csv(path, ["step", "quantity", "measured", "bound", "passed"], rows, "%s")
