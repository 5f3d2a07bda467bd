"""Line-oriented text format for series and transform chains.

One term per line::

    # n=2 m=1 real=1
    1 0 | 0 1 | 1 0 | 0.25 -0.5

Columns are ``k1..kn | l1..ln | p1..p2m | re im``. Chains are a sequence of
series blocks, each introduced by a ``## link <i> y*= ...`` line.
"""

from __future__ import annotations

import re
from typing import TYPE_CHECKING

import numpy as np

from subtori.errors import SeriesFormatError
from subtori.series import Dims, FTSeries

if TYPE_CHECKING:
    from collections.abc import Sequence
    from pathlib import Path

    from numpy.typing import NDArray

_HEADER = re.compile(r"^#\s*n=(\d+)\s+m=(\d+)\s+real=([01])\s*$")
_LINK = re.compile(r"^##\s*link\s+(\d+)\s+y\*=(.*)$")


def _format_float(value: float) -> str:
    return repr(float(value))


def dumps(series: FTSeries) -> str:
    """Serialize a series (header plus one line per term)."""
    dims = series.dims
    lines = [f"# n={dims.n} m={dims.m} real={int(series.real)}"]
    for row, value in zip(series.keys.tolist(), series.coeffs.tolist(), strict=True):
        k = " ".join(str(v) for v in row[: dims.n])
        l = " ".join(str(v) for v in row[dims.n : 2 * dims.n])  # noqa: E741
        p = " ".join(str(v) for v in row[2 * dims.n :])
        lines.append(f"{k} | {l} | {p} | {_format_float(value.real)} {_format_float(value.imag)}")
    return "\n".join(lines) + "\n"


def _parse_term(line: str, dims: Dims, lineno: int) -> tuple[list[int], complex]:
    fields = [part.split() for part in line.split("|")]
    if len(fields) != 4:
        msg = f"expected 4 '|'-separated fields, got {len(fields)}"
        raise SeriesFormatError(msg, line=lineno)
    k, l, p, value = fields  # noqa: E741
    if len(k) != dims.n or len(l) != dims.n or len(p) != dims.normal or len(value) != 2:
        msg = f"field lengths {[len(f) for f in fields]} do not match n={dims.n}, m={dims.m}"
        raise SeriesFormatError(msg, line=lineno)
    try:
        key = [int(v) for v in (*k, *l, *p)]
        coeff = complex(float(value[0]), float(value[1]))
    except ValueError as e:
        raise SeriesFormatError(str(e), line=lineno) from e
    return key, coeff


def _parse_block(lines: Sequence[tuple[int, str]]) -> FTSeries:
    if not lines:
        msg = "empty series block"
        raise SeriesFormatError(msg)
    lineno, header = lines[0]
    match = _HEADER.match(header.strip())
    if match is None:
        msg = f"bad series header {header.strip()!r}"
        raise SeriesFormatError(msg, line=lineno)
    dims = Dims(n=int(match.group(1)), m=int(match.group(2)))
    keys: list[list[int]] = []
    coeffs: list[complex] = []
    for number, line in lines[1:]:
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, coeff = _parse_term(line, dims, number)
        keys.append(key)
        coeffs.append(coeff)
    key_array: NDArray[np.int64] = np.array(keys, dtype=np.int64).reshape(-1, dims.width)
    return FTSeries(dims, key_array, coeffs, real=match.group(3) == "1")


def loads(text: str) -> FTSeries:
    """Parse the output of :func:`dumps`."""
    numbered = [(i + 1, line) for i, line in enumerate(text.splitlines()) if line.strip()]
    return _parse_block(numbered)


def dump(series: FTSeries, path: Path) -> None:
    path.write_text(dumps(series))


def load(path: Path) -> FTSeries:
    return loads(path.read_text())


def dumps_chain(links: Sequence[tuple[FTSeries, NDArray[np.float64]]]) -> str:
    """Serialize ``(generator, translation)`` pairs, one block per link."""
    parts: list[str] = []
    for index, (generator, y_star) in enumerate(links, start=1):
        shift = " ".join(_format_float(v) for v in np.asarray(y_star, dtype=float))
        parts.append(f"## link {index} y*= {shift}\n{dumps(generator)}")
    return "".join(parts)


def loads_chain(text: str) -> list[tuple[FTSeries, NDArray[np.float64]]]:
    """Parse the output of :func:`dumps_chain`."""
    links: list[tuple[FTSeries, NDArray[np.float64]]] = []
    shift: NDArray[np.float64] | None = None
    block: list[tuple[int, str]] = []

    def flush() -> None:
        if shift is not None:
            generator = _parse_block(block)
            if shift.shape[0] != generator.dims.n:
                msg = f"translation of length {shift.shape[0]} in a chain with n={generator.dims.n}"
                raise SeriesFormatError(msg)
            links.append((generator, shift))

    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        match = _LINK.match(line.strip())
        if match is not None:
            flush()
            try:
                shift = np.array([float(v) for v in match.group(2).split()], dtype=float)
            except ValueError as e:
                raise SeriesFormatError(str(e), line=lineno) from e
            block = []
        elif shift is None:
            msg = "content before the first '## link' line"
            raise SeriesFormatError(msg, line=lineno)
        else:
            block.append((lineno, line))
    flush()
    return links
