"""Tests for the series and chain text format."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from subtori import series_io
from subtori.errors import SeriesFormatError
from subtori.series import Dims, FTSeries, realify

DIMS = Dims(n=2, m=1)


class TestSeriesText:
    """Test dumps/loads of a single series."""

    def test_exact_round_trip(self) -> None:
        series = realify(
            FTSeries.from_terms(
                DIMS,
                {
                    ((1, -2), (0, 1), (1, 0)): 0.1 + 1.0 / 3.0j,
                    ((0, 0), (2, 0), (0, 0)): np.pi,
                },
            )
        )
        restored = series_io.loads(series_io.dumps(series))
        assert restored == series
        assert restored.real

    def test_header_and_columns(self) -> None:
        series = FTSeries.from_terms(DIMS, {((1, 0), (0, 1), (1, 0)): 0.25 - 0.5j})
        lines = series_io.dumps(series).splitlines()
        assert lines[0] == "# n=2 m=1 real=0"
        assert lines[1] == "1 0 | 0 1 | 1 0 | 0.25 -0.5"

    def test_empty_series(self) -> None:
        restored = series_io.loads(series_io.dumps(FTSeries.zero(Dims(3, 0))))
        assert not restored
        assert restored.dims == Dims(3, 0)

    def test_file_round_trip(self, tmp_path: Path) -> None:
        series = FTSeries.from_terms(DIMS, {((0, 1), (0, 0), (0, 2)): 2.0})
        path = tmp_path / "p.txt"
        series_io.dump(series, path)
        assert series_io.load(path) == series

    def test_comments_are_skipped(self) -> None:
        text = "# n=1 m=0 real=1\n# generated\n1 | 0 |  | 1.0 0.0\n"
        assert len(series_io.loads(text)) == 1


class TestSeriesTextErrors:
    """Malformed input reports the offending line."""

    def test_bad_header(self) -> None:
        with pytest.raises(SeriesFormatError, match="bad series header") as info:
            series_io.loads("n=2 m=1\n")
        assert info.value.line == 1

    def test_wrong_field_count(self) -> None:
        with pytest.raises(SeriesFormatError, match="line 2") as info:
            series_io.loads("# n=2 m=1 real=0\n1 0 | 0 0 | 1.0 0.0\n")
        assert info.value.line == 2

    def test_wrong_field_length(self) -> None:
        with pytest.raises(SeriesFormatError, match="do not match"):
            series_io.loads("# n=2 m=1 real=0\n1 | 0 0 | 0 0 | 1.0 0.0\n")

    def test_bad_number(self) -> None:
        with pytest.raises(SeriesFormatError) as info:
            series_io.loads("# n=1 m=0 real=0\n1 | 0 |  | one 0.0\n")
        assert info.value.line == 2

    def test_exit_code_is_input_error(self) -> None:
        assert SeriesFormatError("x").exit_code == 3


class TestChainText:
    """Test dumps_chain/loads_chain."""

    def test_round_trip(self) -> None:
        first = FTSeries.from_terms(DIMS, {((1, 0), (0, 0), (0, 0)): 1e-9}, real=False)
        second = FTSeries.zero(DIMS)
        links = [(first, np.array([0.0, -0.5])), (second, np.array([1e-12, 0.0]))]
        restored = series_io.loads_chain(series_io.dumps_chain(links))
        assert len(restored) == 2
        for (F, y), (G, z) in zip(links, restored, strict=True):
            assert F == G
            np.testing.assert_array_equal(y, z)

    def test_empty_chain(self) -> None:
        assert series_io.loads_chain("") == []

    def test_content_before_link(self) -> None:
        with pytest.raises(SeriesFormatError, match="before the first"):
            series_io.loads_chain("# n=1 m=0 real=1\n")

    def test_translation_length_checked(self) -> None:
        text = "## link 1 y*= 0.0\n# n=2 m=1 real=1\n"
        with pytest.raises(SeriesFormatError, match="translation of length 1"):
            series_io.loads_chain(text)
