from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Union

import numpy as np

from ._libraries import DataFrame, DataFrameLibrary, PandasDataFrameLibrary

__all__ = ("NormLedger",)


class NormLedger:
    """
    Per-step norms of generating functions and remainder blocks.

    Each record is a mapping from a column name (``norm_chi0``, ``norm_chi1``, ``norm_remainder``, ...) to a
    non-negative value. Steps strictly increase. A ledger is never modified in place: ``append`` returns a new one.
    """

    def __init__(self, records: Sequence[Mapping[str, float]] = ()):
        self._records: List[Dict[str, float]] = []
        for record in records:
            self._check(record)
            self._records.append(dict(record))

    def _check(self, record: Mapping[str, float]):
        assert "step" in record, "step must be specified."
        if self._records:
            assert record["step"] > self._records[-1]["step"], "steps must increase."
        for name, value in record.items():
            if name != "step" and not math.isnan(value):
                assert value >= 0, f"{name} must be non-negative."

    def append(self, step: int, **norms: float) -> NormLedger:
        ledger = NormLedger(self._records)
        record = {"step": int(step), **{k: float(v) for k, v in norms.items()}}
        ledger._check(record)
        ledger._records.append(record)
        return ledger

    def extend(self, other: NormLedger) -> NormLedger:
        return NormLedger([*self._records, *other._records])

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[Dict[str, float]]:
        return (dict(r) for r in self._records)

    def __repr__(self) -> str:
        return f"NormLedger({len(self)} steps, columns={self.columns})"

    @property
    def columns(self) -> List[str]:
        names = ["step"]
        for record in self._records:
            names.extend(k for k in record if k not in names)
        return names

    @property
    def steps(self) -> np.ndarray:
        return np.array([r["step"] for r in self._records], dtype=int)

    def column(self, name: str) -> np.ndarray:
        """
        Returns one column, with NaN where a step did not record it.
        """
        if name not in self.columns:
            raise ValueError(f"{name} is not a valid value")
        return np.array([r.get(name, math.nan) for r in self._records], dtype=float)

    def last(self) -> Dict[str, float]:
        return dict(self._records[-1]) if self._records else {}

    def to_frame(self, library: Optional[DataFrameLibrary] = None) -> DataFrame:
        library = library or PandasDataFrameLibrary()
        return library.from_columns({name: self.column(name) for name in self.columns}).astype({"step": int})

    @classmethod
    def from_frame(cls, df: DataFrame) -> NormLedger:
        records = []
        for row in df.to_dict(orient="records"):
            record = {k: float(v) for k, v in row.items() if not (k != "step" and math.isnan(v))}
            record["step"] = int(row["step"])
            records.append(record)
        return cls(records)

    def write_csv(self, path: Union[str, Path], library: Optional[DataFrameLibrary] = None):
        library = library or PandasDataFrameLibrary()
        library.write_csv(self.to_frame(library), path)

    @classmethod
    def read_csv(cls, path: Union[str, Path], library: Optional[DataFrameLibrary] = None) -> NormLedger:
        library = library or PandasDataFrameLibrary()
        df, _ = library.read_csv(path)
        return cls.from_frame(df)
