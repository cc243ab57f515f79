from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, TextIO, Tuple, Union

import numpy as np
import pandas as pd

__all__ = ("DataFrameLibrary", "PandasDataFrameLibrary", "Records", "DataFrame")

Records = Iterable[Dict]
DataFrame = pd.DataFrame
PathLike = Union[str, Path]


class DataFrameLibrary(ABC):
    @abstractmethod
    def create(self, data: Records) -> DataFrame:
        raise NotImplementedError()

    @abstractmethod
    def from_columns(self, columns: Mapping[str, np.ndarray]) -> DataFrame:
        raise NotImplementedError()

    @abstractmethod
    def write_csv(self, df: DataFrame, path: Union[PathLike, TextIO], comment: Optional[str] = None):
        raise NotImplementedError()

    @abstractmethod
    def read_csv(self, path: PathLike) -> Tuple[DataFrame, Optional[str]]:
        raise NotImplementedError()


class PandasDataFrameLibrary(DataFrameLibrary):
    def create(self, data: Records) -> DataFrame:
        return pd.DataFrame(list(data))

    def from_columns(self, columns: Mapping[str, np.ndarray]) -> DataFrame:
        return pd.DataFrame({name: np.asarray(values) for name, values in columns.items()})

    def write_csv(self, df: DataFrame, path: Union[PathLike, TextIO], comment: Optional[str] = None):
        if not isinstance(path, (str, Path)):
            self._write(df, path, comment)
            return
        with open(path, "w", newline="") as fp:
            self._write(df, fp, comment)

    @staticmethod
    def _write(df: DataFrame, fp: TextIO, comment: Optional[str]):
        if comment:
            fp.write(f"# {comment}\n")
        df.to_csv(fp, index=False, float_format="%.17g", lineterminator="\n")

    def read_csv(self, path: PathLike) -> Tuple[DataFrame, Optional[str]]:
        comment = None
        with open(path) as fp:
            first = fp.readline()
        if first.startswith("#"):
            comment = first[1:].strip()
        df = pd.read_csv(path, comment="#", float_precision="round_trip")
        return df, comment
