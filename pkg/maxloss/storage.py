import csv
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from .core import MaxLossError

# Column order of every run record file; pinned by tests.
RECORD_COLUMNS = (
    "method",
    "N",
    "d",
    "eps",
    "seed",
    "outer_iters",
    "broo_calls",
    "value_queries",
    "grad_queries",
    "full_passes",
    "final_gap",
    "wall_ms",
    "termination_reason",
)

FORMATS = ("csv", "json")


class StorageError(MaxLossError):
    pass


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


class RecordStore:
    """Append-only run record file, CSV with a fixed header or a JSON array"""

    def __init__(self, path: Union[str, Path], fmt: Optional[str] = None, columns: Sequence[str] = RECORD_COLUMNS):
        self.path = Path(path)
        self.fmt = fmt or ("json" if self.path.suffix.lower() == ".json" else "csv")
        if self.fmt not in FORMATS:
            raise StorageError(f"unknown record format {self.fmt!r}; expected csv or json")
        self.columns = tuple(columns)

    def append(self, record: Dict[str, Any]):
        """Append one record"""
        if self.path.parent and not self.path.parent.exists():
            os.makedirs(self.path.parent, exist_ok=True)
        if self.fmt == "csv":
            self._append_csv(record)
        else:
            self._append_json(record)

    def _append_csv(self, record: Dict[str, Any]):
        fresh = not self.path.exists() or self.path.stat().st_size == 0
        if not fresh:
            with open(self.path, "r", encoding="utf-8", newline="") as f:
                header = next(csv.reader(f), [])
            if tuple(header) != self.columns:
                raise StorageError(f"{self.path} has header {header}, expected {list(self.columns)}")
        with open(self.path, "a", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            if fresh:
                writer.writerow(self.columns)
            writer.writerow([_cell(record.get(col)) for col in self.columns])

    def _append_json(self, record: Dict[str, Any]):
        records = self.load() if self.path.exists() else []
        records.append(record)
        with open(self.path, "w", encoding="utf-8") as f:
            json.dump(records, f, indent=2)

    def load(self) -> List[Dict[str, Any]]:
        """All stored records; CSV cells come back as strings"""
        if not self.path.exists():
            return []
        if self.fmt == "csv":
            with open(self.path, "r", encoding="utf-8", newline="") as f:
                return list(csv.DictReader(f))
        try:
            with open(self.path, "r", encoding="utf-8") as f:
                records = json.load(f)
        except ValueError:
            raise StorageError(f"{self.path} is not a JSON record file")
        if not isinstance(records, list):
            raise StorageError(f"{self.path} does not hold a JSON array")
        return records


def write_table(path: Union[str, Path], columns: Sequence[str], rows: List[Dict[str, Any]]):
    """Overwrite path with a CSV table"""
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(col)) for col in columns])


def write_summary(path: Union[str, Path], summary: Dict[str, Any]):
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
