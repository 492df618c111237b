"""
Sampled scalar observables against dimensionless time omega_m t.
"""
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np


def format_float(x: float, precision: int = 17) -> str:
    return f"{float(x):.{precision}g}"


@dataclass(frozen=True)
class TimeSeries:
    t: np.ndarray
    columns: Mapping[str, np.ndarray]
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        for name, values in self.columns.items():
            if len(values) != len(self.t):
                raise ValueError(f"column '{name}' has {len(values)} samples, t has {len(self.t)}")

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def __len__(self) -> int:
        return len(self.t)

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def final(self, name: str) -> float:
        return float(self.columns[name][-1])

    def tail(self, fraction: float = 0.1) -> "TimeSeries":
        """Last `fraction` of the samples (at least one)."""
        start = min(len(self.t) - 1, int(np.floor(len(self.t) * (1.0 - fraction))))
        return TimeSeries(self.t[start:], {k: v[start:] for k, v in self.columns.items()}, self.meta)

    def tail_mean(self, name: str, fraction: float = 0.1) -> float:
        return float(np.mean(self.tail(fraction).column(name)))

    def write_csv(self, path: Path, precision: int = 17) -> Path:
        """Header t,<columns...>; complex columns are split into _re/_im."""
        header = ["t"]
        data = [self.t]
        for name, values in self.columns.items():
            if np.iscomplexobj(values):
                header += [f"{name}_re", f"{name}_im"]
                data += [np.real(values), np.imag(values)]
            else:
                header.append(name)
                data.append(values)
        write_table(path, header, zip(*data), precision)
        return path


def write_table(path: Path, header: list[str], rows: Iterable[Iterable[object]], precision: int = 17) -> Path:
    """Fixed-format CSV writer shared by time series and sweep tables."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v, precision) for v in row])
    return path


def _cell(value: object, precision: int) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(value, precision)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "" if value is None else str(value)
