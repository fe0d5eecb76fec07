"""Datasets, CSV ingestion and result serialization."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .exceptions import EmptyDatasetError, InvalidInputError, MissingColumnError

MISSING_TOKENS = ("", "NA")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Aligned samples ``(x, y, z)``; ``x`` and ``z`` are 2-D, ``y`` is 1-D."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    group: np.ndarray | None = None
    latent: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        z = np.asarray(self.z, dtype=float)
        x = x[:, None] if x.ndim == 1 else x
        z = z[:, None] if z.ndim == 1 else z
        y = np.asarray(self.y, dtype=float).ravel()
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)
        n = y.shape[0]
        if x.shape[0] != n or z.shape[0] != n:
            raise InvalidInputError(f"row counts differ: x={x.shape[0]}, y={n}, z={z.shape[0]}")
        if self.group is not None and len(self.group) != n:
            raise InvalidInputError("group column length differs from y")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
            raise InvalidInputError("dataset contains non-finite entries")

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def n(self) -> int:
        return len(self)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.x[idx],
            self.y[idx],
            self.z[idx],
            None if self.group is None else np.asarray(self.group)[idx],
            None if self.latent is None else self.latent[idx],
            dict(self.meta),
        )

    def to_frame(self) -> pd.DataFrame:
        cols: dict[str, np.ndarray] = {}
        for name, arr in (("x", self.x), ("z", self.z)):
            if arr.shape[1] == 1:
                cols[name] = arr[:, 0]
            else:
                for j in range(arr.shape[1]):
                    cols[f"{name}{j + 1}"] = arr[:, j]
        cols["y"] = self.y
        if self.group is not None:
            cols["group"] = self.group
        frame = pd.DataFrame(cols)
        return frame[[c for c in frame.columns if c.startswith("x")] + ["y"]
                     + [c for c in frame.columns if c.startswith("z")]
                     + (["group"] if self.group is not None else [])]

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


@dataclass(frozen=True)
class ColumnSchema:
    treatment: str | Sequence[str]
    outcome: str
    anchors: str | Sequence[str]
    group: str | None = None
    log: Sequence[str] = ()

    @property
    def treatment_cols(self) -> list[str]:
        return [self.treatment] if isinstance(self.treatment, str) else list(self.treatment)

    @property
    def anchor_cols(self) -> list[str]:
        return [self.anchors] if isinstance(self.anchors, str) else list(self.anchors)

    def columns(self) -> list[str]:
        cols = self.treatment_cols + [self.outcome] + self.anchor_cols
        if self.group is not None:
            cols.append(self.group)
        return cols

    def __post_init__(self):
        cols = self.columns()
        if len(set(cols)) != len(cols):
            raise InvalidInputError(f"schema column names must be distinct: {cols}")
        unknown = set(self.log) - set(cols)
        if unknown:
            raise InvalidInputError(f"log flags on unmapped columns: {sorted(unknown)}")

    @classmethod
    def from_json(cls, path) -> "ColumnSchema":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        try:
            return cls(
                treatment=raw["treatment"],
                outcome=raw["outcome"],
                anchors=raw["anchors"],
                group=raw.get("group"),
                log=tuple(raw.get("log", ())),
            )
        except KeyError as exc:
            raise InvalidInputError(f"{path}: schema is missing key {exc}") from None


def _parse_float(cell: str) -> float:
    try:
        return float(cell)
    except ValueError:
        return np.nan


def load_csv(path, schema: ColumnSchema) -> Dataset:
    """Read a comma-separated file with a header row into a :class:`Dataset`.

    Rows with missing or non-numeric cells are dropped, as are rows with a
    nonpositive value in a log-flagged column; both counts land in
    ``dataset.meta``.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    missing = [c for c in schema.columns() if c not in frame.columns]
    if missing:
        raise MissingColumnError(f"{path}: columns not in header: {missing}")
    total = len(frame)
    numeric_cols = schema.treatment_cols + [schema.outcome] + schema.anchor_cols
    # Python's float() is correctly rounded, so 17-digit output reads back bitwise
    values = frame[numeric_cols].apply(lambda s: s.map(_parse_float)).astype(float)
    ok = values.notna().all(axis=1) & np.isfinite(values.to_numpy(dtype=float)).all(axis=1)
    if schema.group is not None:
        ok &= ~frame[schema.group].str.strip().isin(MISSING_TOKENS)
    dropped_missing = int((~ok).sum())
    values = values[ok]
    log_ok = np.ones(len(values), dtype=bool)
    for col in schema.log:
        if col in numeric_cols:
            log_ok &= values[col].to_numpy() > 0
    dropped_log = int((~log_ok).sum())
    values = values[log_ok].copy()
    for col in schema.log:
        if col in numeric_cols:
            values[col] = np.log(values[col])
    if len(values) == 0:
        raise EmptyDatasetError(f"{path}: no rows left after dropping {total} rows")
    group = None
    if schema.group is not None:
        group = frame.loc[values.index, schema.group].str.strip().to_numpy()
    return Dataset(
        values[schema.treatment_cols].to_numpy(dtype=float),
        values[schema.outcome].to_numpy(dtype=float),
        values[schema.anchor_cols].to_numpy(dtype=float),
        group=group,
        meta={"rows": total, "dropped_missing": dropped_missing, "dropped_log": dropped_log},
    )


def subsample(data: Dataset, n: int, seed) -> Dataset:
    """Uniform draw of ``n`` rows without replacement; original order kept."""
    if not 0 < n <= data.n:
        raise InvalidInputError(f"cannot draw {n} rows from {data.n}")
    idx = np.sort(np.random.default_rng(seed).choice(data.n, size=n, replace=False))
    return data.take(idx)


def split_by_group(data: Dataset, group_value) -> tuple[Dataset, Dataset]:
    """``(matching, non-matching)`` rows in original order; either side may be empty."""
    if data.group is None:
        raise InvalidInputError("dataset has no group column")
    mask = np.asarray(data.group).astype(str) == str(group_value)
    return data.take(np.flatnonzero(mask)), data.take(np.flatnonzero(~mask))


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def emit_report(report, path, format: str = "csv") -> None:
    """Write a trial report as long-format CSV or as a JSON summary."""
    try:
        if format == "csv":
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["method", "trial", "metric", "value"])
                for method, trial, value in report.records:
                    writer.writerow([method, trial, report.metric, _fmt(value)])
        elif format == "json":
            payload = {
                "config": report.config,
                "summary": report.summary(),
                "curves": report.curves,
            }
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=2, default=_json_default, allow_nan=False)
        else:
            raise InvalidInputError(f"unknown report format {format!r}")
    except OSError as exc:
        raise OSError(f"failed to write report to {path}: {exc}") from exc


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def read_report_csv(path) -> list[tuple[str, int, str, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [(r["method"], int(r["trial"]), r["metric"], float(r["value"])) for r in rows]
