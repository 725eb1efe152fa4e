"""CSV ingestion for screening data and the robust (IH) outlier score."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import InsufficientDataError, ParseError, SchemaError

MISSING = frozenset({"", "na", "nan", "null", "none"})
IH_CONSTANT = 0.6745
IH_CUTOFF = 3.5


@dataclass(frozen=True)
class Dataset:
    y: np.ndarray
    X: np.ndarray
    W: Optional[np.ndarray] = None
    column_names: Tuple[str, ...] = ()
    conditioning_names: Tuple[str, ...] = ()
    response_name: str = "y"
    dropped_rows: int = 0

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def r(self) -> int:
        return 0 if self.W is None else self.W.shape[1]


def _parse_cell(text, row, col):
    s = text.strip()
    if s.lower() in MISSING:
        return math.nan
    try:
        v = float(s)
    except ValueError:
        raise ParseError(f"non-numeric value {text!r} at row {row}, column {col!r}",
                         row=row, column=col) from None
    return v


def read_matrix(path) -> Tuple[List[str], np.ndarray, int]:
    """Header names, a float matrix with incomplete rows removed, and the drop count.

    Row numbers in error messages count the header as row 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise SchemaError(f"{path}: duplicate column names {dupes}")
        rows = []
        dropped = 0
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise ParseError(f"{path}: row {lineno} has {len(raw)} fields, expected {len(header)}",
                                 row=lineno)
            vals = [_parse_cell(c, lineno, header[k]) for k, c in enumerate(raw)]
            if all(math.isfinite(v) for v in vals):
                rows.append(vals)
            else:
                dropped += 1
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return header, data, dropped


def load_csv(path, response_col: str, conditioning_cols: Sequence[str] = (),
             exclude_cols: Sequence[str] = ()) -> Dataset:
    """Route the response, conditioning and remaining columns of a CSV file."""
    header, data, dropped = read_matrix(path)
    index = {h: k for k, h in enumerate(header)}
    wanted = [response_col, *conditioning_cols, *exclude_cols]
    missing = [c for c in wanted if c not in index]
    if missing:
        raise SchemaError(f"columns not found in {path}: {missing}")
    if len(set(wanted)) != len(wanted):
        raise SchemaError("response, conditioning and excluded columns must be distinct")
    used = set(wanted)
    x_names = tuple(h for h in header if h not in used)
    W = data[:, [index[c] for c in conditioning_cols]] if conditioning_cols else None
    return Dataset(
        y=data[:, index[response_col]].copy(),
        X=data[:, [index[c] for c in x_names]],
        W=W,
        column_names=x_names,
        conditioning_names=tuple(conditioning_cols),
        response_name=response_col,
        dropped_rows=dropped,
    )


def write_csv(path, ds: Dataset) -> None:
    """Write ``ds`` so that ``load_csv`` restores every double exactly."""
    names = [ds.response_name, *ds.conditioning_names, *ds.column_names]
    if len(ds.column_names) != ds.p:
        names = [ds.response_name, *ds.conditioning_names, *[f"x{j + 1}" for j in range(ds.p)]]
    blocks = [ds.y[:, None]]
    if ds.W is not None:
        blocks.append(ds.W)
    blocks.append(ds.X)
    M = np.hstack(blocks)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in M:
            w.writerow([repr(float(v)) for v in row])


@dataclass
class OutlierReport:
    z_scores: np.ndarray
    outlier_indices: np.ndarray
    degenerate: bool = False
    median: float = math.nan
    mad: float = math.nan
    two_sided: bool = True
    cutoff: float = IH_CUTOFF
    notes: List[str] = field(default_factory=list)


def ih_outlier_report(column, two_sided: bool = True, cutoff: float = IH_CUTOFF) -> OutlierReport:
    """Modified z-scores ``0.6745 (x - median) / MAD`` and the indices beyond ``cutoff``.

    A zero MAD (more than half the values tied at the median) gives a report
    flagged ``degenerate`` with no scores and no indices.
    """
    x = np.asarray(column, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise InsufficientDataError("outlier report needs a 1-d column with n >= 3")
    med = float(np.median(x))
    mad = float(np.median(np.abs(x - med)))
    if not mad > 0:
        return OutlierReport(np.full(x.size, np.nan), np.array([], dtype=int), True, med, mad,
                             two_sided, cutoff, ["MAD is zero"])
    with np.errstate(over="ignore"):  # a subnormal MAD sends far points to +-inf, still flagged
        z = IH_CONSTANT * (x - med) / mad
    hit = np.abs(z) > cutoff if two_sided else z > cutoff
    return OutlierReport(z, np.flatnonzero(hit), False, med, mad, two_sided, cutoff)


__all__ = ["Dataset", "load_csv", "write_csv", "read_matrix", "OutlierReport",
           "ih_outlier_report", "IH_CONSTANT", "IH_CUTOFF"]
