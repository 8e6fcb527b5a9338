"""Data ingestion and per-column preprocessing.

The normal-scores transform maps each column through its empirical CDF
evaluated as rank/(n+1) (average ranks on ties, keeping the quantile
finite at the extremes), then through the inverse normal CDF, then
standardizes to mean zero and unit sample variance.  Recorded per-column
statistics are sufficient to replay the transform bit-exactly on the
training data and to map held-out data through the training quantiles.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._stats import norm_ppf
from .errors import ConstantColumn, ParseError, RowCountMismatch, UsageError
from .types import MultiViewDataset

MODES = ("none", "standardize", "rank-normal")


def _ecdf_positions(train_sorted, values):
    # average-rank empirical CDF of `values` against the training column
    left = np.searchsorted(train_sorted, values, side="left")
    right = np.searchsorted(train_sorted, values, side="right")
    return (left + right + 1.0) / 2.0 / (train_sorted.shape[0] + 1.0)


def rank_normal_transform(column):
    """Normal-scores transform of one column (tied values map equally)."""
    column = np.asarray(column, dtype=float)
    if column.shape[0] < 2:
        raise UsageError("need at least two values")
    ordered = np.sort(column)
    if ordered[0] == ordered[-1]:
        raise ConstantColumn("all values equal; the transform is undefined")
    z = norm_ppf(_ecdf_positions(ordered, column))
    sd = float(np.std(z, ddof=1))
    return (z - float(np.mean(z))) / sd


@dataclass
class PreprocessSpec:
    """Fitted per-view, per-column transform parameters.

    ``stats[m]`` is None for mode "none"; for "standardize" it holds the
    training means and sample standard deviations; for "rank-normal" it
    additionally holds each sorted training column.
    """

    mode: str
    stats: list

    def apply(self, dataset):
        """Transform a dataset with the recorded training statistics."""
        if self.mode == "none":
            return dataset
        out = []
        for m, view in enumerate(dataset.views):
            view = np.asarray(view, dtype=float)
            st = self.stats[m]
            if view.shape[1] != len(st["mean"]):
                raise UsageError(
                    f"view {m} has {view.shape[1]} columns, spec has {len(st['mean'])}")
            mean = np.asarray(st["mean"])
            sd = np.asarray(st["sd"])
            if self.mode == "standardize":
                out.append((view - mean[None, :]) / sd[None, :])
            else:
                cols = np.empty_like(view)
                for j in range(view.shape[1]):
                    ordered = np.asarray(st["sorted"][j])
                    z = norm_ppf(_ecdf_positions(ordered, view[:, j]))
                    cols[:, j] = (z - mean[j]) / sd[j]
                out.append(cols)
        return MultiViewDataset(views=out, view_names=list(dataset.view_names))

    def to_records(self):
        if self.mode == "none":
            return [{"mode": "none"} for _ in self.stats]
        records = []
        for st in self.stats:
            rec = {"mode": self.mode, "mean": list(st["mean"]), "sd": list(st["sd"])}
            if self.mode == "rank-normal":
                rec["sorted"] = [list(c) for c in st["sorted"]]
            records.append(rec)
        return records

    @classmethod
    def from_records(cls, records):
        if not records:
            return cls(mode="none", stats=[])
        mode = records[0]["mode"]
        if mode == "none":
            return cls(mode="none", stats=[None] * len(records))
        stats = []
        for rec in records:
            st = {"mean": np.asarray(rec["mean"], dtype=float),
                  "sd": np.asarray(rec["sd"], dtype=float)}
            if mode == "rank-normal":
                st["sorted"] = [np.asarray(c, dtype=float) for c in rec["sorted"]]
            stats.append(st)
        return cls(mode=mode, stats=stats)


def fit_preprocess(dataset, mode):
    """Fit the requested transform and return (spec, transformed dataset)."""
    if mode not in MODES:
        raise UsageError(f"unknown preprocessing mode {mode!r}")
    if mode == "none":
        return PreprocessSpec(mode="none", stats=[None] * dataset.n_views), dataset
    stats, views = [], []
    for m, view in enumerate(dataset.views):
        view = np.asarray(view, dtype=float)
        if mode == "standardize":
            mean = np.mean(view, axis=0)
            sd = np.std(view, axis=0, ddof=1)
            if np.any(sd == 0):
                raise ConstantColumn(f"view {m} has a constant column")
            stats.append({"mean": mean, "sd": sd})
            views.append((view - mean[None, :]) / sd[None, :])
        else:
            ordered = [np.sort(view[:, j]) for j in range(view.shape[1])]
            z = np.empty_like(view)
            for j, col in enumerate(ordered):
                if col[0] == col[-1]:
                    raise ConstantColumn(f"view {m} column {j} is constant")
                z[:, j] = norm_ppf(_ecdf_positions(col, view[:, j]))
            mean = np.mean(z, axis=0)
            sd = np.std(z, axis=0, ddof=1)
            stats.append({"sorted": ordered, "mean": mean, "sd": sd})
            views.append((z - mean[None, :]) / sd[None, :])
    spec = PreprocessSpec(mode=mode, stats=stats)
    return spec, MultiViewDataset(views=views, view_names=list(dataset.view_names))


def load_views(paths, delimiter=",", header=False):
    """Read one CSV matrix per view; rows align by file order.

    Raises ``ParseError`` with a 1-based (line, column) location on any
    non-numeric cell and ``RowCountMismatch`` when files disagree on the
    sample count.
    """
    views, names = [], []
    n_rows = None
    for path in paths:
        path = Path(path)
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh, delimiter=delimiter)
            for line_no, cells in enumerate(reader, start=1):
                if header and line_no == 1:
                    continue
                if not cells:
                    continue
                parsed = []
                for col_no, cell in enumerate(cells, start=1):
                    try:
                        parsed.append(float(cell))
                    except ValueError:
                        raise ParseError(str(path), line_no, col_no,
                                         f"not a number: {cell!r}") from None
                if rows and len(parsed) != len(rows[0]):
                    raise ParseError(str(path), line_no, 1,
                                     f"expected {len(rows[0])} columns, got {len(parsed)}")
                rows.append(parsed)
        if n_rows is None:
            n_rows = len(rows)
        elif len(rows) != n_rows:
            raise RowCountMismatch(
                f"{path} has {len(rows)} rows, expected {n_rows}")
        views.append(np.asarray(rows, dtype=float))
        names.append(path.stem)
    return MultiViewDataset(views=views, view_names=names)


def save_views(dataset, paths, delimiter=","):
    """Write one CSV per view with 17-significant-digit values."""
    if len(paths) != dataset.n_views:
        raise UsageError("one output path per view required")
    for view, path in zip(dataset.views, paths):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, delimiter=delimiter)
            for row in view:
                writer.writerow(["%.17g" % v for v in row])
