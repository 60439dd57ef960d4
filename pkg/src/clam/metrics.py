"""Fairness metrics over per-class accuracy vectors.

The mean is the average ``(1/n) sum v_i``, not the raw sum; with the raw
sum the coefficient of variation would come out ``n`` times too small.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

REPORT_COLUMNS = ("std", "cov", "range", "mean_acc", "worst_acc")
AGGREGATE_COLUMNS = ("method",) + REPORT_COLUMNS


@dataclass(frozen=True)
class FairnessReport:
    mean: float
    range: float
    std: float
    cov: float
    worst_fraction: float
    worst_fraction_acc: float
    v: tuple

    @property
    def n(self) -> int:
        return len(self.v)

    def row(self) -> dict:
        """Values in the fixed column order std, cov, range, mean_acc, worst_acc."""
        return {"std": self.std, "cov": self.cov, "range": self.range,
                "mean_acc": self.mean, "worst_acc": self.worst_fraction_acc}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["v"] = list(self.v)
        return d

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def worst_count(n: int, worst_fraction: float) -> int:
    return max(1, int(math.floor(worst_fraction * n + 1e-9)))


def fairness_report(v, worst_fraction: float = 0.1) -> FairnessReport:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise ValueError("need at least two class accuracies")
    if not 0 < worst_fraction <= 1:
        raise ValueError("worst_fraction must lie in (0, 1]")
    mean = float(v.mean())
    std = float(v.std(ddof=1))
    cov = std / mean if mean > 0 else math.inf if std > 0 else 0.0
    k = worst_count(v.size, worst_fraction)
    worst = float(np.sort(v, kind="stable")[:k].mean())
    return FairnessReport(mean, float(v.max() - v.min()), std, cov, worst_fraction, worst, tuple(v.tolist()))


def range_difference(with_da: FairnessReport, without_da: FairnessReport) -> float:
    """Range with augmentation minus range without; negative is better."""
    if with_da.n != without_da.n:
        raise ValueError(f"reports cover {with_da.n} and {without_da.n} classes")
    return with_da.range - without_da.range


def aggregate(items) -> dict:
    """Mean and sample std over runs, per field.

    ``items`` is a list of FairnessReports (summarised per report column) or
    of plain numbers (summarised as ``{"mean", "std", "n"}``).
    """
    items = list(items)
    if not items:
        raise ValueError("nothing to aggregate")

    def summary(xs):
        xs = np.asarray(xs, dtype=float)
        return {"mean": float(xs.mean()), "std": float(xs.std(ddof=1)) if xs.size > 1 else 0.0, "n": int(xs.size)}

    if isinstance(items[0], FairnessReport):
        rows = [r.row() for r in items]
        return {col: summary([r[col] for r in rows]) for col in REPORT_COLUMNS}
    return summary(items)


def write_report_rows(path, rows: list[dict], columns) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        wr.writeheader()
        for r in rows:
            wr.writerow(r)
