"""Distance and orientation error metrics and class/range reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, DomainError, EmptySetError

RANGE_EDGES = (0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 150)


def _paired(preds, truths):
    p = np.asarray(preds, dtype=np.float64).reshape(-1)
    t = np.asarray(truths, dtype=np.float64).reshape(-1)
    if p.size != t.size:
        raise DimensionError(f"{p.size} predictions but {t.size} ground-truth values")
    if p.size == 0:
        raise EmptySetError("metric over an empty set")
    return p, t


def _mean(values):
    # correctly rounded sum: the result does not depend on summation order
    return math.fsum(values.tolist()) / values.size


def mae(preds, truths):
    """Mean absolute error, in the units of the inputs."""
    p, t = _paired(preds, truths)
    return _mean(np.abs(t - p))


def mre(preds, truths):
    """Mean relative error |d - d_hat| / d as a fraction. Every truth must be > 0."""
    p, t = _paired(preds, truths)
    if np.any(t <= 0):
        raise DomainError("relative error is undefined for non-positive ground truth")
    return _mean(np.abs(t - p) / t)


def pose_mae(pred_deg, truth_deg):
    """Mean absolute orientation error in degrees over the folded [0, 90] domain."""
    p, t = _paired(pred_deg, truth_deg)
    if np.any((p < 0) | (p > 90)) or np.any((t < 0) | (t > 90)):
        raise DomainError("effective orientations must lie in [0, 90] degrees")
    return _mean(np.abs(t - p))


def range_label(lo, hi):
    return f"{lo}-{hi}"


def range_bin(distance, edges=RANGE_EDGES):
    """Index of the half-open bin [lo, hi) holding ``distance``; the last bin is closed."""
    if distance < edges[0] or distance > edges[-1]:
        raise DomainError(f"distance {distance} outside [{edges[0]}, {edges[-1]}]")
    idx = int(np.searchsorted(edges, distance, side="right")) - 1
    return min(idx, len(edges) - 2)


@dataclass
class Aggregate:
    count: int = 0
    mae_m: float | None = None
    mre: float | None = None
    mre_excluded: int = 0

    @classmethod
    def of(cls, preds, truths):
        p = np.asarray(preds, dtype=np.float64)
        t = np.asarray(truths, dtype=np.float64)
        if p.size == 0:
            return cls()
        pos = t > 0
        return cls(
            count=int(p.size),
            mae_m=mae(p, t),
            mre=mre(p[pos], t[pos]) if pos.any() else None,
            mre_excluded=int((~pos).sum()),
        )


@dataclass
class EvalReport:
    overall: Aggregate
    per_class: dict = field(default_factory=dict)
    per_range: dict = field(default_factory=dict)
    pose_mae_deg: float | None = None

    def to_dict(self):
        return {
            "overall": asdict(self.overall),
            "per_class": {k: asdict(v) for k, v in self.per_class.items()},
            "per_range": {k: asdict(v) for k, v in self.per_range.items()},
            "pose_mae_deg": self.pose_mae_deg,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            overall=Aggregate(**d["overall"]),
            per_class={k: Aggregate(**v) for k, v in d["per_class"].items()},
            per_range={k: Aggregate(**v) for k, v in d["per_range"].items()},
            pose_mae_deg=d.get("pose_mae_deg"),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def csv_rows(self):
        rows = [("overall", "all", self.overall)]
        rows += [("class", k, v) for k, v in self.per_class.items()]
        rows += [("range", k, v) for k, v in self.per_range.items()]
        out = []
        for scope, key, agg in rows:
            out.append(
                [
                    scope,
                    key,
                    agg.count,
                    "" if agg.mae_m is None else repr(agg.mae_m),
                    "" if agg.mre is None else repr(agg.mre * 100.0),
                ]
            )
        return out

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scope", "key", "count", "mae_m", "mre_pct"])
        w.writerows(self.csv_rows())
        return buf.getvalue()

    def write(self, stem):
        """Write ``<stem>.json`` and ``<stem>.csv``."""
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        stem.with_suffix(".json").write_text(self.to_json())
        stem.with_suffix(".csv").write_text(self.to_csv())


def build_report(preds, truths, classes, pose_pred=None, pose_truth=None, edges=RANGE_EDGES):
    """Overall, per-class and per-range aggregates of distance predictions.

    Bins follow the ground-truth distance. Zero-distance truths count towards
    MAE but are excluded from MRE (see ``mre_excluded``). Empty bins keep
    ``count == 0`` and null metrics.
    """
    p = np.asarray(preds, dtype=np.float64).reshape(-1)
    t = np.asarray(truths, dtype=np.float64).reshape(-1)
    classes = list(classes)
    if not (p.size == t.size == len(classes)):
        raise DimensionError("predictions, truths and classes differ in length")
    if p.size == 0:
        raise EmptySetError("cannot build a report without any prediction")
    bins = np.array([range_bin(d, edges) for d in t], dtype=int)
    cls_arr = np.array(classes, dtype=object)
    per_class = {c: Aggregate.of(p[cls_arr == c], t[cls_arr == c]) for c in sorted(set(classes))}
    per_range = {
        range_label(edges[i], edges[i + 1]): Aggregate.of(p[bins == i], t[bins == i])
        for i in range(len(edges) - 1)
    }
    pose = None
    if pose_pred is not None:
        pose = pose_mae(pose_pred, pose_truth)
    return EvalReport(Aggregate.of(p, t), per_class, per_range, pose)
