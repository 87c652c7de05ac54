"""Phase-boundary localization, shift estimation, and accuracy reporting.

The C=0 phase occupies a band around t3 = 0 with C=1 outside (for the
m < -10 window); boundaries are located per m-row as the midpoint of the
first adjacent grid pair whose labels change between the two classes when
scanning outward from t3 = 0 on each sign side.  The estimator resolution
is the t3 grid step; its half is the quoted uncertainty.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInput, LengthMismatch, NoTransition

__all__ = [
    "BoundaryCrossing", "BoundaryEstimate", "OutlierMap",
    "boundary_midpoints", "boundary_shift", "misclassification_map",
    "accuracy_table", "mean_per_class",
]


@dataclass(frozen=True)
class BoundaryCrossing:
    m: float
    side: int            # sign of the t3 half-axis the crossing was found on
    t3_left: float       # smaller t3 of the bracketing pair
    t3_right: float      # larger t3 of the bracketing pair
    midpoint: float

    def to_dict(self) -> dict:
        return {"m": self.m, "side": self.side, "t3_left": self.t3_left,
                "t3_right": self.t3_right, "midpoint": self.midpoint}


@dataclass
class BoundaryEstimate:
    per_m: list[BoundaryCrossing]
    shift: float
    resolution: float
    half_resolution_uncertainty: float
    skipped: list[tuple[float, int]] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "per_m": [c.to_dict() for c in self.per_m],
            "shift": self.shift,
            "resolution": self.resolution,
            "half_resolution_uncertainty": self.half_resolution_uncertainty,
            "skipped": [{"m": m, "side": s} for m, s in self.skipped],
        }, indent=2)


def boundary_midpoints(m_axis, t3_axis, labels, classes: tuple[int, int] = (0, 1),
                       reference=None):
    """Locate the class boundary on each m-row, scanning outward per t3 side.

    labels has shape (len(m_axis), len(t3_axis)).  A crossing is the first
    adjacent pair of cells (walking away from t3 = 0) whose labels are the
    two target classes in either order; cells with other labels (including
    the gapless sentinel) never form a pair.  With `reference` (a callable
    m, side -> t3 or a dict keyed by (m, side)), the crossing closest to the
    reference is chosen instead of the first, which disambiguates rows with
    label noise.  Rows with no crossing on a side are reported in the second
    return value as (m, side) pairs.
    """
    m_axis = np.asarray(m_axis, dtype=float)
    t3_axis = np.asarray(t3_axis, dtype=float)
    labels = np.asarray(labels)
    if labels.shape != (m_axis.size, t3_axis.size):
        raise LengthMismatch(
            f"labels shape {labels.shape} != ({m_axis.size}, {t3_axis.size})")
    order = np.argsort(t3_axis)
    t3_sorted = t3_axis[order]
    wanted = set(classes)
    crossings: list[BoundaryCrossing] = []
    skipped: list[tuple[float, int]] = []
    for i, m in enumerate(m_axis):
        row = labels[i][order]
        # every adjacent pair belongs to the t3 half-axis its midpoint lies on
        pairs = []
        for a in range(len(t3_sorted) - 1):
            if {int(row[a]), int(row[a + 1])} == wanted:
                mid = 0.5 * (t3_sorted[a] + t3_sorted[a + 1])
                pairs.append(BoundaryCrossing(
                    m=float(m), side=1 if mid >= 0.0 else -1,
                    t3_left=float(t3_sorted[a]), t3_right=float(t3_sorted[a + 1]),
                    midpoint=float(mid)))
        for side in (1, -1):
            # outward scan: ascending midpoints on the positive side,
            # descending on the negative side
            found = sorted((c for c in pairs if c.side == side),
                           key=lambda c: side * c.midpoint)
            if not found:
                skipped.append((float(m), side))
            elif reference is None:
                crossings.append(found[0])
            else:
                ref = (reference(m, side) if callable(reference)
                       else reference[(float(m), side)])
                crossings.append(min(found, key=lambda c: abs(c.midpoint - ref)))
    if not crossings:
        raise NoTransition("no class boundary found on any row")
    return crossings, skipped


def boundary_shift(crossings: list[BoundaryCrossing], reference,
                   resolution: float,
                   skipped: list[tuple[float, int]] | None = None) -> BoundaryEstimate:
    """Average signed boundary displacement sgn(t3) * (midpoint - reference).

    `reference` maps (m, side) to the unperturbed boundary position, either
    a callable or a dict; crossings without a reference entry are dropped.
    """
    if not crossings:
        raise EmptyInput("no boundary crossings to average")
    shifts = []
    for c in crossings:
        if callable(reference):
            ref = reference(c.m, c.side)
        else:
            ref = reference.get((c.m, c.side))
        if ref is None:
            continue
        shifts.append(c.side * (c.midpoint - ref))
    if not shifts:
        raise EmptyInput("no crossing matched a reference boundary")
    return BoundaryEstimate(per_m=list(crossings),
                            shift=float(np.mean(shifts)),
                            resolution=float(resolution),
                            half_resolution_uncertainty=float(resolution) / 2.0,
                            skipped=list(skipped or []))


@dataclass
class OutlierMap:
    points: list[dict]

    def to_json(self) -> str:
        return json.dumps({"points": self.points}, indent=2)

    def save(self, path: str | Path):
        Path(path).write_text(self.to_json())


def misclassification_map(predictions, truths, params_list) -> OutlierMap:
    """Collect (m, t3, true, predicted) for every disagreement."""
    predictions = list(predictions)
    truths = list(truths)
    params_list = list(params_list)
    if not len(predictions) == len(truths) == len(params_list):
        raise LengthMismatch(
            f"lengths differ: {len(predictions)} predictions, "
            f"{len(truths)} truths, {len(params_list)} params")
    points = []
    for pred, true, p in zip(predictions, truths, params_list):
        if int(pred) != int(true):
            points.append({"m": p.m, "t3": p.t3, "true_label": int(true),
                           "predicted_label": int(pred)})
    return OutlierMap(points=points)


def mean_per_class(metrics_list):
    """Arithmetic mean of per-class and overall accuracies over seeds."""
    classes = metrics_list[0].classes
    per = {c: float(np.mean([m.per_class_accuracy[c] for m in metrics_list]))
           for c in classes}
    overall = float(np.mean([m.overall for m in metrics_list]))
    return per, overall


def _table_cells(entries: list[dict], exclude_abs2: bool) -> list[list[str]]:
    if not entries:
        raise EmptyInput("no metrics entries")
    first = entries[0]["metrics"]
    classes = (first[0] if isinstance(first, list) else first).classes
    header = ["Region", "Domain"] + [f"C={c:+d}" for c in classes] + ["Overall"]
    if exclude_abs2:
        header.append("Overall(|C|<2)")
    rows = [header]
    for e in entries:
        ms = e["metrics"] if isinstance(e["metrics"], list) else [e["metrics"]]
        per, overall = mean_per_class(ms)
        row = [str(e.get("region", "-")), str(e.get("domain", "-"))]
        row += [f"{per[c]:.3f}" for c in classes]
        row.append(f"{overall:.3f}")
        if exclude_abs2:
            excl = float(np.mean([m.overall_excluding({-2, 2}) for m in ms]))
            row.append(f"{excl:.3f}")
        rows.append(row)
    return rows


def accuracy_table(entries: list[dict], exclude_abs2: bool = False) -> str:
    """Aligned text table of per-class and overall accuracies.

    Each entry: {"region", "domain", "metrics"} where metrics is a Metrics
    or a list of Metrics (averaged over seeds).  With exclude_abs2, an extra
    column reports the overall accuracy with the |C| = 2 classes dropped.
    """
    rows = _table_cells(entries, exclude_abs2)
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip()
             for r in rows]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines)


def accuracy_csv(entries: list[dict], exclude_abs2: bool = False) -> str:
    """Same cells as accuracy_table, comma-separated."""
    return "\n".join(",".join(row) for row in _table_cells(entries, exclude_abs2))
