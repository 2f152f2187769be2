"""Detection evaluation: per-record pose metrics, VOC-style average
precision over threshold predicates, the five-column metric table
(IoU50 / IoU75 / 10cm / 10deg / 10deg10cm), and AP-vs-threshold curves.

Matching policy: detections are handled per predicted category, sorted by
descending confidence (stable on ties), and each is greedily assigned the
unmatched ground truth of that category with the highest box IoU (requiring
positive overlap). Ground-truth categories absent from a record set are
reported but omitted from the mean.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .boxes import OrientedBox3, box_from_estimate, iou3d
from .errors import EmptyRecordSet, NoGroundTruth
from .geometry import (
    RigidPose,
    rotation_error_deg,
    rotation_error_symmetric_deg,
    translation_error_cm,
)

# Categories treated as rotationally symmetric about their canonical y-axis.
SYMMETRIC_CATEGORIES = frozenset({"bottle", "bowl", "can"})
SYMMETRY_AXIS = np.array([0.0, 1.0, 0.0])

TABLE_COLUMNS = ("IoU50", "IoU75", "10cm", "10°", "10°10cm")


@dataclass(frozen=True)
class GroundTruthBox:
    """One annotated object: pose, metric scale, unit-diagonal extents."""

    category: str
    pose: RigidPose
    scale: float
    canonical_extents: tuple[float, float, float]

    def box(self) -> OrientedBox3:
        return box_from_estimate(self.pose, self.scale, self.canonical_extents)


@dataclass(frozen=True)
class DetectionRecord:
    """One detection, optionally carrying its matched ground truth."""

    category: str
    confidence: float
    pose: RigidPose
    scale: float
    canonical_extents: tuple[float, float, float]
    ground_truth: GroundTruthBox | None = None

    def box(self) -> OrientedBox3:
        return box_from_estimate(self.pose, self.scale, self.canonical_extents)


@dataclass(frozen=True)
class ApCurve:
    """AP sampled over a threshold grid; per-category values plus the mean."""

    metric: str
    thresholds: tuple[float, ...]
    categories: tuple[str, ...]
    per_category: np.ndarray  # (len(thresholds), len(categories))
    mean: np.ndarray  # (len(thresholds),)


def pose_metrics(record: DetectionRecord, use_symmetry=True):
    """IoU, rotation error (deg) and translation error (cm) against the
    record's ground truth.

    Symmetric categories (bottle, bowl, can) use the symmetry-aware
    rotation error about the canonical y-axis unless ``use_symmetry`` is
    off.

    Raises
    ------
    NoGroundTruth
        If the record has no matched ground truth.
    """
    gt = record.ground_truth
    if gt is None:
        raise NoGroundTruth(f"record for {record.category!r} has no ground truth")
    if use_symmetry and record.category in SYMMETRIC_CATEGORIES:
        rot_err = rotation_error_symmetric_deg(record.pose.rotation, gt.pose.rotation, SYMMETRY_AXIS)
    else:
        rot_err = rotation_error_deg(record.pose.rotation, gt.pose.rotation)
    return {
        "iou": iou3d(record.box(), gt.box()),
        "rot_err_deg": rot_err,
        "trans_err_cm": translation_error_cm(record.pose.translation, gt.pose.translation),
    }


def match_detections(detections, ground_truths):
    """Greedily attach ground truths to detections within each category.

    Association for record streams that carry no pairing of their own
    (e.g. prediction/ground-truth files): detections are visited in
    descending confidence (input order breaks ties) and each takes the
    unmatched same-category ground truth with the highest IoU, provided
    the overlap is positive. Records whose detection-to-truth pairing is
    already known (the simulator's output) should skip this and attach
    their ground truth directly.

    Returns new records in the original input order; any previously
    attached ground truth is discarded first.
    """
    detections = list(detections)
    order = _confidence_order(detections)
    taken = [False] * len(ground_truths)
    matched = [replace(det, ground_truth=None) for det in detections]
    for idx in order:
        det = detections[idx]
        det_box = det.box()
        best_j = -1
        best_iou = 0.0
        for j, gt in enumerate(ground_truths):
            if taken[j] or gt.category != det.category:
                continue
            overlap = iou3d(det_box, gt.box())
            if overlap > best_iou:
                best_iou = overlap
                best_j = j
        if best_j >= 0:
            taken[best_j] = True
            matched[idx] = replace(det, ground_truth=ground_truths[best_j])
    return matched


def _confidence_order(detections):
    conf = np.array([d.confidence for d in detections], dtype=np.float64)
    return np.argsort(-conf, kind="stable")


def average_precision(records, ground_truths, predicate, use_symmetry=True):
    """Area under the precision-recall curve for one category's records.

    ``records`` are matched detections of a single category,
    ``ground_truths`` the category's gt count or gt list. A detection is a
    true positive iff it has a matched ground truth and ``predicate``
    holds on its pose metrics. Precision is envelope-interpolated
    (monotone non-increasing) before integrating over recall.
    """
    records = list(records)
    n_gt = ground_truths if isinstance(ground_truths, int) else len(list(ground_truths))
    metrics_list = [
        pose_metrics(r, use_symmetry=use_symmetry) if r.ground_truth else None for r in records
    ]
    return _ap_from_cached(records, metrics_list, n_gt, predicate)


def iou_predicate(threshold):
    return lambda m: m["iou"] >= threshold


def rotation_predicate(threshold_deg):
    return lambda m: m["rot_err_deg"] <= threshold_deg


def translation_predicate(threshold_cm):
    return lambda m: m["trans_err_cm"] <= threshold_cm


def rotation_translation_predicate(threshold_deg, threshold_cm):
    return lambda m: m["rot_err_deg"] <= threshold_deg and m["trans_err_cm"] <= threshold_cm


TABLE_PREDICATES = {
    "IoU50": iou_predicate(0.5),
    "IoU75": iou_predicate(0.75),
    "10cm": translation_predicate(10.0),
    "10°": rotation_predicate(10.0),
    "10°10cm": rotation_translation_predicate(10.0, 10.0),
}


def _group_by_category(records, ground_truths):
    cats = sorted({gt.category for gt in ground_truths})
    grouped = {}
    skipped = sorted({r.category for r in records} - set(cats))
    for cat in cats:
        grouped[cat] = (
            [r for r in records if r.category == cat],
            sum(1 for gt in ground_truths if gt.category == cat),
        )
    return grouped, skipped


@dataclass(frozen=True)
class MetricTable:
    """Per-category AP (fractions in [0, 1]) for the five standard metrics,
    plus their unweighted mean; categories ordered lexicographically."""

    categories: tuple[str, ...]
    values: np.ndarray  # (len(categories), 5)
    mean: np.ndarray  # (5,)
    skipped_categories: tuple[str, ...] = ()

    def row(self, category):
        return self.values[self.categories.index(category)]

    def to_text(self):
        """Aligned table with percentages at one decimal."""
        width = max([len("category")] + [len(c) for c in self.categories + ("mean",)])
        header = "category".ljust(width) + "".join(f"{c:>10}" for c in TABLE_COLUMNS)
        lines = [header]
        for cat, row in zip(self.categories, self.values):
            lines.append(cat.ljust(width) + "".join(f"{100 * v:>10.1f}" for v in row))
        lines.append("mean".ljust(width) + "".join(f"{100 * v:>10.1f}" for v in self.mean))
        return "\n".join(lines) + "\n"

    def to_csv(self):
        lines = ["category," + ",".join(TABLE_COLUMNS)]
        for cat, row in zip(self.categories, self.values):
            lines.append(cat + "," + ",".join(repr(float(v)) for v in row))
        lines.append("mean," + ",".join(repr(float(v)) for v in self.mean))
        return "\n".join(lines) + "\n"


def metric_table(records, ground_truths, use_symmetry=True) -> MetricTable:
    """mAP at the five standard thresholds over matched records.

    Records must already carry their matched ground truths (see
    :func:`match_detections`). Detection categories absent from the gt set
    are skipped and reported in ``skipped_categories``.
    """
    grouped, skipped = _group_by_category(records, ground_truths)
    if not grouped:
        raise EmptyRecordSet("no ground-truth categories to evaluate")
    cats = tuple(grouped)
    values = np.zeros((len(cats), len(TABLE_COLUMNS)))
    for i, cat in enumerate(cats):
        recs, n_gt = grouped[cat]
        for j, name in enumerate(TABLE_COLUMNS):
            values[i, j] = average_precision(
                recs, n_gt, TABLE_PREDICATES[name], use_symmetry=use_symmetry
            )
    return MetricTable(cats, values, values.mean(axis=0), tuple(skipped))


_CURVE_PREDICATES = {
    "iou": (iou_predicate, False),
    "rotation_deg": (rotation_predicate, True),
    "translation_cm": (translation_predicate, True),
}


def ap_curves(records, ground_truths, metric, thresholds, use_symmetry=True) -> ApCurve:
    """AP per threshold on one metric axis.

    ``metric`` is one of 'iou', 'rotation_deg', 'translation_cm'; the
    threshold grid must be strictly increasing. IoU uses a >= predicate,
    the error metrics use <=.
    """
    if metric not in _CURVE_PREDICATES:
        raise ValueError(f"unknown metric {metric!r}; choose from {sorted(_CURVE_PREDICATES)}")
    thresholds = [float(t) for t in thresholds]
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])) or not thresholds:
        raise ValueError("threshold grid must be non-empty and strictly increasing")
    make_predicate, _ = _CURVE_PREDICATES[metric]

    grouped, _ = _group_by_category(records, ground_truths)
    if not grouped:
        raise EmptyRecordSet("no ground-truth categories to evaluate")
    cats = tuple(grouped)

    # metrics are threshold-independent; compute once per record
    cached = {
        cat: ([pose_metrics(r, use_symmetry=use_symmetry) if r.ground_truth else None for r in recs], recs, n_gt)
        for cat, (recs, n_gt) in grouped.items()
    }
    per_cat = np.zeros((len(thresholds), len(cats)))
    for ti, thr in enumerate(thresholds):
        predicate = make_predicate(thr)
        for ci, cat in enumerate(cats):
            metrics_list, recs, n_gt = cached[cat]
            per_cat[ti, ci] = _ap_from_cached(recs, metrics_list, n_gt, predicate)
    return ApCurve(metric, tuple(thresholds), cats, per_cat, per_cat.mean(axis=1))


def _ap_from_cached(records, metrics_list, n_gt, predicate):
    if n_gt == 0:
        raise EmptyRecordSet("average precision needs at least one ground truth")
    if not records:
        return 0.0
    order = _confidence_order(records)
    tp = np.zeros(len(records))
    for rank, idx in enumerate(order):
        m = metrics_list[idx]
        if m is not None and predicate(m):
            tp[rank] = 1.0
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(1.0 - tp)
    recall = cum_tp / n_gt
    precision = cum_tp / (cum_tp + cum_fp)
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    ap = 0.0
    prev = 0.0
    for r, p in zip(recall, precision):
        if r > prev:
            ap += (r - prev) * p
            prev = r
    return float(ap)


def curve_csv(curve: ApCurve):
    """CSV rows: threshold, one column per category, then the mean."""
    lines = ["threshold," + ",".join(curve.categories) + ",mean"]
    for ti, thr in enumerate(curve.thresholds):
        cells = [repr(float(thr))]
        cells += [repr(float(v)) for v in curve.per_category[ti]]
        cells.append(repr(float(curve.mean[ti])))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
