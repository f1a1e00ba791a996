"""Saliency and tracking metrics plus the per-record CSV format."""

import csv
import io
from dataclasses import astuple, dataclass, fields

import numpy as np

from ._validation import check_map, check_mask
from .exceptions import ConfigurationError
from .imaging import box_center, mask_bbox

F_BETA2 = 0.3
CSV_HEADER = ("id", "precision", "recall", "f_measure", "iou_mask", "iou_bbox", "center_error_px")


def adaptive_threshold(saliency):
    """Twice the mean saliency of the map."""
    sal = check_map(saliency)
    return 2.0 * float(sal.mean())


def precision_recall(pred, gt):
    """Pixel precision and recall of a binary prediction.

    An empty prediction has precision 1 and an empty ground truth has
    recall 1, so both are always defined.
    """
    gt = check_mask(gt, name="ground truth")
    pred = check_mask(pred, gt.shape, name="prediction")
    tp = int(np.count_nonzero(pred & gt))
    n_pred = int(np.count_nonzero(pred))
    n_gt = int(np.count_nonzero(gt))
    precision = tp / n_pred if n_pred else 1.0
    recall = tp / n_gt if n_gt else 1.0
    return precision, recall


def f_measure(precision, recall, beta2=F_BETA2):
    """``(1 + b2) P R / (b2 P + R)``, or 0 when the denominator vanishes."""
    denom = beta2 * precision + recall
    if denom <= 0:
        return 0.0
    return (1.0 + beta2) * precision * recall / denom


def adaptive_f_measure(saliency, gt):
    """F-measure after binarizing at :func:`adaptive_threshold`."""
    sal = check_map(saliency)
    pred = (sal >= adaptive_threshold(sal)).astype(np.uint8)
    return f_measure(*precision_recall(pred, gt))


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float


def pr_curve(saliency, gt):
    """Precision/recall at thresholds ``k/255`` for ``k = 0..255`` and the curve's AUC.

    A pixel is predicted foreground when its value is ``>=`` the threshold.
    Maps with values above 1 are treated as 0..255 exports. The AUC is the
    trapezoidal area under precision over recall, with points sorted by
    recall and the curve starting at recall 0, precision 1.
    """
    sal = check_map(saliency)
    gt = check_mask(gt, sal.shape, name="ground truth").astype(bool)
    n_gt = int(gt.sum())
    if sal.max() > 1.0:
        sal = sal / 255.0
    thresholds = np.arange(256) / 255.0
    # level k = highest threshold the pixel reaches; -1 (below all) is dropped
    levels = np.searchsorted(thresholds, sal, side="right") - 1
    keep = levels >= 0
    levels, gt = levels[keep], gt[keep]
    fg_hist = np.bincount(levels[gt], minlength=256)
    all_hist = np.bincount(levels, minlength=256)
    tp = np.cumsum(fg_hist[::-1])[::-1]
    n_pred = np.cumsum(all_hist[::-1])[::-1]
    points = []
    for k in range(256):
        precision = tp[k] / n_pred[k] if n_pred[k] else 1.0
        recall = tp[k] / n_gt if n_gt else 1.0
        points.append(PRPoint(float(thresholds[k]), float(precision), float(recall)))
    order = sorted(points, key=lambda p: (p.recall, -p.precision))
    # curve anchored at (recall 0, precision 1) so a perfect map scores 1
    r = np.array([0.0] + [p.recall for p in order])
    pr = np.array([1.0] + [p.precision for p in order])
    auc = float(np.sum(np.diff(r) * (pr[1:] + pr[:-1]) / 2.0))
    return points, auc


def iou_mask(a, b):
    """Mask intersection over union; two empty masks count as a perfect match."""
    a = check_mask(a, name="mask a").astype(bool)
    b = check_mask(b, a.shape, name="mask b").astype(bool)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def iou_bbox(a, b):
    """IoU of two ``(x, y, w, h)`` boxes; ``None`` stands for an empty box."""
    area = lambda r: 0 if r is None else max(r[2], 0) * max(r[3], 0)  # noqa: E731
    if area(a) == 0 and area(b) == 0:
        return 1.0
    if area(a) == 0 or area(b) == 0:
        return 0.0
    ix = max(0, min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0]))
    iy = max(0, min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1]))
    inter = ix * iy
    return inter / (area(a) + area(b) - inter)


def center_precision(errors, radius=20.0):
    """Fraction of frames whose centre error is at most ``radius`` pixels."""
    errs = np.asarray(list(errors), dtype=np.float64)
    if errs.size == 0:
        raise ConfigurationError("center_precision needs at least one error value")
    return float(np.mean(errs <= radius))


@dataclass(frozen=True)
class EvalRecord:
    id: str
    precision: float
    recall: float
    f_measure: float
    iou_mask: float
    iou_bbox: float
    center_error_px: float


def evaluate_masks(record_id, pred, gt):
    """Full metric row for a binary prediction against a ground-truth mask."""
    pred = check_mask(pred, name="prediction")
    gt = check_mask(gt, pred.shape, name="ground truth")
    p, r = precision_recall(pred, gt)
    pb, gb = mask_bbox(pred), mask_bbox(gt)
    if pb is None or gb is None:
        # no centre exists; charge the image diagonal
        err = 0.0 if pb is None and gb is None else float(np.hypot(*pred.shape))
    else:
        err = float(np.hypot(*np.subtract(box_center(pb), box_center(gb))))
    return EvalRecord(str(record_id), p, r, f_measure(p, r), iou_mask(pred, gt), iou_bbox(pb, gb), err)


def evaluate_saliency(record_id, saliency, gt):
    """Metric row for a saliency map binarized at the adaptive threshold."""
    sal = check_map(saliency)
    pred = (sal >= adaptive_threshold(sal)).astype(np.uint8)
    return evaluate_masks(record_id, pred, gt)


def records_to_csv(records):
    """Serialize records with 6-decimal fixed-point fields and LF endings."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for rec in records:
        row = astuple(rec)
        writer.writerow([row[0]] + [f"{v:.6f}" for v in row[1:]])
    return buf.getvalue()


def write_csv(records, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(records_to_csv(records))


def summarize(records):
    """Mean of every numeric field across records."""
    names = [f.name for f in fields(EvalRecord)][1:]
    if not records:
        return {n: float("nan") for n in names}
    return {n: float(np.mean([getattr(r, n) for r in records])) for n in names}
