"""Detection evaluation: IoU, the binary IoU-thresholded accuracy,
precision/recall/F1 over greedily matched detections, and inference-time
summaries.

Accuracy is the binary per-image protocol: an image scores 1 iff its best
matched IoU is strictly greater than 0.7 (exactly 0.7 counts as a miss).
The same threshold is the default matching criterion for precision/recall,
keeping a single coherent notion of "correct detection".
"""
from __future__ import annotations

from dataclasses import dataclass


from platekit import kernels
from platekit.annot import BoundingBox
from platekit.errors import DataError

HIT_IOU_THRESHOLD = 0.7


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    confidence: float
    class_id: int = 0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise DataError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class EvalOutcome:
    accuracy: float
    precision: float
    recall: float
    f1: float
    mean_iou: float
    n_images: int


@dataclass(frozen=True)
class TimingSummary:
    mean_ms: float
    n_samples: int


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union


def binary_hit(iou_value: float) -> int:
    """1 iff IoU strictly exceeds 0.7, else 0."""
    return 1 if iou_value > HIT_IOU_THRESHOLD else 0


def match_detections(preds, gts, iou_threshold: float = HIT_IOU_THRESHOLD):
    """Greedy one-to-one matching in descending confidence order.

    Each prediction takes the unmatched ground truth with the highest IoU;
    the pair counts as a true positive iff that IoU strictly exceeds the
    threshold.  Leftover predictions are false positives, leftover ground
    truths false negatives.  Ties (confidence or IoU) break on input order
    for determinism.

    Returns (tp, fp, fn, matched_ious).
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    if not preds:
        return 0, 0, len(gts), []
    if not gts:
        return 0, len(preds), 0, []

    order = sorted(range(len(preds)), key=lambda i: -preds[i].confidence)
    matrix = kernels.iou_matrix(
        [preds[i].box.as_tuple() for i in range(len(preds))],
        [g.as_tuple() for g in gts],
    )
    taken = [False] * len(gts)
    tp = 0
    matched_ious = []
    for i in order:
        best_j, best = -1, 0.0
        for j in range(len(gts)):
            if not taken[j] and matrix[i, j] > best:
                best_j, best = j, matrix[i, j]
        if best_j >= 0 and best > iou_threshold:
            taken[best_j] = True
            tp += 1
            matched_ious.append(float(best))
    fp = len(preds) - tp
    fn = len(gts) - tp
    return tp, fp, fn, matched_ious


def evaluate_dataset(per_image, iou_threshold: float = HIT_IOU_THRESHOLD) -> EvalOutcome:
    """Aggregate (predictions, ground_truths) pairs into an EvalOutcome.

    accuracy  — mean of per-image binary hits on the best matched IoU
    precision/recall/f1 — from TP/FP/FN summed over all images
    mean_iou  — mean over ground truths of the matched IoU (0 if unmatched)
    """
    per_image = list(per_image)
    if not per_image:
        raise ValueError("evaluate_dataset needs at least one image")
    tp = fp = fn = 0
    hits = 0
    iou_sum = 0.0
    n_gts = 0
    for preds, gts in per_image:
        itp, ifp, ifn, matched = match_detections(preds, gts, iou_threshold)
        tp += itp
        fp += ifp
        fn += ifn
        n_gts += len(gts)
        iou_sum += sum(matched)
        hits += binary_hit(max(matched, default=0.0))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return EvalOutcome(
        accuracy=hits / len(per_image),
        precision=precision,
        recall=recall,
        f1=f1,
        mean_iou=iou_sum / n_gts if n_gts else 0.0,
        n_images=len(per_image),
    )


def timing_summary(samples_ms) -> TimingSummary:
    """Arithmetic mean of per-sample inference times (milliseconds)."""
    samples = [float(s) for s in samples_ms]
    if not samples:
        raise ValueError("timing_summary needs at least one sample")
    if min(samples) < 0:
        raise ValueError("inference times must be nonnegative")
    return TimingSummary(mean_ms=sum(samples) / len(samples), n_samples=len(samples))


def parse_predictions(text: str):
    """Parse detection ingest lines: image_id class confidence x0 y0 x1 y1.

    Returns {image_id: [Detection, ...]} preserving file order.
    """
    per_image: dict[str, list[Detection]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 7:
            raise DataError(f"line {lineno}: expected 7 fields, got {len(fields)}")
        image_id = fields[0]
        try:
            class_id = int(fields[1])
            confidence = float(fields[2])
            coords = [float(v) for v in fields[3:]]
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        try:
            det = Detection(BoundingBox(*coords), confidence, class_id)
        except Exception as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        per_image.setdefault(image_id, []).append(det)
    return per_image


def outcome_row(label: str, outcome: EvalOutcome):
    """Detection-table row (percentages) for an EvalOutcome."""
    return (
        label,
        outcome.accuracy * 100.0,
        outcome.precision * 100.0,
        outcome.recall * 100.0,
        outcome.f1 * 100.0,
        outcome.mean_iou * 100.0,
    )
