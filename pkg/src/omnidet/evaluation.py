"""Detection metrics: AP at IoU 0.40-0.75, their mean, and size-stratified AP.

Matching is greedy in descending score order with COCO's treatment of
out-of-bucket ground truth: such boxes may absorb a detection, which is then
ignored instead of counted as a false positive. AP is the area under the
precision envelope (all-point interpolation).
"""

import csv
import json
import logging
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from .data.sidecar import HiddenSidecar
from .exceptions import DatasetError, ParseError, UnknownClassError
from .models import AreaRange, DatasetManifest, Detection, EvalResult, GroundTruthBox

logger = logging.getLogger(__name__)

THRESHOLDS: tuple[float, ...] = tuple(round(0.40 + 0.05 * i, 2) for i in range(8))

BoxLike = GroundTruthBox | Detection | Sequence[float]


def _xyxy(box: BoxLike) -> tuple[float, float, float, float]:
    if isinstance(box, (GroundTruthBox, Detection)):
        return box.as_xyxy()
    x_min, y_min, x_max, y_max = (float(v) for v in box)
    return x_min, y_min, x_max, y_max


def iou(box_a: BoxLike, box_b: BoxLike) -> float:
    """Intersection over union of two boxes.

    Raises:
        ValueError: If either box is degenerate
    """
    ax0, ay0, ax1, ay1 = _xyxy(box_a)
    bx0, by0, bx1, by1 = _xyxy(box_b)
    if not (ax0 < ax1 and ay0 < ay1 and bx0 < bx1 and by0 < by1):
        raise ValueError("IoU is undefined for degenerate boxes")
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of (D, 4) and (G, 4) box arrays."""
    if a.size == 0 or b.size == 0:
        return np.zeros((a.shape[0], b.shape[0]))
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def detection_order(detections: Sequence[Detection]) -> np.ndarray:
    """Indices sorting detections by descending score, ties broken by box."""
    if not detections:
        return np.zeros(0, dtype=int)
    keys = np.array([[d.score, *d.as_xyxy()] for d in detections])
    # lexsort uses the last key as primary
    return np.lexsort((keys[:, 4], keys[:, 3], keys[:, 2], keys[:, 1], -keys[:, 0]))


def _greedy_match(
    ious: np.ndarray, gt_ignore: np.ndarray, threshold: float
) -> tuple[np.ndarray, np.ndarray]:
    """Match score-ordered detections (rows) to ground truth (columns).

    Ground truth must be ordered with non-ignored boxes first. Returns the
    matched column per row (-1 if none) and whether that column is ignored.
    """
    num_dets, num_gts = ious.shape
    gt_taken = np.zeros(num_gts, dtype=bool)
    matched = np.full(num_dets, -1, dtype=int)
    on_ignored = np.zeros(num_dets, dtype=bool)
    for d in range(num_dets):
        best, best_iou = -1, threshold
        for g in range(num_gts):
            if gt_taken[g]:
                continue
            # a match on a regular box beats any ignored box
            if best > -1 and not gt_ignore[best] and gt_ignore[g]:
                break
            if ious[d, g] < best_iou or (best > -1 and ious[d, g] == best_iou):
                continue
            best, best_iou = g, ious[d, g]
        if best > -1:
            gt_taken[best] = True
            matched[d] = best
            on_ignored[d] = gt_ignore[best]
    return matched, on_ignored


def match_detections(
    detections: Sequence[Detection],
    ground_truth: Sequence[GroundTruthBox],
    iou_thresh: float,
) -> list[bool]:
    """True/false-positive flag of every detection, in descending score order.

    Each detection takes the unmatched same-class box of highest IoU (at
    least ``iou_thresh``); every box is matched at most once.
    """
    order = detection_order(detections)
    ranked = [detections[i] for i in order]
    flags = [False] * len(ranked)
    for class_id in {d.class_id for d in ranked}:
        rows = [i for i, d in enumerate(ranked) if d.class_id == class_id]
        gts = [g for g in ground_truth if g.class_id == class_id]
        ious = iou_matrix(
            np.array([ranked[i].as_xyxy() for i in rows]).reshape(-1, 4),
            np.array([g.as_xyxy() for g in gts]).reshape(-1, 4),
        )
        matched, _ = _greedy_match(ious, np.zeros(len(gts), dtype=bool), iou_thresh)
        for row, m in zip(rows, matched):
            flags[row] = bool(m >= 0)
    return flags


def average_precision(
    flags: Sequence[bool] | np.ndarray, scores: Sequence[float] | np.ndarray, n_gt: int
) -> float:
    """Area under the interpolated precision-recall curve.

    Detections are ranked by descending score (stable for ties). With no
    ground truth the AP is 0 if anything was detected and 1 otherwise.
    """
    flags = np.asarray(flags, dtype=bool)
    scores = np.asarray(scores, dtype=float)
    if n_gt == 0:
        return 0.0 if flags.size else 1.0
    if flags.size == 0:
        return 0.0
    order = np.argsort(-scores, kind="mergesort")
    tp = np.cumsum(flags[order])
    fp = np.cumsum(~flags[order])
    recall = tp / n_gt
    precision = tp / np.maximum(tp + fp, np.finfo(float).eps)

    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


class _ClassAccumulator:
    """Ranked detections of one (class, area range, threshold) across images."""

    def __init__(self) -> None:
        self.keys: list[tuple[float, str, int]] = []
        self.flags: list[bool] = []
        self.num_gt = 0

    def add(self, image_id: str, scores: np.ndarray, flags: np.ndarray, keep: np.ndarray) -> None:
        for rank, (score, flag, kept) in enumerate(zip(scores, flags, keep)):
            if kept:
                self.keys.append((float(score), image_id, rank))
                self.flags.append(bool(flag))

    def average_precision(self) -> float:
        # rank by score, then image id, then in-image rank: independent of input order
        order = sorted(
            range(len(self.keys)),
            key=lambda i: (-self.keys[i][0], self.keys[i][1], self.keys[i][2]),
        )
        flags = np.array([self.flags[i] for i in order], dtype=bool)
        scores = np.array([self.keys[i][0] for i in order], dtype=float)
        return average_precision(flags, scores, self.num_gt)


def _check_classes(
    items: Iterable[GroundTruthBox | Detection], num_classes: int
) -> None:
    for item in items:
        if item.class_id >= num_classes:
            raise UnknownClassError(item.class_id, num_classes)


def evaluate(
    detections: Mapping[str, Sequence[Detection]],
    ground_truth: Mapping[str, Sequence[GroundTruthBox]],
    num_classes: int,
    thresholds: Sequence[float] = THRESHOLDS,
) -> EvalResult:
    """Score detections against ground truth over a set of images.

    Args:
        detections: Detections per image id
        ground_truth: Boxes per image id; defines the evaluated images
        num_classes: Number of classes N
        thresholds: IoU thresholds

    Returns:
        EvalResult; classes without ground truth are left out of every mean

    Raises:
        UnknownClassError: If a class id is outside [0, N)
        DatasetError: If detections name an image without ground truth entry
    """
    unknown = sorted(set(detections) - set(ground_truth))
    if unknown:
        raise DatasetError(f"Detections for unknown images: {unknown[:5]}")
    for image_id, gts in ground_truth.items():
        _check_classes(gts, num_classes)
        _check_classes(detections.get(image_id, ()), num_classes)

    ranges = tuple(AreaRange)
    acc = {
        (r, c, t): _ClassAccumulator()
        for r in ranges
        for c in range(num_classes)
        for t in range(len(thresholds))
    }
    for image_id in sorted(ground_truth):
        gts_all = ground_truth[image_id]
        dets_all = detections.get(image_id, ())
        for c in range(num_classes):
            gts = [g for g in gts_all if g.class_id == c]
            dets = [d for d in dets_all if d.class_id == c]
            if not gts and not dets:
                continue
            dets = [dets[i] for i in detection_order(dets)]
            det_boxes = np.array([d.as_xyxy() for d in dets]).reshape(-1, 4)
            det_scores = np.array([d.score for d in dets])
            det_areas = np.array([d.area for d in dets])
            gt_boxes = np.array([g.as_xyxy() for g in gts]).reshape(-1, 4)
            gt_areas = np.array([g.area for g in gts])
            ious = iou_matrix(det_boxes, gt_boxes)
            for r in ranges:
                low, high = r.bounds
                gt_ignore = ~((gt_areas >= low) & (gt_areas < high))
                gt_order = np.argsort(gt_ignore, kind="mergesort")
                det_outside = ~((det_areas >= low) & (det_areas < high))
                for t, threshold in enumerate(thresholds):
                    matched, on_ignored = _greedy_match(
                        ious[:, gt_order], gt_ignore[gt_order], threshold
                    )
                    ignored = on_ignored | ((matched < 0) & det_outside)
                    cell = acc[(r, c, t)]
                    cell.num_gt += int((~gt_ignore).sum())
                    cell.add(image_id, det_scores, matched >= 0, ~ignored)

    def class_aps(r: AreaRange) -> dict[int, tuple[float, ...]]:
        return {
            c: tuple(acc[(r, c, t)].average_precision() for t in range(len(thresholds)))
            for c in range(num_classes)
            if acc[(r, c, 0)].num_gt > 0
        }

    per_class = class_aps(AreaRange.ALL)
    if per_class:
        table = np.array(list(per_class.values()))
        ap_at_threshold = tuple(float(v) for v in table.mean(axis=0))
        mean_ap = float(table.mean())
    else:
        ap_at_threshold = tuple(0.0 for _ in thresholds)
        mean_ap = 0.0

    def bucket(r: AreaRange) -> float | None:
        aps = class_aps(r)
        return float(np.mean(list(aps.values()))) if aps else None

    return EvalResult(
        thresholds=tuple(thresholds),
        per_class_ap=per_class,
        mean_ap=mean_ap,
        ap_at_threshold=ap_at_threshold,
        ap_small=bucket(AreaRange.SMALL),
        ap_medium=bucket(AreaRange.MEDIUM),
        ap_large=bucket(AreaRange.LARGE),
        num_gt=sum(len(g) for g in ground_truth.values()),
        num_detections=sum(len(detections.get(i, ())) for i in ground_truth),
    )


def collect_ground_truth(
    manifest: DatasetManifest, sidecar: HiddenSidecar | None = None
) -> dict[str, tuple[GroundTruthBox, ...]]:
    """Boxes of every record, reading hidden ones from the sidecar.

    Raises:
        DatasetError: If a record hides its boxes and the sidecar lacks them
    """
    truth: dict[str, tuple[GroundTruthBox, ...]] = {}
    hidden = [r for r in manifest.records if r.boxes is None]
    for record in manifest.records:
        if record.boxes is not None:
            truth[record.id] = record.boxes
    if not hidden:
        return truth
    if sidecar is None:
        raise DatasetError(f"Split '{manifest.split}' hides boxes and no sidecar was given")
    with sidecar.evaluation_access():
        for record in hidden:
            if record.id not in sidecar:
                raise DatasetError(f"No hidden annotation for sample '{record.id}'")
            truth[record.id] = sidecar.get(record.id).boxes
    return truth


def write_detections(detections: Mapping[str, Sequence[Detection]], path: str | Path) -> None:
    """Write one JSON record per detection: image_id plus the detection fields."""
    lines = [
        json.dumps({"image_id": image_id, **d.model_dump()})
        for image_id in sorted(detections)
        for d in detections[image_id]
    ]
    Path(path).write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")


def read_detections(path: str | Path) -> dict[str, list[Detection]]:
    """Read a detections file written by :func:`write_detections`.

    Raises:
        ParseError: If the file is missing or a record is malformed
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(str(e), source=str(path)) from e
    result: dict[str, list[Detection]] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            image_id = str(record.pop("image_id"))
            result.setdefault(image_id, []).append(Detection.model_validate(record))
        except (json.JSONDecodeError, KeyError, AttributeError, PydanticValidationError) as e:
            raise ParseError(f"line {number}: {e}", source=str(path)) from e
    return result


def write_eval_csv(result: EvalResult, path: str | Path) -> None:
    """Write one row per class and threshold, then the summary rows."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["scope", "class_id", "threshold", "ap"])
        for class_id, aps in sorted(result.per_class_ap.items()):
            for threshold, ap in zip(result.thresholds, aps):
                writer.writerow(["class", class_id, f"{threshold:.2f}", f"{ap:.6f}"])
        for threshold, ap in zip(result.thresholds, result.ap_at_threshold):
            writer.writerow(["mean", "", f"{threshold:.2f}", f"{ap:.6f}"])
        for name, value in result.get_summary().items():
            writer.writerow(["summary", name, "", "" if value is None else f"{value:.6f}"])


def format_result(result: EvalResult) -> str:
    """Render the headline metrics and per-class mAP as a text table."""
    summary = result.get_summary()
    header = "  ".join(f"{name:>7}" for name in summary)
    values = "  ".join(
        f"{'-':>7}" if v is None else f"{100 * v:7.2f}" for v in summary.values()
    )
    lines = [header, values, ""]
    lines.append(f"{'class':>7}  {'mAP':>7}")
    for class_id, aps in sorted(result.per_class_ap.items()):
        lines.append(f"{class_id:>7}  {100 * float(np.mean(aps)):7.2f}")
    lines.append(f"gt={result.num_gt} detections={result.num_detections}")
    return "\n".join(lines)
