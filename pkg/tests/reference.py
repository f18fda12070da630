"""Slow, loop-based reference implementations used as test oracles."""

from collections.abc import Sequence


def box_iou(a: Sequence[float], b: Sequence[float]) -> float:
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


def greedy_nms(
    boxes: Sequence[Sequence[float]],
    scores: Sequence[float],
    classes: Sequence[int],
    iou_thresh: float,
) -> list[int]:
    """Kept indices by descending score; a box is dropped by a kept box of its
    class with IoU strictly above the threshold."""
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    kept: list[int] = []
    for i in order:
        if all(
            classes[j] != classes[i] or box_iou(boxes[i], boxes[j]) <= iou_thresh
            for j in kept
        ):
            kept.append(i)
    return kept


def greedy_match(
    dets: Sequence[tuple[Sequence[float], float]],
    gts: Sequence[Sequence[float]],
    threshold: float,
) -> list[bool]:
    """TP flags in descending score order; each GT goes to its first taker."""
    order = sorted(range(len(dets)), key=lambda i: -dets[i][1])
    taken = [False] * len(gts)
    flags: list[bool] = []
    for i in order:
        best, best_iou = -1, -1.0
        for g, gt in enumerate(gts):
            if taken[g]:
                continue
            value = box_iou(dets[i][0], gt)
            if value >= threshold and value > best_iou:
                best, best_iou = g, value
        if best >= 0:
            taken[best] = True
        flags.append(best >= 0)
    return flags


def envelope_ap(flags: Sequence[bool], n_gt: int) -> float:
    """All-point interpolated AP of flags already sorted by descending score."""
    if n_gt == 0:
        return 0.0
    precisions, recalls = [], []
    tp = 0
    for k, flag in enumerate(flags, start=1):
        tp += flag
        precisions.append(tp / k)
        recalls.append(tp / n_gt)
    ap, previous = 0.0, 0.0
    for r in sorted(set(recalls)):
        if r <= previous:
            continue
        best = max(p for p, rr in zip(precisions, recalls) if rr >= r)
        ap += (r - previous) * best
        previous = r
    return ap


def evaluate_class(
    detections: dict[str, list[tuple[Sequence[float], float]]],
    ground_truth: dict[str, list[Sequence[float]]],
    threshold: float,
) -> float:
    """AP of one class over several images, matching per image."""
    n_gt = sum(len(v) for v in ground_truth.values())
    scored: list[tuple[float, bool]] = []
    for image_id, dets in detections.items():
        ranked = sorted(dets, key=lambda d: -d[1])
        flags = greedy_match(ranked, ground_truth.get(image_id, []), threshold)
        scored.extend((d[1], f) for d, f in zip(ranked, flags))
    scored.sort(key=lambda item: -item[0])
    return envelope_ap([f for _, f in scored], n_gt)
