"""Detection metrics: per-frame matching, precision/recall/F-score, 11-point AP.

Matching is greedy in confidence order with one-to-one assignment and a
strict IOU rule: only overlap strictly greater than the threshold
counts. The average-precision sweep produces one operating point per
distinct confidence value, so tied scores enter or leave the prediction
set together, exactly as an exhaustive threshold sweep would see them.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .appearance import Detection
from .errors import InvalidConfigError, NoGroundTruthError
from .geometry import BBox, iou

__all__ = [
    "EvalReport",
    "match_frame",
    "average_precision_11pt",
    "summarize",
    "load_ground_truth",
    "load_conditions",
    "save_ground_truth_csv",
]

IOU_THRESHOLD = 0.5


@dataclass(frozen=True)
class EvalReport:
    """Aggregated detection quality at one operating point."""

    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    fscore: float
    ap: float
    empty: bool
    conditions: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "fscore": self.fscore,
            "ap": self.ap,
            "empty": self.empty,
        }
        if self.conditions:
            out["conditions"] = {
                name: report.to_dict() for name, report in self.conditions.items()
            }
        return out


def _sorted_preds(preds: Sequence[Detection]) -> list[Detection]:
    return sorted(preds, key=lambda d: -d.confidence)


def match_frame(
    preds: Sequence[Detection],
    gts: Sequence[BBox],
    iou_threshold: float = IOU_THRESHOLD,
) -> tuple[int, int, int]:
    """Greedy one-to-one matching of one frame's predictions to its GT.

    Each prediction, in descending confidence order, claims the
    unmatched ground-truth box it overlaps most, provided that overlap
    is strictly above the threshold. Returns (tp, fp, fn).
    """
    matched = [False] * len(gts)
    tp = 0
    fp = 0
    for pred in _sorted_preds(preds):
        best = -1
        best_iou = 0.0
        for k, gt in enumerate(gts):
            if matched[k]:
                continue
            overlap = iou(pred.box, gt)
            if overlap > best_iou:
                best_iou = overlap
                best = k
        if best >= 0 and best_iou > iou_threshold:
            matched[best] = True
            tp += 1
        else:
            fp += 1
    fn = len(gts) - tp
    return tp, fp, fn


def average_precision_11pt(
    preds_by_frame: Mapping[int, Sequence[Detection]],
    gts_by_frame: Mapping[int, Sequence[BBox]],
    iou_threshold: float = IOU_THRESHOLD,
) -> float:
    """11-point interpolated average precision over a whole sequence.

    Predictions are swept from the highest confidence down; every
    distinct confidence value yields one operating point with the
    cumulative true/false positive counts of all predictions at or
    above it. Interpolated precision at recall level r is the maximum
    precision among operating points whose recall reaches r; recall
    comparisons are done in exact integer arithmetic (10 * tp versus
    level * total), so no floating-point boundary case can leak.
    """
    total_gt = sum(len(v) for v in gts_by_frame.values())
    if total_gt == 0:
        raise NoGroundTruthError("cannot compute AP without ground truth")

    flat: list[tuple[float, int, Detection]] = []
    for frame, preds in preds_by_frame.items():
        for det in preds:
            flat.append((det.confidence, frame, det))
    flat.sort(key=lambda item: -item[0])

    matched: dict[int, list[bool]] = {
        frame: [False] * len(gts) for frame, gts in gts_by_frame.items()
    }
    points: list[tuple[int, int]] = []
    tp = 0
    fp = 0
    i = 0
    while i < len(flat):
        j = i
        while j < len(flat) and flat[j][0] == flat[i][0]:
            j += 1
        for _, frame, det in flat[i:j]:
            gts = gts_by_frame.get(frame, [])
            flags = matched.setdefault(frame, [False] * len(gts))
            best = -1
            best_iou = 0.0
            for k, gt in enumerate(gts):
                if flags[k]:
                    continue
                overlap = iou(det.box, gt)
                if overlap > best_iou:
                    best_iou = overlap
                    best = k
            if best >= 0 and best_iou > iou_threshold:
                flags[best] = True
                tp += 1
            else:
                fp += 1
        points.append((tp, fp))
        i = j

    ap_sum = 0.0
    for level in range(11):
        best_precision = 0.0
        for tp_k, fp_k in points:
            if 10 * tp_k >= level * total_gt and tp_k + fp_k > 0:
                precision = tp_k / (tp_k + fp_k)
                if precision > best_precision:
                    best_precision = precision
        ap_sum += best_precision
    return ap_sum / 11.0


def _ratios(tp: int, fp: int, fn: int) -> tuple[float, float, float, bool]:
    empty = (tp + fp == 0) or (tp + fn == 0)
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    fscore = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return precision, recall, fscore, empty


def summarize(
    counts: Iterable[tuple[int, int, int]],
    ap: float = 0.0,
    condition_counts: Mapping[str, Iterable[tuple[int, int, int]]] | None = None,
    condition_aps: Mapping[str, float] | None = None,
) -> EvalReport:
    """Fold per-frame (tp, fp, fn) triples into a report.

    Pass per-condition triples to get the same aggregation broken down
    by label (weather, size class, whatever the study needs).
    """
    tp = fp = fn = 0
    for t, f, m in counts:
        tp += t
        fp += f
        fn += m
    precision, recall, fscore, empty = _ratios(tp, fp, fn)
    conditions = None
    if condition_counts:
        conditions = {}
        for name, triples in condition_counts.items():
            sub_ap = 0.0
            if condition_aps and name in condition_aps:
                sub_ap = condition_aps[name]
            conditions[name] = summarize(triples, sub_ap)
    return EvalReport(
        tp=tp,
        fp=fp,
        fn=fn,
        precision=precision,
        recall=recall,
        fscore=fscore,
        ap=ap,
        empty=empty,
        conditions=conditions,
    )


def load_ground_truth(path) -> dict[int, list[BBox]]:
    """Read per-frame boxes from CSV (frame,x,y,w,h) or JSON lines."""
    text = Path(path).read_text()
    out: dict[int, list[BBox]] = {}
    stripped = text.lstrip()
    if stripped.startswith("{"):
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            out.setdefault(int(row["frame"]), []).append(
                BBox(float(row["x"]), float(row["y"]), float(row["w"]), float(row["h"]))
            )
        return out
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None or "frame" not in reader.fieldnames:
        raise InvalidConfigError(f"{path}: expected a frame,x,y,w,h header")
    for row in reader:
        out.setdefault(int(row["frame"]), []).append(
            BBox(float(row["x"]), float(row["y"]), float(row["w"]), float(row["h"]))
        )
    return out


def save_ground_truth_csv(path, gts_by_frame: Mapping[int, Sequence[BBox]]) -> None:
    """Write boxes in the same CSV format load_ground_truth reads."""
    lines = ["frame,x,y,w,h"]
    for frame in sorted(gts_by_frame):
        for box in gts_by_frame[frame]:
            lines.append(f"{frame},{box.x:g},{box.y:g},{box.w:g},{box.h:g}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_conditions(path) -> dict[str, str]:
    """Read the optional video,condition sidecar."""
    out: dict[str, str] = {}
    reader = csv.DictReader(Path(path).read_text().splitlines())
    if reader.fieldnames is None or "video" not in reader.fieldnames:
        raise InvalidConfigError(f"{path}: expected a video,condition header")
    for row in reader:
        out[row["video"]] = row["condition"]
    return out
