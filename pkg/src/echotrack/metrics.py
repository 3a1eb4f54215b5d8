"""Tracking-error metrics and evaluation over annotated frames."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import EmptyInput, MissingFrame


@dataclass
class EvalSummary:
    mean: float
    std: float
    p95: float
    min: float
    max: float
    n: int


def te(pred: tuple[float, float], gt: tuple[float, float]) -> float:
    """Euclidean tracking error between prediction and ground truth."""
    return math.hypot(pred[0] - gt[0], pred[1] - gt[1])


def note(init_pred: tuple[float, float], gt_t: tuple[float, float]) -> float:
    """No-tracking baseline: distance from the frame-0 position to GT at t."""
    return te(init_pred, gt_t)


def summarize(errors) -> EvalSummary:
    """Mean, sample std (n-1), nearest-rank 95th percentile, min, max."""
    values = [float(v) for v in errors]
    n = len(values)
    if n == 0:
        raise EmptyInput("cannot summarize an empty error list")
    mean = sum(values) / n
    if n == 1:
        std = 0.0
    else:
        std = math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))
    ordered = sorted(values)
    p95 = ordered[math.ceil(0.95 * n) - 1]
    return EvalSummary(mean=mean, std=std, p95=p95, min=ordered[0], max=ordered[-1], n=n)


@dataclass
class EvalReport:
    per_landmark: dict[int, EvalSummary]
    pooled: EvalSummary
    note_pooled: EvalSummary


def evaluate(tracklets, annotations) -> EvalReport:
    """TE per annotated (landmark, frame) plus the pooled NoTE baseline.

    Every annotated frame must be covered by the matching tracklet, and
    each tracklet must include frame 0 (the NoTE reference position).
    """
    by_id = {tr.landmark_id: tr for tr in tracklets}
    per_landmark: dict[int, EvalSummary] = {}
    pooled_te: list[float] = []
    pooled_note: list[float] = []
    for lid in annotations.ids():
        tr = by_id.get(lid)
        if tr is None:
            first = annotations.landmarks[lid][0][0]
            raise MissingFrame(f"landmark {lid}: no tracklet covers frame {first + 1}")
        init = tr.position(0)
        if init is None:
            raise MissingFrame(f"landmark {lid}: tracklet has no frame 1 entry")
        errors: list[float] = []
        for frame, gx, gy in annotations.landmarks[lid]:
            pos = tr.position(frame)
            if pos is None:
                raise MissingFrame(f"landmark {lid}: frame {frame + 1} missing from tracklet")
            errors.append(te(pos, (gx, gy)))
            pooled_note.append(note(init, (gx, gy)))
        per_landmark[lid] = summarize(errors)
        pooled_te.extend(errors)
    return EvalReport(
        per_landmark=per_landmark,
        pooled=summarize(pooled_te),
        note_pooled=summarize(pooled_note),
    )


def write_report_csv(report: EvalReport, path) -> None:
    """Per-landmark and pooled rows ``scope,mean,std,p95,min,max,n``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("scope,mean,std,p95,min,max,n\n")

        def row(scope: str, s: EvalSummary) -> str:
            return (
                f"{scope},{s.mean:.4f},{s.std:.4f},{s.p95:.4f},"
                f"{s.min:.4f},{s.max:.4f},{s.n}\n"
            )

        for lid in sorted(report.per_landmark):
            fh.write(row(f"landmark_{lid}", report.per_landmark[lid]))
        fh.write(row("pooled", report.pooled))
        fh.write(row("note_pooled", report.note_pooled))
