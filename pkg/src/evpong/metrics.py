"""Scoring: detections against ground truth, and training-run summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass
class DetectionScore:
    precision: float
    recall: float
    mean_center_error: float  # px, over true positives
    match_radius: float
    tp: int
    fp: int
    fn: int


@dataclass
class TrainingScore:
    return_rate: float  # fraction of case-4 episodes
    mean_target_distance_mm: float  # over successful returns
    window: int
    window_return_rates: list[float]
    window_mean_distances_mm: list[float]


def score_detections(detections, labels, match_radius: float = 5.0) -> DetectionScore:
    """Match detections to the nearest-in-time ground-truth circle.

    ``labels`` must be provided at the cadence detections are expected
    (e.g. one label per detection window); a visible label with no matched
    detection counts as a miss. The time-matching tolerance is half the
    label period.

    Detections are (t_us, u, v) triples or objects with .t/.u/.v; labels are
    (t_us, u, v, visible[, partial]) tuples or objects with matching fields.
    A label flagged partial (ball straddling the sensor border) is a
    don't-care: detections landing on it are neither hits nor false alarms,
    and it never counts as a miss.
    """

    def as_det(d):
        if hasattr(d, "t"):
            return int(d.t), float(d.u), float(d.v)
        return int(d[0]), float(d[1]), float(d[2])

    def as_label(lb):
        if hasattr(lb, "t"):
            partial = bool(getattr(lb, "partial", False))
            return int(lb.t), float(lb.u), float(lb.v), bool(lb.visible), partial
        partial = bool(lb[4]) if len(lb) > 4 else False
        return int(lb[0]), float(lb[1]), float(lb[2]), bool(lb[3]), partial

    labs = [as_label(lb) for lb in labels]
    if not labs:
        raise DataError("cannot score against empty labels (recall undefined)")
    lab_t = np.array([lb[0] for lb in labs], dtype=np.int64)
    if np.any(np.diff(lab_t) <= 0):
        raise DataError("labels must be strictly time-ordered")
    period = int(np.median(np.diff(lab_t))) if len(lab_t) > 1 else 2 * lab_t[0] + 1
    tol = period / 2.0

    tp = fp = 0
    errors = []
    matched = np.zeros(len(labs), dtype=bool)
    for det in detections:
        t, u, v = as_det(det)
        i = int(np.clip(np.searchsorted(lab_t, t), 0, len(lab_t) - 1))
        if i > 0 and abs(lab_t[i - 1] - t) <= abs(lab_t[i] - t):
            i -= 1
        lt, lu, lv, lvis, lpart = labs[i]
        if lpart and abs(lt - t) <= tol:
            continue
        if abs(lt - t) > tol or not lvis or not math.isfinite(lu):
            fp += 1
            continue
        err = math.hypot(u - lu, v - lv)
        if err <= match_radius:
            tp += 1
            matched[i] = True
            errors.append(err)
        else:
            fp += 1
    fn = sum(1 for i, lb in enumerate(labs) if lb[3] and not lb[4] and not matched[i])
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return DetectionScore(
        precision=precision,
        recall=recall,
        mean_center_error=float(np.mean(errors)) if errors else float("nan"),
        match_radius=match_radius,
        tp=tp, fp=fp, fn=fn,
    )


def score_training(log, window: int = 50) -> TrainingScore:
    """Windowed return rate and mean target distance over a training log.

    ``log`` rows need .case and .d (target distance, nan for failures);
    distances are reported in millimeters.
    """
    if not log:
        raise DataError("empty training log")
    cases = np.array([rec.case for rec in log])
    dists = np.array([rec.d for rec in log], dtype=float)
    successes = cases == 4

    def window_stats(sl):
        rate = float(np.mean(successes[sl]))
        dd = dists[sl][successes[sl]]
        mean_d = float(np.mean(dd) * 1000.0) if len(dd) else float("nan")
        return rate, mean_d

    rates, means = [], []
    for start in range(0, len(log), window):
        rate, mean_d = window_stats(slice(start, min(start + window, len(log))))
        rates.append(rate)
        means.append(mean_d)
    overall = float(np.mean(successes))
    dd = dists[successes]
    return TrainingScore(
        return_rate=overall,
        mean_target_distance_mm=float(np.mean(dd) * 1000.0) if len(dd) else float("nan"),
        window=window,
        window_return_rates=rates,
        window_mean_distances_mm=means,
    )
