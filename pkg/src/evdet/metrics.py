"""Event-level and sample-level evaluation metrics, event extraction from
dense masks, and gap-filling post-processing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assignment import MatchResult, as_scored_arrays, greedy_match, interval_iou
from .core import BACKGROUND_CLASS, ClassMap, Event, NormalizedEvent

__all__ = [
    "DenseMask",
    "MetricReport",
    "f1_from_counts",
    "f1_event",
    "f1_det",
    "f1_binary_event",
    "f1_sample",
    "delta_ctr",
    "false_alarms_per_24h",
    "iou_threshold_sweep",
    "dense_to_events",
    "rasterize_events",
    "gap_fill",
]

SECONDS_PER_DAY = 86_400.0


@dataclass(frozen=True)
class DenseMask:
    """Per-timestep class assignment over a window or session.

    ``labels`` is the argmax view (0 = background); ``binary`` is an optional
    L x K multilabel view that can represent overlapping events. When both are
    given they must agree: a nonzero label must be set in the binary view and
    a zero label must have an empty row.
    """

    labels: np.ndarray | None = None
    binary: np.ndarray | None = None
    resolution_s: float = 1.0

    def __post_init__(self) -> None:
        labels, binary = self.labels, self.binary
        if labels is None and binary is None:
            raise ValueError("DenseMask needs labels, binary masks, or both")
        if labels is not None:
            labels = np.asarray(labels, dtype=np.intp)
            if labels.ndim != 1:
                raise ValueError("labels must be one-dimensional")
            if labels.min(initial=0) < 0:
                raise ValueError("labels must be >= 0")
            object.__setattr__(self, "labels", labels)
        if binary is not None:
            binary = np.asarray(binary, dtype=bool)
            if binary.ndim != 2:
                raise ValueError("binary masks must have shape L x K")
            object.__setattr__(self, "binary", binary)
        if labels is not None and binary is not None:
            if len(labels) != binary.shape[0]:
                raise ValueError("labels and binary masks disagree on length")
            if labels.max(initial=0) > binary.shape[1]:
                raise ValueError("labels exceed the binary class count")
            fg = labels > 0
            if fg.any() and not binary[np.where(fg)[0], labels[fg] - 1].all():
                raise ValueError("nonzero labels must be set in the binary view")
            if (~fg).any() and binary[~fg].any():
                raise ValueError("zero labels must have empty binary rows")

    @property
    def length(self) -> int:
        return len(self.labels) if self.labels is not None else self.binary.shape[0]

    def label_view(self, n_classes: int | None = None) -> np.ndarray:
        if self.labels is not None:
            return self.labels
        # Derive argmax view from multilabel: on overlap the highest class id wins.
        binary = self.binary
        labels = np.zeros(binary.shape[0], dtype=np.intp)
        for k in range(binary.shape[1]):
            labels[binary[:, k]] = k + 1
        return labels

    def binary_view(self, n_classes: int) -> np.ndarray:
        if self.binary is not None:
            if self.binary.shape[1] != n_classes:
                raise ValueError(
                    f"mask has {self.binary.shape[1]} classes, expected {n_classes}"
                )
            return self.binary
        labels = self.labels
        out = np.zeros((len(labels), n_classes), dtype=bool)
        for k in range(1, n_classes + 1):
            out[:, k - 1] = labels == k
        return out


@dataclass(frozen=True)
class MetricReport:
    """Per-subject (or per-set) evaluation scores."""

    f1_event: float
    f1_sample: float
    f1_det: float
    delta_ctr_s: float | None
    tp: int
    fp: int
    fn: int
    subject_id: str = ""
    per_class: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "subject_id": self.subject_id,
            "f1_event": self.f1_event,
            "f1_sample": self.f1_sample,
            "f1_det": self.f1_det,
            "delta_ctr_s": self.delta_ctr_s,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "per_class": self.per_class,
        }
        return json.dumps(payload, sort_keys=True)

    @staticmethod
    def from_json(line: str) -> "MetricReport":
        d = json.loads(line)
        return MetricReport(
            f1_event=d["f1_event"],
            f1_sample=d["f1_sample"],
            f1_det=d["f1_det"],
            delta_ctr_s=d["delta_ctr_s"],
            tp=d["tp"],
            fp=d["fp"],
            fn=d["fn"],
            subject_id=d.get("subject_id", ""),
            per_class=d.get("per_class", {}),
        )


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    """F1 with the empty-set conventions: 1.0 when nothing exists on either
    side, 0.0 when exactly one side is empty."""
    if tp == 0 and fp == 0 and fn == 0:
        return 1.0
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def _check_units(predictions: Sequence, ground_truth: Sequence) -> None:
    # Catches normalized-vs-seconds mixups: one side confined to [0, 1] while
    # the other clearly lives on a seconds axis.
    p_start, p_end, _, _ = as_scored_arrays(predictions)
    g_start, g_end, _, _ = as_scored_arrays(ground_truth)
    if len(p_end) == 0 or len(g_end) == 0:
        return
    p_norm = p_end.max() <= 1.0 + 1e-9
    g_norm = g_end.max() <= 1.0 + 1e-9
    if p_norm != g_norm:
        raise ValueError(
            "predictions and ground truth appear to use different units "
            f"(max ends {p_end.max():.3g} vs {g_end.max():.3g})"
        )


def f1_event(
    predictions: Sequence,
    ground_truth: Sequence,
    iou_threshold: float = 0.5,
) -> float:
    """Event-level F1: greedy class-aware matching at the IoU threshold."""
    _check_units(predictions, ground_truth)
    m = greedy_match(predictions, ground_truth, iou_threshold, class_aware=True)
    return f1_from_counts(m.tp, m.fp, m.fn)


def f1_det(
    predictions: Sequence,
    ground_truth: Sequence,
    iou_threshold: float = 0.5,
) -> float:
    """Class-agnostic detection F1, isolating localization from classification."""
    _check_units(predictions, ground_truth)
    m = greedy_match(predictions, ground_truth, iou_threshold, class_aware=False)
    return f1_from_counts(m.tp, m.fp, m.fn)


def _project_to_class(items: Sequence, positive_class: int) -> list:
    out = []
    for s, e, c, conf in zip(*as_scored_arrays(items)):
        if c == BACKGROUND_CLASS:
            continue
        out.append((float(s), float(e), positive_class, float(conf)))
    return out


def f1_binary_event(
    predictions: Sequence,
    ground_truth: Sequence,
    positive_class: int = 1,
    iou_threshold: float = 0.5,
) -> float:
    """Event-level F1 after collapsing every foreground class onto one label."""
    return f1_event(
        _project_to_class(predictions, positive_class),
        _project_to_class(ground_truth, positive_class),
        iou_threshold,
    )


def delta_ctr(
    match: MatchResult,
    predictions: Sequence,
    ground_truth: Sequence,
    window_duration_s: float = 1.0,
) -> float | None:
    """Median absolute center error of matched pairs, scaled to seconds.

    Returns None when there are no matched pairs; aggregation skips the
    undefined value rather than imputing.
    """
    if not match.pairs:
        return None
    p_start, p_end, _, _ = as_scored_arrays(predictions)
    g_start, g_end, _, _ = as_scored_arrays(ground_truth)
    errors = [
        abs(0.5 * (p_start[i] + p_end[i]) - 0.5 * (g_start[j] + g_end[j]))
        for i, j in match.pairs
    ]
    return float(np.median(errors) * window_duration_s)


def false_alarms_per_24h(
    predictions: Sequence,
    ground_truth: Sequence,
    total_recorded_s: float,
    iou_threshold: float = 0.5,
) -> float:
    """Class-agnostic false-positive count scaled to a 24 h rate."""
    if not total_recorded_s > 0:
        raise ValueError(f"total_recorded_s must be positive, got {total_recorded_s}")
    m = greedy_match(predictions, ground_truth, iou_threshold, class_aware=False)
    return m.fp * SECONDS_PER_DAY / total_recorded_s


def f1_sample(pred_mask: DenseMask, gt_mask: DenseMask, classes: ClassMap) -> float:
    """Macro F1 over foreground classes on per-timestep masks.

    Uses the multilabel binary view so overlapping ground truth is scoreable.
    A class absent from both masks contributes 1.0 to the macro average.
    """
    if pred_mask.length != gt_mask.length:
        raise ValueError(
            f"mask lengths differ: {pred_mask.length} vs {gt_mask.length}"
        )
    k = classes.n_classes
    pred = pred_mask.binary_view(k)
    gt = gt_mask.binary_view(k)
    scores = []
    for c in range(k):
        tp = int(np.sum(pred[:, c] & gt[:, c]))
        fp = int(np.sum(pred[:, c] & ~gt[:, c]))
        fn = int(np.sum(~pred[:, c] & gt[:, c]))
        scores.append(f1_from_counts(tp, fp, fn))
    return float(np.mean(scores))


def iou_threshold_sweep(
    predictions: Sequence,
    ground_truth: Sequence,
    thresholds: Sequence[float],
) -> list[tuple[float, float]]:
    """F1_event at each threshold; the curve must be non-increasing."""
    thresholds = list(thresholds)
    if any(not 0.0 < t <= 1.0 for t in thresholds):
        raise ValueError("thresholds must lie in (0, 1]")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be sorted ascending")
    curve = [(t, f1_event(predictions, ground_truth, t)) for t in thresholds]
    for (_, a), (_, b) in zip(curve, curve[1:]):
        # A rise with growing strictness would mean the matcher is broken.
        assert b <= a + 1e-12, f"F1_event increased with the IoU threshold: {curve}"
    return curve


def dense_to_events(mask: DenseMask) -> list[NormalizedEvent]:
    """Extract maximal constant nonzero runs as normalized events."""
    labels = mask.label_view()
    n = len(labels)
    events: list[NormalizedEvent] = []
    if n == 0:
        return events
    run_start = 0
    for i in range(1, n + 1):
        if i < n and labels[i] == labels[run_start]:
            continue
        cls = int(labels[run_start])
        if cls != BACKGROUND_CLASS:
            events.append(NormalizedEvent(run_start / n, i / n, cls))
        run_start = i
    return events


def rasterize_events(
    events: Sequence[NormalizedEvent],
    n_steps: int,
    n_classes: int,
    resolution_s: float = 1.0,
) -> DenseMask:
    """Paint normalized events onto an n_steps grid.

    A step is covered when its center (t + 0.5) / n_steps falls in the
    half-open event interval. The label view resolves overlaps in favour of
    the latest-starting event; the binary view keeps every covering class.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    centers = (np.arange(n_steps) + 0.5) / n_steps
    labels = np.zeros(n_steps, dtype=np.intp)
    binary = np.zeros((n_steps, n_classes), dtype=bool)
    for ev in sorted(events, key=lambda e: e.b_start):
        covered = (centers >= ev.b_start) & (centers < ev.b_end)
        labels[covered] = ev.class_id
        binary[covered, ev.class_id - 1] = True
    return DenseMask(labels=labels, binary=binary, resolution_s=resolution_s)


def gap_fill(events: Sequence, tau_gap: float) -> list:
    """Merge same-class events separated by a gap of at most tau_gap.

    Merging is transitive within a class and never crosses class labels.
    Works on Event or NormalizedEvent inputs and preserves the type.
    """
    if tau_gap < 0:
        raise ValueError(f"tau_gap must be >= 0, got {tau_gap}")
    by_class: dict[int, list] = {}
    for ev in events:
        by_class.setdefault(ev.class_id, []).append(ev)

    merged: list = []
    for cls, group in by_class.items():
        group = sorted(group, key=lambda e: _bounds(e)[0])
        proto = group[0]
        cur_s, cur_e = _bounds(proto)
        cur_conf = getattr(proto, "confidence", 1.0)
        for ev in group[1:]:
            s, e = _bounds(ev)
            if s - cur_e <= tau_gap:
                cur_e = max(cur_e, e)
                cur_conf = max(cur_conf, getattr(ev, "confidence", 1.0))
            else:
                merged.append(_rebuild(proto, cur_s, cur_e, cur_conf))
                cur_s, cur_e = s, e
                cur_conf = getattr(ev, "confidence", 1.0)
        merged.append(_rebuild(proto, cur_s, cur_e, cur_conf))
    merged.sort(key=lambda e: (_bounds(e)[0], e.class_id))
    return merged


def _bounds(ev) -> tuple[float, float]:
    if isinstance(ev, NormalizedEvent):
        return ev.b_start, ev.b_end
    return ev.start, ev.end


def _rebuild(proto, start: float, end: float, confidence: float):
    if isinstance(proto, NormalizedEvent):
        return NormalizedEvent(start, end, proto.class_id)
    if isinstance(proto, Event):
        return Event(start, end, proto.class_id)
    from .assignment import ScoredEvent

    return ScoredEvent(start, end, proto.class_id, confidence)
