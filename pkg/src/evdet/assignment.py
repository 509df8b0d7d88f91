"""Interval IoU, optimal bipartite assignment for training-time matching,
and the confidence-sorted greedy matcher used at evaluation time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import BACKGROUND_CLASS, Event, NormalizedEvent, Prediction

__all__ = [
    "IOU_DENOM_FLOOR",
    "PROB_FLOOR",
    "interval_iou",
    "iou_loss",
    "CostMatrix",
    "build_cost_matrix",
    "hungarian",
    "MatchResult",
    "ScoredEvent",
    "greedy_match",
    "as_scored_arrays",
]

IOU_DENOM_FLOOR = 1e-6
PROB_FLOOR = 1e-12


def interval_iou(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Intersection over union of two 1-D intervals.

    Inverted intervals are tolerated: the clamped intersection makes them
    contribute zero overlap, and the floored denominator keeps the ratio
    finite for degenerate pairs.
    """
    a_s, a_e = a
    b_s, b_e = b
    inter = max(0.0, min(a_e, b_e) - max(a_s, b_s))
    union = max(IOU_DENOM_FLOOR, max(a_e, b_e) - min(a_s, b_s))
    return inter / union


def iou_loss(pred: tuple[float, float], target: tuple[float, float]) -> float:
    """1 - IoU; zero for identical intervals, one for disjoint ones."""
    return 1.0 - interval_iou(pred, target)


@dataclass(frozen=True)
class CostMatrix:
    """Square pairwise matching cost, ground truth padded with background columns."""

    entries: np.ndarray
    is_background: np.ndarray  # per-column flag
    n_targets: int

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"cost matrix must be square, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise ValueError("cost matrix entries must be finite")
        flags = np.asarray(self.is_background, dtype=bool)
        if flags.shape != (entries.shape[1],):
            raise ValueError("is_background must have one flag per column")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "is_background", flags)

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def build_cost_matrix(
    boundaries: np.ndarray,
    probs: np.ndarray,
    targets: Sequence[NormalizedEvent],
    lambda_cls: float = 1.0,
    lambda_iou: float = 5.0,
) -> CostMatrix:
    """Pairwise matching cost between N_q query predictions and padded targets.

    Column j < len(targets) is a real target: cost = lambda_cls * CE + lambda_iou * (1 - IoU).
    Remaining columns are background padding and carry the classification term only.
    CE is -log p at the target class, floored at 1e-12.
    """
    boundaries = np.asarray(boundaries, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    n_q = probs.shape[0]
    if boundaries.shape != (n_q, 2):
        raise ValueError(f"boundaries must be ({n_q}, 2), got {boundaries.shape}")
    if len(targets) > n_q:
        raise ValueError(f"{len(targets)} targets exceed {n_q} queries")

    neg_log = -np.log(np.maximum(probs, PROB_FLOOR))
    cost = np.empty((n_q, n_q), dtype=np.float64)
    for j, tgt in enumerate(targets):
        ce = neg_log[:, tgt.class_id]
        loc = np.array(
            [iou_loss((b[0], b[1]), (tgt.b_start, tgt.b_end)) for b in boundaries]
        )
        cost[:, j] = lambda_cls * ce + lambda_iou * loc
    cost[:, len(targets):] = lambda_cls * neg_log[:, BACKGROUND_CLASS][:, None]

    flags = np.arange(n_q) >= len(targets)
    return CostMatrix(entries=cost, is_background=flags, n_targets=len(targets))


def hungarian(cost: CostMatrix | np.ndarray) -> tuple[np.ndarray, float]:
    """Exact minimum-cost perfect matching on a square cost matrix.

    Shortest augmenting path formulation with dual potentials, O(N^3) worst
    case. Returns (assignment, total) where assignment[i] is the column
    matched to row i.
    """
    entries = cost.entries if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=np.float64)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {entries.shape}")
    if not np.all(np.isfinite(entries)):
        raise ValueError("cost matrix entries must be finite")
    n = entries.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.intp), 0.0

    u = np.zeros(n, dtype=np.float64)          # row potentials
    v = np.zeros(n + 1, dtype=np.float64)      # column potentials, col n is virtual
    col_row = np.full(n + 1, -1, dtype=np.intp)  # row currently matched to column

    for i in range(n):
        # Grow a shortest augmenting path from unmatched row i.
        col_row[n] = i
        j_cur = n
        min_to = np.full(n, np.inf)  # cheapest reduced path cost into each column
        prev_col = np.full(n, -1, dtype=np.intp)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j_cur] = True
            row = col_row[j_cur]
            reduced = entries[row, :] - u[row] - v[:n]
            better = ~used[:n] & (reduced < min_to)
            min_to[better] = reduced[better]
            prev_col[better] = j_cur

            open_cols = np.where(~used[:n])[0]
            j_next = open_cols[np.argmin(min_to[open_cols])]
            delta = min_to[j_next]
            # Dual update keeps reduced costs non-negative along the tree.
            used_idx = np.where(used)[0]
            u[col_row[used_idx]] += delta
            v[used_idx] -= delta
            min_to[~used[:n]] -= delta

            j_cur = j_next
            if col_row[j_cur] == -1:
                break
        # Augment along the stored path.
        while j_cur != n:
            j_prev = prev_col[j_cur]
            col_row[j_cur] = col_row[j_prev]
            j_cur = j_prev

    assignment = np.empty(n, dtype=np.intp)
    assignment[col_row[:n]] = np.arange(n)
    total = float(entries[np.arange(n), assignment].sum())
    return assignment, total


@dataclass(frozen=True)
class MatchResult:
    """One-to-one pairing between predictions and ground truth.

    ``pairs`` holds (prediction index, ground-truth index); the unmatched
    lists complete the partition of both sides (background predictions are
    excluded entirely).
    """

    pairs: tuple[tuple[int, int], ...]
    unmatched_predictions: tuple[int, ...]
    unmatched_ground_truth: tuple[int, ...]

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return len(self.unmatched_predictions)

    @property
    def fn(self) -> int:
        return len(self.unmatched_ground_truth)


@dataclass(frozen=True)
class ScoredEvent:
    """An interval prediction with class and matching confidence."""

    start: float
    end: float
    class_id: int
    confidence: float = 1.0


def _as_interval(item) -> tuple[float, float, int, float]:
    if isinstance(item, Prediction):
        lo, hi = sorted((item.b_start, item.b_end))
        return lo, hi, item.predicted_class, item.confidence
    if isinstance(item, ScoredEvent):
        return item.start, item.end, item.class_id, item.confidence
    if isinstance(item, NormalizedEvent):
        return item.b_start, item.b_end, item.class_id, 1.0
    if isinstance(item, Event):
        return item.start, item.end, item.class_id, 1.0
    if isinstance(item, (tuple, list)):
        if len(item) == 4:
            return float(item[0]), float(item[1]), int(item[2]), float(item[3])
        if len(item) == 3:
            return float(item[0]), float(item[1]), int(item[2]), 1.0
    raise TypeError(f"cannot interpret {item!r} as a scored interval")


def as_scored_arrays(items: Sequence) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Normalize heterogeneous event-like inputs to (starts, ends, classes, confidences)."""
    if not items:
        z = np.empty(0)
        return z, z.copy(), np.empty(0, dtype=np.intp), z.copy()
    rows = [_as_interval(it) for it in items]
    starts = np.array([r[0] for r in rows], dtype=np.float64)
    ends = np.array([r[1] for r in rows], dtype=np.float64)
    classes = np.array([r[2] for r in rows], dtype=np.intp)
    confs = np.array([r[3] for r in rows], dtype=np.float64)
    return starts, ends, classes, confs


def greedy_match(
    predictions: Sequence,
    ground_truth: Sequence,
    iou_threshold: float = 0.5,
    class_aware: bool = True,
) -> MatchResult:
    """Confidence-sorted greedy one-to-one matching.

    Candidate pairs need IoU strictly above the threshold (and equal classes
    when class_aware). Candidates are taken in order of prediction confidence,
    ties broken by higher IoU then lower prediction index; a candidate is
    accepted only if neither member is matched yet. Predictions whose class
    is background are dropped before matching.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1], got {iou_threshold}")

    p_start, p_end, p_cls, p_conf = as_scored_arrays(predictions)
    g_start, g_end, g_cls, _ = as_scored_arrays(ground_truth)

    fg = np.where(p_cls != BACKGROUND_CLASS)[0]
    gt_idx = np.arange(len(g_cls))

    candidates: list[tuple[float, float, int, int]] = []
    for i in fg:
        for j in gt_idx:
            if class_aware and p_cls[i] != g_cls[j]:
                continue
            iou = interval_iou((p_start[i], p_end[i]), (g_start[j], g_end[j]))
            if iou > iou_threshold:
                candidates.append((p_conf[i], iou, int(i), int(j)))
    candidates.sort(key=lambda c: (-c[0], -c[1], c[2], c[3]))

    matched_p: set[int] = set()
    matched_g: set[int] = set()
    pairs: list[tuple[int, int]] = []
    for _conf, _iou, i, j in candidates:
        if i in matched_p or j in matched_g:
            continue
        matched_p.add(i)
        matched_g.add(j)
        pairs.append((i, j))

    unmatched_p = tuple(int(i) for i in fg if i not in matched_p)
    unmatched_g = tuple(int(j) for j in gt_idx if j not in matched_g)
    return MatchResult(
        pairs=tuple(pairs),
        unmatched_predictions=unmatched_p,
        unmatched_ground_truth=unmatched_g,
    )
