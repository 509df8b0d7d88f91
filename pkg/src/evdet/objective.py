"""The hybrid training objective: Hungarian-matched set loss, dense auxiliary
cross-entropy on the latent grid, and the KL consistency regularizer with its
event-to-dense projection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .assignment import MatchResult, build_cost_matrix, hungarian
from .autodiff import Tensor
from .core import BACKGROUND_CLASS, NormalizedEvent
from .model import BatchOutput, PredictionSet

__all__ = [
    "LossWeights",
    "DenseTargets",
    "sparse_loss",
    "dense_targets_from_events",
    "dense_loss",
    "project_events_to_dense",
    "consistency_loss",
    "total_loss",
    "LossBreakdown",
]

PROJECTION_EPS = 1e-8


@dataclass(frozen=True)
class LossWeights:
    lambda_cls: float = 1.0
    lambda_iou: float = 5.0
    lambda_cons: float = 0.5
    background_ce_weight: float = 1.0

    def __post_init__(self) -> None:
        for name in ("lambda_cls", "lambda_iou", "lambda_cons", "background_ce_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class DenseTargets:
    """Per-latent-step class labels derived from window events."""

    labels: np.ndarray

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=np.intp)
        if labels.ndim != 1 or (len(labels) and labels.min() < 0):
            raise ValueError("labels must be a 1-D array of class ids >= 0")
        object.__setattr__(self, "labels", labels)


def dense_targets_from_events(
    events: Sequence[NormalizedEvent], n_time_latents: int
) -> DenseTargets:
    """Label each latent step by the covering event, background if none.

    Step t has its center at (t + 0.5) / N; membership is tested against the
    half-open event interval. When events overlap, the covering event with
    the latest start wins.
    """
    if n_time_latents < 1:
        raise ValueError("n_time_latents must be >= 1")
    centers = (np.arange(n_time_latents) + 0.5) / n_time_latents
    labels = np.zeros(n_time_latents, dtype=np.intp)
    for ev in sorted(events, key=lambda e: e.b_start):
        covered = (centers >= ev.b_start) & (centers < ev.b_end)
        labels[covered] = ev.class_id
    return DenseTargets(labels=labels)


def sparse_loss(
    pred: PredictionSet,
    targets: Sequence[NormalizedEvent],
    w: LossWeights,
    log_probs: Tensor | None = None,
) -> tuple[Tensor, MatchResult]:
    """Set-prediction loss under the optimal assignment.

    The padded cost matrix is built on detached values and solved exactly;
    gradients then flow through the classification and IoU terms of the
    chosen pairs, with the assignment held constant. log_probs may carry a
    precomputed log-softmax of the class logits (batch-level caching).
    """
    if pred.boundaries is None or pred.class_logits is None:
        raise ValueError("sparse_loss needs decoder outputs")
    n_q = pred.class_logits.shape[0]
    if len(targets) > n_q:
        raise ValueError(f"{len(targets)} targets exceed {n_q} event queries")

    logits = pred.class_logits
    bounds = pred.boundaries
    probs_np = _softmax_np(logits.data)
    cost = build_cost_matrix(bounds.data, probs_np, targets, w.lambda_cls, w.lambda_iou)
    assignment, _total = hungarian(cost)

    if log_probs is None:
        log_probs = ad.log_softmax(logits, axis=-1)
    n_real = len(targets)
    q_real = np.where(assignment < n_real)[0]
    q_bg = np.where(assignment >= n_real)[0]

    loss: Tensor | None = None
    pairs: list[tuple[int, int]] = []
    if n_real:
        tgt_idx = assignment[q_real]
        pairs = sorted(zip(q_real.tolist(), tgt_idx.tolist()), key=lambda p: p[1])
        t_start = np.array([targets[j].b_start for j in tgt_idx])
        t_end = np.array([targets[j].b_end for j in tgt_idx])
        t_cls = np.array([targets[j].class_id for j in tgt_idx], dtype=np.intp)
        ce = ad.neg(log_probs[q_real, t_cls])
        p_s, p_e = bounds[q_real, 0], bounds[q_real, 1]
        inter = ad.clamp_min(ad.minimum(p_e, t_end) - ad.maximum(p_s, t_start), 0.0)
        union = ad.clamp_min(ad.maximum(p_e, t_end) - ad.minimum(p_s, t_start), 1e-6)
        loss = ad.tsum(w.lambda_cls * ce + w.lambda_iou * (1.0 - inter / union))
    if len(q_bg):
        bg = w.background_ce_weight * w.lambda_cls * ad.tsum(ad.neg(log_probs[q_bg, BACKGROUND_CLASS]))
        loss = bg if loss is None else loss + bg
    match = MatchResult(
        pairs=tuple(pairs), unmatched_predictions=(), unmatched_ground_truth=()
    )
    return loss, match


def _softmax_np(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def dense_loss(dense_logits: Tensor, targets: DenseTargets) -> Tensor:
    """Mean cross-entropy over the latent steps, unweighted across classes."""
    if dense_logits.shape[0] != len(targets.labels):
        raise ValueError(
            f"{dense_logits.shape[0]} logits vs {len(targets.labels)} targets"
        )
    return ad.tmean(ad.cross_entropy(dense_logits, targets.labels))


def project_events_to_dense(
    pred: PredictionSet,
    n_time_latents: int,
    eps: float = PROJECTION_EPS,
    class_probs: Tensor | None = None,
) -> Tensor:
    """Unfold event predictions onto the latent grid as a row-stochastic map.

    Each query spreads its class distribution uniformly over the latent steps
    whose centers fall inside its order-normalized boundary interval; the
    accumulated scores get eps added everywhere before row normalization, so
    uncovered steps become uniform. The coverage indicator is computed on
    detached boundary values: gradients reach the class probabilities only.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if pred.boundaries is None or pred.class_logits is None:
        raise ValueError("projection needs decoder outputs")
    bounds = pred.boundaries.data
    lo = bounds.min(axis=1)
    hi = bounds.max(axis=1)
    centers = (np.arange(n_time_latents) + 0.5) / n_time_latents
    indicator = ((centers[:, None] >= lo[None, :]) & (centers[:, None] < hi[None, :]))
    indicator = indicator.astype(pred.class_logits.dtype)  # (T, N_q), constant

    probs = class_probs if class_probs is not None else ad.softmax(pred.class_logits, axis=-1)
    scores = ad.matmul(Tensor(indicator), probs) + eps  # (T, K+1)
    return scores / ad.tsum(scores, axis=-1, keepdims=True)


def consistency_loss(p_dense: Tensor, p_event: Tensor) -> Tensor:
    """Mean KL(P_dense || P_event) over the latent steps."""
    if p_dense.shape != p_event.shape:
        raise ValueError(f"shape mismatch: {p_dense.shape} vs {p_event.shape}")
    return ad.tmean(ad.kl_divergence(p_dense, p_event, axis=-1))


@dataclass
class LossBreakdown:
    total: Tensor
    sparse: float
    dense: float
    consistency: float
    matches: list[MatchResult]


def total_loss(
    output: BatchOutput | PredictionSet,
    targets: Sequence[Sequence[NormalizedEvent]] | Sequence[NormalizedEvent],
    w: LossWeights,
    include_sparse: bool = True,
    include_dense: bool = True,
) -> LossBreakdown:
    """Hybrid objective, averaged over the windows of a batch.

    ``include_sparse=False`` trains the dense probe alone (decoder-free
    ablation); ``include_dense=False`` drops the dense and consistency terms
    (set-loss-only ablation).
    """
    if isinstance(output, PredictionSet):
        batched_dense = None
        sets = [output]
        per_window_targets = [list(targets)]  # type: ignore[arg-type]
    else:
        batched_dense = output.dense_logits
        sets = output.split()
        per_window_targets = [list(t) for t in targets]
    if len(sets) != len(per_window_targets):
        raise ValueError(f"{len(sets)} windows vs {len(per_window_targets)} target lists")
    if not include_sparse and not include_dense:
        raise ValueError("at least one loss branch must stay enabled")

    n = len(sets)
    n_lat = sets[0].dense_logits.shape[0]
    # Batch-level softmaxes, sliced per window below.
    need_cons = include_dense and include_sparse and w.lambda_cons > 0
    batched_log_probs = batched_class_probs = batched_p_dense = None
    if not isinstance(output, PredictionSet) and output.class_logits is not None:
        if include_sparse:
            batched_log_probs = ad.log_softmax(output.class_logits, axis=-1)
        if need_cons:
            batched_class_probs = ad.softmax(output.class_logits, axis=-1)
            batched_p_dense = ad.softmax(output.dense_logits, axis=-1)

    sparse_terms: list[Tensor] = []
    cons_terms: list[Tensor] = []
    matches: list[MatchResult] = []
    for b, (pred, evs) in enumerate(zip(sets, per_window_targets)):
        if include_sparse:
            lp = batched_log_probs[b] if batched_log_probs is not None else None
            s, match = sparse_loss(pred, evs, w, log_probs=lp)
            sparse_terms.append(s)
            matches.append(match)
        if need_cons:
            cp = batched_class_probs[b] if batched_class_probs is not None else None
            p_event = project_events_to_dense(pred, n_lat, class_probs=cp)
            p_dense = (
                batched_p_dense[b]
                if batched_p_dense is not None
                else ad.softmax(pred.dense_logits, axis=-1)
            )
            cons_terms.append(ad.kl_divergence(p_dense, p_event, axis=-1))

    dense_avg: Tensor | None = None
    if include_dense:
        labels = np.stack(
            [dense_targets_from_events(evs, n_lat).labels for evs in per_window_targets]
        )
        if batched_dense is not None:
            dense_avg = ad.tmean(ad.cross_entropy(batched_dense, labels))
        else:
            dense_avg = ad.tmean(ad.cross_entropy(sets[0].dense_logits, labels[0]))

    def _avg(terms: list[Tensor]) -> Tensor | None:
        if not terms:
            return None
        acc = terms[0]
        for t in terms[1:]:
            acc = acc + t
        return acc * (1.0 / n)

    sparse_avg = _avg(sparse_terms)
    # Per-row KL vectors: averaging all rows equals the per-window mean of means.
    cons_avg = ad.tmean(ad.concat(cons_terms, axis=0)) if cons_terms else None

    total = None
    for term, scale in ((sparse_avg, 1.0), (dense_avg, 1.0), (cons_avg, w.lambda_cons)):
        if term is None:
            continue
        scaled = term * scale if scale != 1.0 else term
        total = scaled if total is None else total + scaled
    return LossBreakdown(
        total=total,
        sparse=float(sparse_avg.data) if sparse_avg is not None else 0.0,
        dense=float(dense_avg.data) if dense_avg is not None else 0.0,
        consistency=float(cons_avg.data) if cons_avg is not None else 0.0,
        matches=matches,
    )
