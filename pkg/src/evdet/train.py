"""Optimization loop: decoupled-weight-decay adaptive steps, one-cycle
learning-rate schedule, early stopping on validation event F1, and the
ablation/sampling switches.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .assignment import greedy_match
from .autodiff import Tensor
from .core import Window
from .metrics import DenseMask, dense_to_events, f1_from_counts
from .model import BatchOutput, EventDetector, predict_scored_events
from .objective import LossWeights, total_loss
from .signal import occupancy_weight, weighted_sample_indices, window_occupancy

__all__ = [
    "TrainConfig",
    "EpochRecord",
    "TrainHistory",
    "AdamWState",
    "adamw_step",
    "onecycle_lr",
    "train_model",
    "dense_events_from_logits",
]

ONECYCLE_START_DIV = 25.0
ONECYCLE_FINAL_DIV = 1e4

ABLATIONS = ("full", "no_decoder", "no_hybrid")


@dataclass(frozen=True)
class TrainConfig:
    max_lr: float = 5e-5
    epochs: int = 100
    patience: int | None = 20  # None disables early stopping
    warmup_frac: float = 0.10
    batch_size: int = 16
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    rng_seed: int = 0
    ablation: str = "full"
    sampling: str = "uniform"  # or "occupancy"
    occupancy_alpha: float = 0.01
    occupancy_beta: float = 5.0
    grad_clip: float | None = None
    eval_iou_threshold: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.warmup_frac < 1.0:
            raise ValueError("warmup_frac must lie in (0, 1)")
        if self.patience is not None and self.patience > self.epochs:
            raise ValueError("patience cannot exceed the epoch budget")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}")
        if self.sampling not in ("uniform", "occupancy"):
            raise ValueError("sampling must be 'uniform' or 'occupancy'")

    @staticmethod
    def seizure_style(**overrides) -> "TrainConfig":
        """Imbalanced-regime preset: fixed 25 epochs, no early stopping,
        occupancy-weighted window sampling."""
        base = dict(epochs=25, patience=None, sampling="occupancy")
        base.update(overrides)
        return TrainConfig(**base)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_total: float
    train_sparse: float
    train_dense: float
    train_consistency: float
    val_f1_event: float
    is_best: bool

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    anomalies: list[str] = field(default_factory=list)

    def append(self, rec: EpochRecord) -> None:
        if self.epochs and rec.epoch <= self.epochs[-1].epoch:
            raise ValueError("epoch indices must be strictly increasing")
        self.epochs.append(rec)

    @property
    def best_val_f1(self) -> float:
        if self.best_epoch < 0:
            return float("-inf")
        return self.epochs[self.best_epoch].val_f1_event

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.epochs)


@dataclass
class AdamWState:
    """First/second moment accumulators plus the shared step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def arrays(self) -> dict[str, np.ndarray]:
        out = {f"opt.m.{k}": v for k, v in self.m.items()}
        out.update({f"opt.v.{k}": v for k, v in self.v.items()})
        out["opt.step"] = np.array(float(self.step))
        return out


def adamw_step(
    params: dict[str, Tensor],
    state: AdamWState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    weight_decay: float = 0.0,
    eps: float = 1e-8,
) -> bool:
    """One decoupled-weight-decay adaptive update over named parameters.

    Decay is applied directly to the weights, never through the gradient.
    Returns False (and leaves everything untouched) when any gradient is
    non-finite, so the caller can record the anomaly and move on.
    """
    b1, b2 = betas
    grads: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            return False
        grads[name] = g
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m += (1 - b1) * (g - m)
        v += (1 - b2) * (g * g - v)
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        if weight_decay:
            p.data *= 1.0 - lr * weight_decay
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return True


def onecycle_lr(step: int, total_steps: int, max_lr: float, warmup_frac: float = 0.10) -> float:
    """Cosine warm-up from max_lr/25 to max_lr, then cosine anneal to max_lr/1e4."""
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps})")
    warm = int(round(warmup_frac * total_steps))
    warm = min(max(warm, 1), total_steps - 1)
    start_lr = max_lr / ONECYCLE_START_DIV
    final_lr = max_lr / ONECYCLE_FINAL_DIV
    if step <= warm:
        frac = step / warm
        return start_lr + (max_lr - start_lr) * 0.5 * (1.0 - math.cos(math.pi * frac))
    frac = (step - warm) / (total_steps - 1 - warm)
    return final_lr + (max_lr - final_lr) * 0.5 * (1.0 + math.cos(math.pi * frac))


def dense_events_from_logits(dense_logits: np.ndarray):
    """Events from the dense probe: argmax mask, runs, mean-probability scores."""
    from .assignment import ScoredEvent

    shifted = dense_logits - dense_logits.max(axis=-1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=-1, keepdims=True)
    labels = probs.argmax(axis=-1)
    events = dense_to_events(DenseMask(labels=labels))
    n = len(labels)
    scored = []
    for ev in events:
        lo = int(round(ev.b_start * n))
        hi = int(round(ev.b_end * n))
        conf = float(probs[lo:hi, ev.class_id].mean())
        scored.append(ScoredEvent(ev.b_start, ev.b_end, ev.class_id, conf))
    return scored


def _predict_window_events(model: EventDetector, output: BatchOutput, b: int):
    if model.config.with_decoder:
        return predict_scored_events(output.window(b))
    return dense_events_from_logits(output.dense_logits.data[b])


def _validation_f1(
    model: EventDetector, windows: Sequence[Window], batch_size: int, iou_threshold: float
) -> float:
    """Pooled event F1 over the validation windows, in inference mode."""
    tp = fp = fn = 0
    with ad.no_grad():
        for lo in range(0, len(windows), batch_size):
            chunk = windows[lo : lo + batch_size]
            x = np.stack([w.samples for w in chunk])
            out = model.forward(x, training=False)
            for b, w in enumerate(chunk):
                preds = _predict_window_events(model, out, b)
                m = greedy_match(preds, list(w.events), iou_threshold, class_aware=True)
                tp, fp, fn = tp + m.tp, fp + m.fp, fn + m.fn
    return f1_from_counts(tp, fp, fn)


def train_model(
    model: EventDetector,
    train_windows: Sequence[Window],
    val_windows: Sequence[Window],
    cfg: TrainConfig,
    weights: LossWeights,
) -> tuple[dict[str, np.ndarray], TrainHistory]:
    """Train to best validation event F1; returns (best checkpoint, history).

    Reference mode is single-threaded and deterministic given cfg.rng_seed.
    """
    if not train_windows:
        raise ValueError("training split is empty")
    if cfg.ablation == "no_decoder" and model.config.with_decoder:
        raise ValueError("no_decoder ablation needs a model built without a decoder")

    include_sparse = cfg.ablation != "no_decoder"
    include_dense = cfg.ablation != "no_hybrid"
    eff_weights = weights if include_dense else replace(weights, lambda_cons=0.0)

    model.reset_dropout_rng((cfg.rng_seed, 7))
    sampler_seq = np.random.SeedSequence((cfg.rng_seed, 1))

    n_train = len(train_windows)
    steps_per_epoch = max(1, math.ceil(n_train / cfg.batch_size))
    total_steps = cfg.epochs * steps_per_epoch

    occ_weights = None
    if cfg.sampling == "occupancy":
        occ_weights = [
            occupancy_weight(window_occupancy(w), cfg.occupancy_alpha, cfg.occupancy_beta)
            for w in train_windows
        ]

    state = AdamWState()
    history = TrainHistory()
    best_state: dict[str, np.ndarray] | None = None
    best_f1 = float("-inf")
    since_best = 0
    global_step = 0

    for epoch in range(cfg.epochs):
        rng = np.random.Generator(np.random.PCG64(sampler_seq.spawn(1)[0]))
        if occ_weights is not None:
            order = weighted_sample_indices(occ_weights, n_train, rng)
        else:
            order = rng.permutation(n_train)

        sums = np.zeros(4)  # total, sparse, dense, consistency
        last_lr = 0.0
        for lo in range(0, n_train, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            chunk = [train_windows[i] for i in idx]
            x = np.stack([w.samples for w in chunk])
            targets = [list(w.events) for w in chunk]

            out = model.forward(x, training=True)
            breakdown = total_loss(
                out, targets, eff_weights,
                include_sparse=include_sparse, include_dense=include_dense,
            )
            loss = breakdown.total
            if not np.isfinite(loss.data):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch starting at {lo} "
                    f"(windows {[w.session_id for w in chunk]})"
                )
            model.zero_grad()
            loss.backward()
            if cfg.grad_clip is not None:
                _clip_grad_norm(model.params, cfg.grad_clip)
            lr = onecycle_lr(global_step, total_steps, cfg.max_lr, cfg.warmup_frac)
            ok = adamw_step(model.params, state, lr, cfg.betas, cfg.weight_decay)
            if not ok:
                history.anomalies.append(
                    f"epoch {epoch} step {global_step}: non-finite gradient, step skipped"
                )
            last_lr = lr
            global_step += 1
            sums += (float(loss.data), breakdown.sparse, breakdown.dense, breakdown.consistency)

        n_batches = steps_per_epoch
        val_f1 = (
            _validation_f1(model, val_windows, cfg.batch_size, cfg.eval_iou_threshold)
            if val_windows
            else 0.0
        )
        improved = val_f1 > best_f1
        if improved:
            best_f1 = val_f1
            best_state = model.state_dict()
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
        history.append(
            EpochRecord(
                epoch=epoch,
                lr=last_lr,
                train_total=sums[0] / n_batches,
                train_sparse=sums[1] / n_batches,
                train_dense=sums[2] / n_batches,
                train_consistency=sums[3] / n_batches,
                val_f1_event=val_f1,
                is_best=improved,
            )
        )
        if cfg.patience is not None and since_best > cfg.patience:
            break

    if best_state is None:
        best_state = model.state_dict()
        history.best_epoch = len(history.epochs) - 1
    model.load_state_dict(best_state)
    return best_state, history


def _clip_grad_norm(params: dict[str, Tensor], max_norm: float) -> None:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
