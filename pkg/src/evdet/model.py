"""The event detector: convolutional backbone, latent temporal resampler,
transformer decoder with event queries, boundary/class heads, and a dense
linear probe on the resampled latents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .assignment import ScoredEvent
from .autodiff import Tensor
from .core import BACKGROUND_CLASS, NormalizedEvent

__all__ = [
    "ModelConfig",
    "PredictionSet",
    "BatchOutput",
    "EventDetector",
    "init_time_queries",
    "predict_events",
    "predict_scored_events",
]


@dataclass(frozen=True)
class ModelConfig:
    n_channels: int
    n_classes: int
    n_event_queries: int
    hidden_backbone: int = 270
    hidden: int = 128
    n_conv_blocks: int = 5
    kernel_size: int = 9
    n_time_latents: int = 256
    perceiver_depth: int = 6
    perceiver_heads: int = 2
    decoder_layers: int = 4
    decoder_heads: int = 4
    dropout_input: float = 0.1
    dropout_block: float = 0.2
    ffn_mult: int = 4
    with_decoder: bool = True

    def __post_init__(self) -> None:
        if self.hidden % self.perceiver_heads or self.hidden % self.decoder_heads:
            raise ValueError("hidden size must divide evenly into every head count")
        if self.kernel_size % 2 != 1:
            raise ValueError("kernel size must be odd")
        if min(self.n_channels, self.n_classes, self.n_event_queries) < 1:
            raise ValueError("channels, classes and event queries must be >= 1")

    @staticmethod
    def paper_scale(n_channels: int, n_classes: int, n_event_queries: int = 150) -> "ModelConfig":
        return ModelConfig(
            n_channels=n_channels, n_classes=n_classes, n_event_queries=n_event_queries
        )

    @staticmethod
    def tiny(n_channels: int = 4, n_classes: int = 3, n_event_queries: int = 12) -> "ModelConfig":
        """Desk-scale configuration with halved depths."""
        return ModelConfig(
            n_channels=n_channels,
            n_classes=n_classes,
            n_event_queries=n_event_queries,
            hidden_backbone=16,
            hidden=32,
            n_conv_blocks=3,
            n_time_latents=64,
            perceiver_depth=3,
            decoder_layers=2,
        )

    def receptive_field(self) -> int:
        return 1 + (self.kernel_size - 1) * sum(2**i for i in range(self.n_conv_blocks))


@dataclass
class PredictionSet:
    """Model outputs for a single window."""

    boundaries: Tensor | None  # (N_q, 2) in [0, 1], unordered
    class_logits: Tensor | None  # (N_q, K+1)
    dense_logits: Tensor  # (N_time_latents, K+1)


@dataclass
class BatchOutput:
    """Model outputs for a batch of windows; slices share one graph."""

    boundaries: Tensor | None  # (B, N_q, 2)
    class_logits: Tensor | None  # (B, N_q, K+1)
    dense_logits: Tensor  # (B, N_time_latents, K+1)

    @property
    def batch_size(self) -> int:
        return self.dense_logits.shape[0]

    def window(self, b: int) -> PredictionSet:
        return PredictionSet(
            boundaries=None if self.boundaries is None else self.boundaries[b],
            class_logits=None if self.class_logits is None else self.class_logits[b],
            dense_logits=self.dense_logits[b],
        )

    def split(self) -> list[PredictionSet]:
        return [self.window(b) for b in range(self.batch_size)]


def init_time_queries(n: int, h: int) -> np.ndarray:
    """Sinusoidal initial latent queries at integer positions 0..n-1.

    Rows are pairwise distinct and every value lies in [-1, 1].
    """
    if h % 2 != 0:
        raise ValueError(f"query width must be even, got {h}")
    if n < 1:
        raise ValueError("need at least one query")
    pos = np.arange(n, dtype=np.float64)[:, None]
    idx = np.arange(h // 2, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2.0 * idx / h)
    out = np.empty((n, h), dtype=np.float64)
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out


class EventDetector:
    """Set-prediction event detector over multi-channel windows.

    The backbone mixes channels into the working width, stacks dilated
    convolution blocks (batch norm, GeLU, residual) and projects to the
    attention width. A fixed grid of latent queries cross-attends to the
    dense embeddings; a transformer decoder turns event queries into
    boundary pairs and class logits, while a linear probe on the latents
    yields a dense per-step prediction.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.params: dict[str, Tensor] = {}
        self.bn_state: dict[str, np.ndarray] = {}
        self._pos_cache: dict[int, np.ndarray] = {}
        self._rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        self._dropout_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 1))))
        self._build()

    # -- parameter plumbing ---------------------------------------------------
    def _add(self, name: str, value: np.ndarray) -> None:
        self.params[name] = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)

    def _linear_init(self, fan_in: int, fan_out: int) -> np.ndarray:
        std = math.sqrt(2.0 / (fan_in + fan_out))
        return self._rng.normal(0.0, std, size=(fan_in, fan_out))

    def _add_linear(self, name: str, fan_in: int, fan_out: int) -> None:
        self._add(f"{name}.w", self._linear_init(fan_in, fan_out))
        self._add(f"{name}.b", np.zeros(fan_out))

    def _add_ln(self, name: str, width: int) -> None:
        self._add(f"{name}.g", np.ones(width))
        self._add(f"{name}.b", np.zeros(width))

    def _add_attention(self, name: str, width: int, kv_width: int | None = None) -> None:
        """Attention projections; kv_width > width means the key/value input
        carries a concatenated position block of size kv_width - width.

        The key projection's position block starts as a copy of wq, so the
        scores at step 0 approximate the position-encoding similarity kernel
        and cross-attention is local instead of uniform; the value projection
        ignores the position block at init.
        """
        kv_width = kv_width or width
        wq = self._linear_init(width, width)
        self._add(f"{name}.wq", wq)
        if kv_width > width:
            pe_rows = kv_width - width
            if pe_rows != width:
                raise ValueError("position block must match the attention width")
            wk = np.vstack([self._linear_init(width, width), wq.copy()])
            wv = np.vstack([self._linear_init(width, width), np.zeros((pe_rows, width))])
        else:
            wk = wq.copy()
            wv = self._linear_init(width, width)
        self._add(f"{name}.wk", wk)
        self._add(f"{name}.wv", wv)
        self._add(f"{name}.wo", self._linear_init(width, width))
        for part in ("bq", "bk", "bv", "bo"):
            self._add(f"{name}.{part}", np.zeros(width))

    def _add_ffn(self, name: str, width: int) -> None:
        inner = self.config.ffn_mult * width
        self._add_linear(f"{name}.in", width, inner)
        self._add_linear(f"{name}.out", inner, width)

    def _build(self) -> None:
        cfg = self.config
        d, h = cfg.hidden_backbone, cfg.hidden
        self._add_linear("mixer", cfg.n_channels, d)
        for i in range(cfg.n_conv_blocks):
            std = math.sqrt(2.0 / (d * cfg.kernel_size))
            self._add(f"block{i}.conv.w", self._rng.normal(0.0, std, size=(d, d, cfg.kernel_size)))
            self._add(f"block{i}.conv.b", np.zeros(d))
            self._add(f"block{i}.bn.g", np.ones(d))
            self._add(f"block{i}.bn.b", np.zeros(d))
            self.bn_state[f"block{i}.mean"] = np.zeros(d)
            self.bn_state[f"block{i}.var"] = np.ones(d)
        self._add_linear("proj", d, h)

        self._add("time_queries", init_time_queries(cfg.n_time_latents, h))
        for i in range(cfg.perceiver_depth):
            base = f"perceiver{i}"
            self._add_ln(f"{base}.cross_ln_q", h)
            self._add_ln(f"{base}.cross_ln_kv", h)
            self._add_attention(f"{base}.cross", h, kv_width=2 * h)
            self._add_ln(f"{base}.cross_ffn_ln", h)
            self._add_ffn(f"{base}.cross_ffn", h)
            self._add_ln(f"{base}.self_ln", h)
            self._add_attention(f"{base}.self", h)
            self._add_ln(f"{base}.self_ffn_ln", h)
            self._add_ffn(f"{base}.self_ffn", h)
        self._add_ln("perceiver_final_ln", h)
        self._add_linear("dense_probe", h, cfg.n_classes + 1)

        if cfg.with_decoder:
            self._add("event_queries", self._rng.normal(0.0, 0.02, size=(cfg.n_event_queries, h)))
            for i in range(cfg.decoder_layers):
                base = f"decoder{i}"
                self._add_ln(f"{base}.self_ln", h)
                self._add_attention(f"{base}.self", h)
                self._add_ln(f"{base}.cross_ln_q", h)
                self._add_ln(f"{base}.cross_ln_kv", h)
                self._add_attention(f"{base}.cross", h)
                self._add_ln(f"{base}.ffn_ln", h)
                self._add_ffn(f"{base}.ffn", h)
            self._add_ln("decoder_final_ln", h)
            self._add_linear("boundary_head", h, 2)
            self._add_linear("class_head", h, cfg.n_classes + 1)

    # -- forward helpers --------------------------------------------------------
    def _ln(self, name: str, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.params[f"{name}.g"], self.params[f"{name}.b"])

    def _linear(self, name: str, x: Tensor) -> Tensor:
        return ad.matmul(x, self.params[f"{name}.w"]) + self.params[f"{name}.b"]

    def _ffn(self, name: str, x: Tensor) -> Tensor:
        return self._linear(f"{name}.out", ad.gelu(self._linear(f"{name}.in", x)))

    def _attend(self, name: str, q: Tensor, kv: Tensor, n_heads: int) -> Tensor:
        p = self.params
        qp = ad.matmul(q, p[f"{name}.wq"]) + p[f"{name}.bq"]
        kp = ad.matmul(kv, p[f"{name}.wk"]) + p[f"{name}.bk"]
        vp = ad.matmul(kv, p[f"{name}.wv"]) + p[f"{name}.bv"]
        out = ad.scaled_dot_attention(qp, kp, vp, n_heads, w_out=p[f"{name}.wo"])
        return out + p[f"{name}.bo"]

    # -- stages -------------------------------------------------------------------
    def backbone_forward(self, x, training: bool = False) -> Tensor:
        """(B, T, C) scaled samples to (B, T, H) dense embeddings."""
        cfg = self.config
        x = x if isinstance(x, Tensor) else Tensor(x)
        squeeze = x.ndim == 2
        if squeeze:
            x = ad.reshape(x, (1,) + x.shape)
        if x.shape[-1] != cfg.n_channels:
            raise ValueError(f"expected {cfg.n_channels} channels, got {x.shape[-1]}")
        x = ad.dropout(x, cfg.dropout_input, self._dropout_rng, training)
        z = self._linear("mixer", x)
        for i in range(cfg.n_conv_blocks):
            h = ad.conv1d_dilated(z, self.params[f"block{i}.conv.w"], dilation=2**i)
            h = h + self.params[f"block{i}.conv.b"]
            h, new_mean, new_var = ad.batch_norm(
                h,
                self.params[f"block{i}.bn.g"],
                self.params[f"block{i}.bn.b"],
                self.bn_state[f"block{i}.mean"],
                self.bn_state[f"block{i}.var"],
                training=training,
            )
            if training:
                self.bn_state[f"block{i}.mean"] = new_mean
                self.bn_state[f"block{i}.var"] = new_var
            h = ad.gelu(h)
            h = ad.dropout(h, cfg.dropout_block, self._dropout_rng, training)
            z = z + h
        z = self._linear("proj", z)
        return ad.reshape(z, z.shape[1:]) if squeeze else z

    def _input_position_encoding(self, t: int) -> np.ndarray:
        # Keys need absolute position for the latents to resample locally;
        # positions are expressed on the latent grid so query row i and input
        # row i * T / N share the same encoding scale.
        cached = self._pos_cache.get(t)
        if cached is None:
            h = self.config.hidden
            scale = self.config.n_time_latents / t
            pos = np.arange(t, dtype=np.float64)[:, None] * scale
            idx = np.arange(h // 2, dtype=np.float64)[None, :]
            angles = pos / np.power(10000.0, 2.0 * idx / h)
            cached = np.empty((t, h), dtype=np.float64)
            cached[:, 0::2] = np.sin(angles)
            cached[:, 1::2] = np.cos(angles)
            self._pos_cache[t] = cached
        return cached

    def perceiver_forward(self, z_dense: Tensor) -> Tensor:
        """Resample (B, T, H) inputs onto the fixed latent grid (B, N_time, H)."""
        cfg = self.config
        squeeze = z_dense.ndim == 2
        if squeeze:
            z_dense = ad.reshape(z_dense, (1,) + z_dense.shape)
        b, t = z_dense.shape[0], z_dense.shape[1]
        pe = ad.broadcast_to(
            Tensor(self._input_position_encoding(t)), (b, t, cfg.hidden)
        )
        lat = ad.broadcast_to(
            self.params["time_queries"], (b,) + self.params["time_queries"].shape
        )
        for i in range(cfg.perceiver_depth):
            base = f"perceiver{i}"
            kv = ad.concat([self._ln(f"{base}.cross_ln_kv", z_dense), pe], axis=-1)
            lat = lat + self._attend(
                f"{base}.cross",
                self._ln(f"{base}.cross_ln_q", lat),
                kv,
                cfg.perceiver_heads,
            )
            lat = lat + self._ffn(f"{base}.cross_ffn", self._ln(f"{base}.cross_ffn_ln", lat))
            normed = self._ln(f"{base}.self_ln", lat)
            lat = lat + self._attend(f"{base}.self", normed, normed, cfg.perceiver_heads)
            lat = lat + self._ffn(f"{base}.self_ffn", self._ln(f"{base}.self_ffn_ln", lat))
        lat = self._ln("perceiver_final_ln", lat)
        return ad.reshape(lat, lat.shape[1:]) if squeeze else lat

    def decoder_forward(self, z_resamp: Tensor) -> tuple[Tensor, Tensor]:
        """Decode event queries against the latents into (boundaries, class logits)."""
        cfg = self.config
        if not cfg.with_decoder:
            raise ValueError("this model was built without a decoder")
        squeeze = z_resamp.ndim == 2
        if squeeze:
            z_resamp = ad.reshape(z_resamp, (1,) + z_resamp.shape)
        b = z_resamp.shape[0]
        q = ad.broadcast_to(
            self.params["event_queries"], (b,) + self.params["event_queries"].shape
        )
        for i in range(cfg.decoder_layers):
            base = f"decoder{i}"
            normed = self._ln(f"{base}.self_ln", q)
            q = q + self._attend(f"{base}.self", normed, normed, cfg.decoder_heads)
            q = q + self._attend(
                f"{base}.cross",
                self._ln(f"{base}.cross_ln_q", q),
                self._ln(f"{base}.cross_ln_kv", z_resamp),
                cfg.decoder_heads,
            )
            q = q + self._ffn(f"{base}.ffn", self._ln(f"{base}.ffn_ln", q))
        q = self._ln("decoder_final_ln", q)
        boundaries = ad.sigmoid(self._linear("boundary_head", q))
        class_logits = self._linear("class_head", q)
        if squeeze:
            boundaries = ad.reshape(boundaries, boundaries.shape[1:])
            class_logits = ad.reshape(class_logits, class_logits.shape[1:])
        return boundaries, class_logits

    def forward(self, x, training: bool = False) -> BatchOutput:
        """Full pass over a batch of windows (B, T, C)."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim == 2:
            x = ad.reshape(x, (1,) + x.shape)
        z_dense = self.backbone_forward(x, training=training)
        z_resamp = self.perceiver_forward(z_dense)
        dense_logits = self._linear("dense_probe", z_resamp)
        if self.config.with_decoder:
            boundaries, class_logits = self.decoder_forward(z_resamp)
        else:
            boundaries, class_logits = None, None
        return BatchOutput(boundaries=boundaries, class_logits=class_logits, dense_logits=dense_logits)

    # -- persistence -----------------------------------------------------------------
    def reset_dropout_rng(self, seed) -> None:
        self._dropout_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {name: t.data.copy() for name, t in self.params.items()}
        for name, arr in self.bn_state.items():
            out[f"bn_state.{name}"] = arr.copy()
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, t in self.params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {t.data.shape}")
            t.data = arr.copy()
        for name in self.bn_state:
            self.bn_state[name] = np.asarray(state[f"bn_state.{name}"], dtype=np.float64).copy()

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def n_parameters(self) -> dict[str, int]:
        """Trainable parameter counts; the decoder side covers the event
        queries, decoder layers and both output heads."""
        decoder_prefixes = ("decoder", "event_queries", "boundary_head", "class_head")
        total = encoder = decoder = 0
        for name, t in self.params.items():
            total += t.size
            if name.startswith(decoder_prefixes):
                decoder += t.size
            else:
                encoder += t.size
        return {"total": total, "encoder": encoder, "decoder": decoder}


def predict_events(pred: PredictionSet) -> list[NormalizedEvent]:
    """Turn one window's predictions into events.

    Queries whose argmax class is background are suppressed; surviving
    boundary pairs are order-normalized, and degenerate (zero-length) pairs
    are dropped.
    """
    return [ev for ev, _conf in _decode(pred)]


def predict_scored_events(pred: PredictionSet) -> list[ScoredEvent]:
    """Like predict_events but retains the matching confidence per event."""
    return [
        ScoredEvent(ev.b_start, ev.b_end, ev.class_id, conf) for ev, conf in _decode(pred)
    ]


def _decode(pred: PredictionSet) -> list[tuple[NormalizedEvent, float]]:
    if pred.class_logits is None or pred.boundaries is None:
        raise ValueError("prediction set has no decoder outputs; use the dense path")
    logits = pred.class_logits.data
    shifted = logits - logits.max(axis=-1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=-1, keepdims=True)
    bounds = pred.boundaries.data
    out: list[tuple[NormalizedEvent, float]] = []
    for i in range(logits.shape[0]):
        cls = int(np.argmax(probs[i]))
        if cls == BACKGROUND_CLASS:
            continue
        lo, hi = float(np.min(bounds[i])), float(np.max(bounds[i]))
        if hi <= lo:
            continue
        out.append((NormalizedEvent(lo, hi, cls), float(probs[i, 1:].max())))
    out.sort(key=lambda pair: (pair[0].b_start, pair[0].b_end))
    return out
