"""Domain types for labeled time intervals and the normalization algebra
between absolute time and window-relative coordinates.

Conventions used throughout the package:

* class id 0 is the implicit background ("no event") class; foreground
  classes occupy ids 1..K,
* ground-truth events are always foreground,
* window-relative coordinates live in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence, TextIO

import numpy as np

__all__ = [
    "BACKGROUND_CLASS",
    "ClassMap",
    "Event",
    "NormalizedEvent",
    "Prediction",
    "Window",
    "normalize_events",
    "denormalize_event",
    "validate_window_config",
    "WindowConfigCheck",
    "write_annotations",
    "read_annotations",
    "parse_annotation_lines",
]

BACKGROUND_CLASS = 0


@dataclass(frozen=True)
class ClassMap:
    """Ordered vocabulary of the K foreground class labels.

    Index 0 is reserved for the background class and never appears in
    ``names``; foreground label i maps to class id i + 1.
    """

    names: tuple[str, ...]

    def __post_init__(self) -> None:
        names = tuple(str(n) for n in self.names)
        if not names:
            raise ValueError("ClassMap needs at least one foreground label")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate class labels: {names}")
        object.__setattr__(self, "names", names)

    @property
    def n_classes(self) -> int:
        """Number of foreground classes K."""
        return len(self.names)

    def label(self, class_id: int) -> str:
        if class_id == BACKGROUND_CLASS:
            return "background"
        if not 1 <= class_id <= self.n_classes:
            raise ValueError(f"class id {class_id} outside 1..{self.n_classes}")
        return self.names[class_id - 1]

    def class_id(self, label: str) -> int:
        try:
            return self.names.index(label) + 1
        except ValueError:
            raise ValueError(f"unknown class label {label!r}; known: {self.names}") from None


@dataclass(frozen=True)
class Event:
    """A labeled time interval in absolute seconds."""

    start: float
    end: float
    class_id: int

    def __post_init__(self) -> None:
        if not self.start >= 0:
            raise ValueError(f"event start must be >= 0, got {self.start}")
        if not self.end > self.start:
            raise ValueError(f"event end must exceed start, got [{self.start}, {self.end}]")
        if self.class_id < 1:
            raise ValueError("ground-truth events are foreground only (class_id >= 1)")

    @property
    def duration(self) -> float:
        return self.end - self.start

    @property
    def center(self) -> float:
        return 0.5 * (self.start + self.end)


@dataclass(frozen=True)
class NormalizedEvent:
    """A labeled interval in window-relative coordinates within [0, 1]."""

    b_start: float
    b_end: float
    class_id: int

    def __post_init__(self) -> None:
        if not (0.0 <= self.b_start < self.b_end <= 1.0):
            raise ValueError(
                f"normalized bounds must satisfy 0 <= start < end <= 1, got "
                f"[{self.b_start}, {self.b_end}]"
            )
        if self.class_id < 1:
            raise ValueError("ground-truth events are foreground only (class_id >= 1)")

    @property
    def duration(self) -> float:
        return self.b_end - self.b_start

    @property
    def center(self) -> float:
        return 0.5 * (self.b_start + self.b_end)


_PROB_SUM_TOL = 1e-6


@dataclass(frozen=True)
class Prediction:
    """One candidate event as emitted by the detector.

    ``b_start``/``b_end`` are unordered boundary outputs in [0, 1]; ``probs``
    is a probability simplex over the background class plus the K foreground
    classes.
    """

    b_start: float
    b_end: float
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.probs)
        if len(probs) < 2:
            raise ValueError("probs must cover background plus at least one class")
        if any(p < 0 for p in probs):
            raise ValueError(f"probabilities must be non-negative, got {probs}")
        if abs(sum(probs) - 1.0) > _PROB_SUM_TOL:
            raise ValueError(f"probabilities must sum to 1 within {_PROB_SUM_TOL}, got {sum(probs)}")
        for b in (self.b_start, self.b_end):
            if not 0.0 <= b <= 1.0:
                raise ValueError(f"boundaries must lie in [0, 1], got {b}")
        object.__setattr__(self, "probs", probs)

    @property
    def confidence(self) -> float:
        """Maximum foreground probability."""
        return max(self.probs[1:])

    @property
    def predicted_class(self) -> int:
        """Argmax over all K+1 entries (0 means background)."""
        return int(np.argmax(self.probs))


@dataclass(frozen=True)
class Window:
    """A fixed-duration slice of a multi-channel recording.

    ``samples`` has shape (T, C); attached events are clipped to the window
    and expressed in window-relative coordinates.
    """

    samples: np.ndarray
    fs: float
    duration_s: float
    subject_id: str
    session_id: str
    events: tuple[NormalizedEvent, ...]
    start_s: float = 0.0

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples)
        if samples.ndim != 2:
            raise ValueError(f"samples must be a T x C matrix, got shape {samples.shape}")
        t, c = samples.shape
        if c < 1:
            raise ValueError("window needs at least one channel")
        expected_t = round(self.fs * self.duration_s)
        if t != expected_t:
            raise ValueError(f"T={t} inconsistent with fs*duration={expected_t}")
        samples = samples.copy()
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "events", tuple(self.events))

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]


def normalize_events(
    events: Sequence[Event],
    window_start: float,
    window_duration: float,
    min_length: float = 0.0,
) -> list[NormalizedEvent]:
    """Map absolute events onto window-relative [0, 1] coordinates.

    Events overlapping the window are clipped to its borders; events entirely
    outside are dropped, as are events whose clipped length is <= min_length
    (a normalized length, e.g. one sample period / window duration).
    """
    if not window_duration > 0:
        raise ValueError(f"window_duration must be positive, got {window_duration}")
    out: list[NormalizedEvent] = []
    for ev in events:
        b_start = (ev.start - window_start) / window_duration
        b_end = (ev.end - window_start) / window_duration
        b_start = min(max(b_start, 0.0), 1.0)
        b_end = min(max(b_end, 0.0), 1.0)
        if b_end - b_start <= min_length:
            continue
        out.append(NormalizedEvent(b_start, b_end, ev.class_id))
    return out


def denormalize_event(e: NormalizedEvent, window_start: float, window_duration: float) -> Event:
    """Inverse of :func:`normalize_events` for a single event."""
    if not window_duration > 0:
        raise ValueError(f"window_duration must be positive, got {window_duration}")
    return Event(
        start=window_start + e.b_start * window_duration,
        end=window_start + e.b_end * window_duration,
        class_id=e.class_id,
    )


class WindowConfigCheck(NamedTuple):
    tokens_per_event: float
    ok: bool


# Below this many latent tokens per event, boundary regression degrades.
MIN_TOKENS_PER_EVENT = 3.0


def validate_window_config(
    window_s: float, mean_events_per_window: float, n_time_latents: int
) -> WindowConfigCheck:
    """Check that the latent grid resolves the expected event density.

    Returns the latent tokens available per event and whether that clears
    the minimum of 3.
    """
    if not window_s > 0:
        raise ValueError(f"window_s must be positive, got {window_s}")
    if not mean_events_per_window > 0:
        raise ValueError(f"mean_events_per_window must be positive, got {mean_events_per_window}")
    if not n_time_latents > 0:
        raise ValueError(f"n_time_latents must be positive, got {n_time_latents}")
    tokens = n_time_latents / mean_events_per_window
    return WindowConfigCheck(tokens_per_event=tokens, ok=tokens >= MIN_TOKENS_PER_EVENT)


# --- annotation interchange -------------------------------------------------
#
# One record per line: session_id <TAB> start_s <TAB> end_s <TAB> class_label
# UTF-8, '.' decimal separator.


def write_annotations(
    target: TextIO | str | Path,
    records: Iterable[tuple[str, Event]],
    classes: ClassMap,
) -> None:
    """Write (session_id, event) records in the tab-separated interchange format."""

    def _emit(fh: TextIO) -> None:
        for session_id, ev in records:
            fh.write(f"{session_id}\t{ev.start!r}\t{ev.end!r}\t{classes.label(ev.class_id)}\n")

    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8") as fh:
            _emit(fh)
    else:
        _emit(target)


def parse_annotation_lines(lines: Iterable[str], classes: ClassMap) -> dict[str, list[Event]]:
    out: dict[str, list[Event]] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ValueError(f"annotation line {lineno}: expected 4 tab-separated fields, got {len(parts)}")
        session_id, start_s, end_s, label = parts
        ev = Event(float(start_s), float(end_s), classes.class_id(label))
        out.setdefault(session_id, []).append(ev)
    return out


def read_annotations(source: TextIO | str | Path, classes: ClassMap) -> dict[str, list[Event]]:
    """Read the tab-separated annotation format back into per-session event lists."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return parse_annotation_lines(fh, classes)
    return parse_annotation_lines(source, classes)
