"""Synthetic labeled signal generation, robust per-channel scaling, window
extraction with overlap and padding, occupancy-weighted sampling, and the
statistics-informed random baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ClassMap, Event, Window, normalize_events, read_annotations, write_annotations

__all__ = [
    "ClassTemplate",
    "SyntheticSpec",
    "Session",
    "DatasetStats",
    "GenerationError",
    "generate_session",
    "generate_dataset",
    "collect_stats",
    "robust_scale",
    "extract_windows",
    "window_occupancy",
    "occupancy_weight",
    "weighted_sample_indices",
    "random_baseline",
    "save_session",
    "load_session",
    "amplitude_for_snr_db",
]

PLACEMENT_RETRIES = 100  # bounded event-placement retries per event
IQR_FLOOR = 1e-9


class GenerationError(RuntimeError):
    """Raised when synthetic event placement cannot satisfy the constraints."""


@dataclass(frozen=True)
class ClassTemplate:
    """Waveform family of a foreground class: a Hann-windowed sinusoid."""

    carrier_hz: float
    amplitude: float
    duration_min_s: float
    duration_max_s: float

    def __post_init__(self) -> None:
        if not 0 < self.duration_min_s <= self.duration_max_s:
            raise ValueError("durations must satisfy 0 < min <= max")
        if self.carrier_hz <= 0 or self.amplitude <= 0:
            raise ValueError("carrier_hz and amplitude must be positive")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one synthetic labeled dataset."""

    n_channels: int
    fs: float
    session_length_s: float
    class_templates: tuple[ClassTemplate, ...]
    event_rate: float  # events per second
    noise_std: float
    min_gap_s: float = 0.0  # 0 permits overlapping events
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_channels < 1 or self.fs <= 0 or self.session_length_s <= 0:
            raise ValueError("channels, fs and session length must be positive")
        if self.event_rate < 0 or self.noise_std < 0 or self.min_gap_s < 0:
            raise ValueError("event_rate, noise_std and min_gap_s must be >= 0")
        if not self.class_templates:
            raise ValueError("at least one class template is required")
        object.__setattr__(self, "class_templates", tuple(self.class_templates))

    @property
    def n_classes(self) -> int:
        return len(self.class_templates)


@dataclass(frozen=True)
class Session:
    """A full recording with absolute-time annotations."""

    samples: np.ndarray  # T_total x C
    fs: float
    subject_id: str
    session_id: str
    events: tuple[Event, ...]

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples)
        if samples.ndim != 2:
            raise ValueError(f"samples must be T x C, got shape {samples.shape}")
        duration = samples.shape[0] / self.fs
        for ev in self.events:
            if ev.end > duration + 1e-9:
                raise ValueError(f"event {ev} exceeds session duration {duration:.3f}s")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "events", tuple(self.events))

    @property
    def duration_s(self) -> float:
        return self.samples.shape[0] / self.fs

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class DatasetStats:
    """Event pool and rate statistics used by the random baseline."""

    event_pool: tuple[Event, ...]
    mean_event_frequency: float  # events per second

    def __post_init__(self) -> None:
        if self.mean_event_frequency < 0:
            raise ValueError("mean_event_frequency must be >= 0")
        if self.mean_event_frequency > 0 and not self.event_pool:
            raise ValueError("a positive event frequency needs a non-empty pool")
        object.__setattr__(self, "event_pool", tuple(self.event_pool))


def amplitude_for_snr_db(noise_std: float, snr_db: float) -> float:
    """Template amplitude giving the requested within-event SNR.

    A Hann-windowed sinusoid at amplitude A has mean power (3/16) A^2 over
    its support, so SNR = (3 A^2) / (16 sigma^2).
    """
    return noise_std * math.sqrt(16.0 / 3.0 * 10.0 ** (snr_db / 10.0))


def _place_events(spec: SyntheticSpec, rng: np.random.Generator, session_id: str) -> list[Event]:
    duration = spec.session_length_s
    n_events = int(rng.poisson(spec.event_rate * duration))
    placed: list[Event] = []
    for _ in range(n_events):
        for attempt in range(PLACEMENT_RETRIES):
            cls = int(rng.integers(1, spec.n_classes + 1))
            tpl = spec.class_templates[cls - 1]
            ev_dur = float(rng.uniform(tpl.duration_min_s, tpl.duration_max_s))
            if ev_dur >= duration:
                ev_dur = duration
                start = 0.0
            else:
                start = float(rng.uniform(0.0, duration - ev_dur))
            candidate = Event(start, start + ev_dur, cls)
            if spec.min_gap_s == 0.0 or all(
                candidate.start - ev.end >= spec.min_gap_s
                or ev.start - candidate.end >= spec.min_gap_s
                for ev in placed
            ):
                placed.append(candidate)
                break
        else:
            raise GenerationError(
                f"session {session_id}: could not place an event with "
                f"min_gap_s={spec.min_gap_s} after {PLACEMENT_RETRIES} retries"
            )
    placed.sort(key=lambda e: e.start)
    return placed


def generate_session(
    spec: SyntheticSpec, subject_id: str, session_id: str, rng: np.random.Generator
) -> Session:
    """One synthetic session: class-specific templates on zero-mean noise.

    Each event adds a Hann-windowed sinusoid at its class carrier frequency,
    mixed across channels with unit-RMS random channel weights.
    """
    t_total = round(spec.fs * spec.session_length_s)
    samples = (
        rng.standard_normal((t_total, spec.n_channels)) * spec.noise_std
        if spec.noise_std > 0
        else np.zeros((t_total, spec.n_channels))
    )
    events = _place_events(spec, rng, session_id)
    times = np.arange(t_total) / spec.fs
    for ev in events:
        tpl = spec.class_templates[ev.class_id - 1]
        sel = (times >= ev.start) & (times < ev.end)
        local_t = times[sel] - ev.start
        envelope = np.sin(np.pi * local_t / ev.duration) ** 2  # Hann window
        waveform = tpl.amplitude * np.sin(2 * np.pi * tpl.carrier_hz * local_t) * envelope
        weights = rng.standard_normal(spec.n_channels)
        weights /= max(np.sqrt(np.mean(weights**2)), 1e-12)
        samples[sel, :] += waveform[:, None] * weights[None, :]
    return Session(
        samples=samples,
        fs=spec.fs,
        subject_id=subject_id,
        session_id=session_id,
        events=tuple(events),
    )


def generate_dataset(
    spec: SyntheticSpec, n_subjects: int, sessions_per_subject: int
) -> list[Session]:
    """Deterministic multi-subject dataset keyed off spec.rng_seed."""
    if n_subjects < 1 or sessions_per_subject < 1:
        raise ValueError("need at least one subject and one session per subject")
    root = np.random.SeedSequence(spec.rng_seed)
    streams = root.spawn(n_subjects * sessions_per_subject)
    sessions: list[Session] = []
    idx = 0
    for s in range(n_subjects):
        subject_id = f"subj{s:02d}"
        for r in range(sessions_per_subject):
            rng = np.random.Generator(np.random.PCG64(streams[idx]))
            idx += 1
            sessions.append(
                generate_session(spec, subject_id, f"{subject_id}_sess{r:02d}", rng)
            )
    return sessions


def collect_stats(sessions: Sequence[Session]) -> DatasetStats:
    """Pool all ground-truth events and compute the mean event rate."""
    pool: list[Event] = []
    total_s = 0.0
    for sess in sessions:
        pool.extend(sess.events)
        total_s += sess.duration_s
    freq = len(pool) / total_s if total_s > 0 else 0.0
    return DatasetStats(event_pool=tuple(pool), mean_event_frequency=freq)


def robust_scale(session: Session, clamp: float = 16.0) -> Session:
    """Per-channel median/IQR scaling with clamping to [-clamp, clamp].

    Channels with IQR below 1e-9 are median-centered but not divided.
    """
    if clamp <= 0:
        raise ValueError(f"clamp must be positive, got {clamp}")
    x = session.samples.astype(np.float64, copy=True)
    med = np.median(x, axis=0)
    q25, q75 = np.percentile(x, [25.0, 75.0], axis=0)
    iqr = q75 - q25
    iqr = np.where(iqr < IQR_FLOOR, 1.0, iqr)
    x = np.clip((x - med) / iqr, -clamp, clamp)
    return replace(session, samples=x)


def extract_windows(
    session: Session,
    window_s: float,
    overlap_frac: float = 0.0,
    pad_last: bool = False,
) -> list[Window]:
    """Slice a session into fixed-duration windows.

    Stride is window_s * (1 - overlap_frac). With pad_last, a trailing
    partial window is zero-padded on the right so every recorded sample is
    covered; its events stay clipped to the recorded portion.
    """
    if window_s <= 0:
        raise ValueError(f"window_s must be positive, got {window_s}")
    if not 0.0 <= overlap_frac < 1.0:
        raise ValueError(f"overlap_frac must lie in [0, 1), got {overlap_frac}")
    t_win = round(session.fs * window_s)
    stride_s = window_s * (1.0 - overlap_frac)
    t_stride = max(1, round(session.fs * stride_s))
    t_total = session.samples.shape[0]
    min_len = 1.0 / t_win  # drop sub-sample clips

    windows: list[Window] = []
    start = 0
    while start + t_win <= t_total:
        windows.append(_make_window(session, start, t_win, window_s, min_len))
        start += t_stride
    if pad_last and start < t_total:
        chunk = session.samples[start:t_total]
        padded = np.zeros((t_win, session.n_channels), dtype=session.samples.dtype)
        padded[: chunk.shape[0]] = chunk
        events = normalize_events(
            session.events, start / session.fs, window_s, min_length=min_len
        )
        windows.append(
            Window(
                samples=padded,
                fs=session.fs,
                duration_s=window_s,
                subject_id=session.subject_id,
                session_id=session.session_id,
                events=tuple(events),
                start_s=start / session.fs,
            )
        )
    return windows


def _make_window(
    session: Session, start: int, t_win: int, window_s: float, min_len: float
) -> Window:
    start_s = start / session.fs
    events = normalize_events(session.events, start_s, window_s, min_length=min_len)
    return Window(
        samples=session.samples[start : start + t_win],
        fs=session.fs,
        duration_s=window_s,
        subject_id=session.subject_id,
        session_id=session.session_id,
        events=tuple(events),
        start_s=start_s,
    )


def window_occupancy(window: Window) -> float:
    """Fraction of the window covered by the union of its events."""
    if not window.events:
        return 0.0
    spans = sorted((ev.b_start, ev.b_end) for ev in window.events)
    total = 0.0
    cur_s, cur_e = spans[0]
    for s, e in spans[1:]:
        if s > cur_e:
            total += cur_e - cur_s
            cur_s, cur_e = s, e
        else:
            cur_e = max(cur_e, e)
    total += cur_e - cur_s
    return min(1.0, total)


def occupancy_weight(occupancy: float, alpha: float, beta: float) -> float:
    """Sampling weight alpha + (1 - alpha) * min(1, beta * occupancy).

    alpha sets the floor for empty windows; beta boosts sparsely covered ones.
    """
    if not 0.0 <= occupancy <= 1.0:
        raise ValueError(f"occupancy must lie in [0, 1], got {occupancy}")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return alpha + (1.0 - alpha) * min(1.0, beta * occupancy)


def weighted_sample_indices(
    weights: Sequence[float], n_draws: int, rng_seed: int | np.random.Generator
) -> np.ndarray:
    """Draw indices with replacement, proportional to the given weights."""
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("weights must be >= 0")
    total = w.sum()
    if total <= 0:
        raise ValueError("at least one weight must be positive")
    rng = (
        rng_seed
        if isinstance(rng_seed, np.random.Generator)
        else np.random.Generator(np.random.PCG64(rng_seed))
    )
    return rng.choice(len(w), size=n_draws, replace=True, p=w / total)


def random_baseline(
    stats: DatasetStats,
    session_duration_s: float,
    rng_seed: int | np.random.Generator,
) -> list[Event]:
    """Statistics-informed random predictions for one session.

    Draws k = round(duration * mean frequency) events from the pool
    (keeping their durations and classes) and places each start uniformly
    at random. Pool events longer than the session are re-drawn a bounded
    number of times, then truncated.
    """
    if session_duration_s <= 0:
        raise ValueError(f"session_duration_s must be positive, got {session_duration_s}")
    k = round(session_duration_s * stats.mean_event_frequency)
    if k == 0:
        return []
    rng = (
        rng_seed
        if isinstance(rng_seed, np.random.Generator)
        else np.random.Generator(np.random.PCG64(rng_seed))
    )
    pool = stats.event_pool
    out: list[Event] = []
    for _ in range(k):
        ev = pool[int(rng.integers(len(pool)))]
        for _retry in range(PLACEMENT_RETRIES):
            if ev.duration < session_duration_s:
                break
            ev = pool[int(rng.integers(len(pool)))]
        duration = min(ev.duration, session_duration_s)
        start = float(rng.uniform(0.0, session_duration_s - duration)) if duration < session_duration_s else 0.0
        out.append(Event(start, start + duration, ev.class_id))
    out.sort(key=lambda e: e.start)
    return out


# --- session persistence ------------------------------------------------------
#
# <session_id>.f32 : text header "T C fs\n" followed by row-major
#                    little-endian float32 samples.
# <session_id>.events.tsv : the core annotation interchange format.


def save_session(session: Session, directory: str | Path, classes: ClassMap) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    sig_path = directory / f"{session.session_id}.f32"
    t, c = session.samples.shape
    with open(sig_path, "wb") as fh:
        fh.write(f"{t} {c} {session.fs!r}\n".encode("ascii"))
        fh.write(session.samples.astype("<f4").tobytes(order="C"))
    write_annotations(
        directory / f"{session.session_id}.events.tsv",
        ((session.session_id, ev) for ev in session.events),
        classes,
    )


def load_session(
    directory: str | Path, session_id: str, subject_id: str, classes: ClassMap
) -> Session:
    directory = Path(directory)
    sig_path = directory / f"{session_id}.f32"
    with open(sig_path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        t, c, fs = int(header[0]), int(header[1]), float(header[2])
        samples = np.frombuffer(fh.read(), dtype="<f4").reshape(t, c).astype(np.float64)
    by_session = read_annotations(directory / f"{session_id}.events.tsv", classes)
    events = tuple(by_session.get(session_id, []))
    return Session(samples=samples, fs=fs, subject_id=subject_id, session_id=session_id, events=events)
