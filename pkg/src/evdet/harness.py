"""Experiment orchestration: grouped cross-validation, per-subject evaluation
and aggregation, baselines and ablations, report emission, and SVG timeline
rendering.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import autodiff as ad
from .assignment import MatchResult, ScoredEvent, greedy_match
from .core import ClassMap, Event, NormalizedEvent, normalize_events
from .metrics import (
    MetricReport,
    f1_from_counts,
    f1_sample,
    gap_fill,
    rasterize_events,
)
from .model import EventDetector, ModelConfig
from .objective import LossWeights
from .signal import (
    ClassTemplate,
    DatasetStats,
    Session,
    SyntheticSpec,
    amplitude_for_snr_db,
    collect_stats,
    extract_windows,
    generate_dataset,
    random_baseline,
    robust_scale,
    save_session,
)
from .train import TrainConfig, TrainHistory, dense_events_from_logits, train_model

__all__ = [
    "ExperimentConfig",
    "MetricSpec",
    "grouped_kfold",
    "ModelPredictor",
    "RandomBaselinePredictor",
    "IdentityPredictor",
    "evaluate_model",
    "evaluate_subject",
    "AggregateRow",
    "AggregateReport",
    "aggregate_reports",
    "run_experiment",
    "render_timeline",
    "iou_sweep_over_sessions",
    "gap_fill_sweep",
]


# --- configuration ---------------------------------------------------------------


@dataclass(frozen=True)
class MetricSpec:
    iou_threshold: float = 0.5
    sweep_thresholds: tuple[float, ...] = ()
    gap_fill_grid: tuple[float, ...] = ()


@dataclass
class ExperimentConfig:
    """Resolved experiment description; every random choice flows from seed."""

    raw: dict

    @staticmethod
    def from_file(path: str | Path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
        return ExperimentConfig(raw=raw)

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    def fingerprint(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def class_map(self) -> ClassMap:
        return ClassMap(tuple(c["name"] for c in self.raw["dataset"]["classes"]))

    def synthetic_spec(self) -> SyntheticSpec:
        d = self.raw["dataset"]
        noise_std = float(d.get("noise_std", 1.0))
        templates = []
        for c in d["classes"]:
            if "amplitude" in c:
                amp = float(c["amplitude"])
            else:
                amp = amplitude_for_snr_db(noise_std, float(c.get("snr_db", 0.0)))
            templates.append(
                ClassTemplate(
                    carrier_hz=float(c["carrier_hz"]),
                    amplitude=amp,
                    duration_min_s=float(c["duration_min_s"]),
                    duration_max_s=float(c["duration_max_s"]),
                )
            )
        return SyntheticSpec(
            n_channels=int(d["n_channels"]),
            fs=float(d["fs"]),
            session_length_s=float(d["session_length_s"]),
            class_templates=tuple(templates),
            event_rate=float(d["event_rate"]),
            noise_std=noise_std,
            min_gap_s=float(d.get("min_gap_s", 0.0)),
            rng_seed=self.seed,
        )

    def model_config(self, ablation: str = "full") -> ModelConfig:
        m = dict(self.raw.get("model", {}))
        m.setdefault("n_channels", int(self.raw["dataset"]["n_channels"]))
        m.setdefault("n_classes", len(self.raw["dataset"]["classes"]))
        m["with_decoder"] = ablation != "no_decoder"
        return ModelConfig(**m)

    def train_config(self, ablation: str = "full", seed: int | None = None) -> TrainConfig:
        t = dict(self.raw.get("train", {}))
        if "betas" in t:
            t["betas"] = tuple(t["betas"])
        t["ablation"] = ablation
        t["rng_seed"] = self.seed if seed is None else seed
        return TrainConfig(**t)

    def loss_weights(self) -> LossWeights:
        return LossWeights(**self.raw.get("loss", {}))

    def metric_spec(self) -> MetricSpec:
        m = self.raw.get("metrics", {})
        return MetricSpec(
            iou_threshold=float(m.get("iou_threshold", 0.5)),
            sweep_thresholds=tuple(m.get("sweep", ())),
            gap_fill_grid=tuple(m.get("gap_fill_grid", ())),
        )

    @property
    def window_s(self) -> float:
        return float(self.raw["windows"]["window_s"])

    @property
    def train_overlap(self) -> float:
        return float(self.raw["windows"].get("train_overlap", 0.5))

    @property
    def k_folds(self) -> int:
        return int(self.raw.get("split", {}).get("k", 5))

    @property
    def ablations(self) -> tuple[str, ...]:
        return tuple(self.raw.get("ablations", ("full",)))


# --- splitting ---------------------------------------------------------------------


def grouped_kfold(subject_ids: Sequence[str], k: int, seed: int) -> list[list[str]]:
    """Partition subjects into k test groups with sizes differing by <= 1."""
    subjects = list(subject_ids)
    if len(set(subjects)) != len(subjects):
        raise ValueError("subject ids must be unique")
    if k < 1 or k > len(subjects):
        raise ValueError(f"k={k} incompatible with {len(subjects)} subjects")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    order = [subjects[i] for i in rng.permutation(len(subjects))]
    return [list(chunk) for chunk in np.array_split(np.array(order, dtype=object), k)]


# --- predictors ----------------------------------------------------------------------


class ModelPredictor:
    """Runs a trained detector over a session, window by window."""

    def __init__(self, model: EventDetector, window_s: float, batch_size: int = 16):
        self.model = model
        self.window_s = window_s
        self.batch_size = batch_size

    def predict_session(self, session: Session) -> list[ScoredEvent]:
        windows = extract_windows(session, self.window_s, overlap_frac=0.0, pad_last=True)
        out: list[ScoredEvent] = []
        with ad.no_grad():
            for lo in range(0, len(windows), self.batch_size):
                chunk = windows[lo : lo + self.batch_size]
                x = np.stack([w.samples for w in chunk])
                result = self.model.forward(x, training=False)
                for b, w in enumerate(chunk):
                    if self.model.config.with_decoder:
                        from .model import predict_scored_events

                        events = predict_scored_events(result.window(b))
                    else:
                        events = dense_events_from_logits(result.dense_logits.data[b])
                    for ev in events:
                        start = w.start_s + ev.start * self.window_s
                        end = w.start_s + ev.end * self.window_s
                        end = min(end, session.duration_s)
                        if end - start > 1.0 / session.fs:
                            out.append(ScoredEvent(start, end, ev.class_id, ev.confidence))
        out.sort(key=lambda e: e.start)
        return out


class RandomBaselinePredictor:
    """Statistics-informed random events, one independent stream per session."""

    def __init__(self, stats: DatasetStats, seed: int):
        self.stats = stats
        self.seed = int(seed)

    def predict_session(self, session: Session) -> list[ScoredEvent]:
        key = int.from_bytes(hashlib.sha256(session.session_id.encode()).digest()[:4], "big")
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((self.seed, 31337, key))))
        events = random_baseline(self.stats, session.duration_s, rng)
        return [ScoredEvent(e.start, e.end, e.class_id, 1.0) for e in events]


class IdentityPredictor:
    """Echoes the ground truth; the oracle upper bound for every metric."""

    def predict_session(self, session: Session) -> list[ScoredEvent]:
        return [ScoredEvent(e.start, e.end, e.class_id, 1.0) for e in session.events]


# --- evaluation ------------------------------------------------------------------------


def evaluate_subject(
    predictor,
    sessions: Sequence[Session],
    classes: ClassMap,
    spec: MetricSpec,
) -> MetricReport:
    """Pool events across one subject's sessions and score them."""
    tp = fp = fn = 0
    det_tp = det_fp = det_fn = 0
    center_errors: list[float] = []
    k = classes.n_classes
    cls_counts = {c: [0, 0, 0] for c in range(1, k + 1)}  # tp, fp, fn
    sample_counts = np.zeros((k, 3), dtype=np.int64)  # tp, fp, fn per class

    for session in sessions:
        preds = predictor.predict_session(session)
        gt = list(session.events)
        m = greedy_match(preds, gt, spec.iou_threshold, class_aware=True)
        tp, fp, fn = tp + m.tp, fp + m.fp, fn + m.fn
        md = greedy_match(preds, gt, spec.iou_threshold, class_aware=False)
        det_tp, det_fp, det_fn = det_tp + md.tp, det_fp + md.fp, det_fn + md.fn
        for i, j in m.pairs:
            p, g = preds[i], gt[j]
            center_errors.append(abs(0.5 * (p.start + p.end) - 0.5 * (g.start + g.end)))
            cls_counts[g.class_id][0] += 1
        for i in m.unmatched_predictions:
            cls_counts[preds[i].class_id][1] += 1
        for j in m.unmatched_ground_truth:
            cls_counts[gt[j].class_id][2] += 1

        n_steps = session.samples.shape[0]
        gt_mask = rasterize_events(
            normalize_events(gt, 0.0, session.duration_s), n_steps, k
        )
        pred_events = [
            Event(e.start, e.end, e.class_id)
            for e in preds
            if e.end > e.start and e.class_id >= 1
        ]
        pred_mask = rasterize_events(
            normalize_events(pred_events, 0.0, session.duration_s), n_steps, k
        )
        pb, gb = pred_mask.binary, gt_mask.binary
        for c in range(k):
            sample_counts[c, 0] += int(np.sum(pb[:, c] & gb[:, c]))
            sample_counts[c, 1] += int(np.sum(pb[:, c] & ~gb[:, c]))
            sample_counts[c, 2] += int(np.sum(~pb[:, c] & gb[:, c]))

    per_class = {
        classes.label(c): {
            "tp": cls_counts[c][0],
            "fp": cls_counts[c][1],
            "fn": cls_counts[c][2],
            "f1": f1_from_counts(*cls_counts[c]),
        }
        for c in cls_counts
    }
    sample_f1 = float(np.mean([f1_from_counts(*row) for row in sample_counts]))
    return MetricReport(
        f1_event=f1_from_counts(tp, fp, fn),
        f1_sample=sample_f1,
        f1_det=f1_from_counts(det_tp, det_fp, det_fn),
        delta_ctr_s=float(np.median(center_errors)) if center_errors else None,
        tp=tp,
        fp=fp,
        fn=fn,
        subject_id=sessions[0].subject_id if sessions else "",
        per_class=per_class,
    )


def evaluate_model(
    predictor,
    sessions: Sequence[Session],
    classes: ClassMap,
    spec: MetricSpec,
) -> list[MetricReport]:
    """One MetricReport per subject, subjects sorted by id."""
    by_subject: dict[str, list[Session]] = {}
    for s in sessions:
        by_subject.setdefault(s.subject_id, []).append(s)
    return [
        evaluate_subject(predictor, by_subject[sid], classes, spec)
        for sid in sorted(by_subject)
    ]


def iou_sweep_over_sessions(
    predictor, sessions: Sequence[Session], thresholds: Sequence[float]
) -> list[tuple[float, float]]:
    """Pooled-count F1_event per IoU threshold across many sessions."""
    cached = [(predictor.predict_session(s), list(s.events)) for s in sessions]
    curve = []
    for tau in thresholds:
        tp = fp = fn = 0
        for preds, gt in cached:
            m = greedy_match(preds, gt, tau, class_aware=True)
            tp, fp, fn = tp + m.tp, fp + m.fp, fn + m.fn
        curve.append((float(tau), f1_from_counts(tp, fp, fn)))
    for (_, a), (_, b) in zip(curve, curve[1:]):
        assert b <= a + 1e-12, f"pooled F1_event increased with tau: {curve}"
    return curve


def gap_fill_sweep(
    predictor, sessions: Sequence[Session], grid: Sequence[float], iou_threshold: float = 0.5
) -> list[tuple[float, float]]:
    """Pooled F1_event after gap-filling the predictions at each threshold."""
    cached = [(predictor.predict_session(s), list(s.events)) for s in sessions]
    curve = []
    for tau_gap in grid:
        tp = fp = fn = 0
        for preds, gt in cached:
            merged = gap_fill(preds, tau_gap)
            m = greedy_match(merged, gt, iou_threshold, class_aware=True)
            tp, fp, fn = tp + m.tp, fp + m.fp, fn + m.fn
        curve.append((float(tau_gap), f1_from_counts(tp, fp, fn)))
    return curve


# --- aggregation -------------------------------------------------------------------------

_AGG_FIELDS = ("f1_event", "f1_sample", "f1_det", "delta_ctr_s")


@dataclass
class AggregateRow:
    label: str
    reports: list[MetricReport]
    mean: dict = field(default_factory=dict)
    sem: dict = field(default_factory=dict)

    def recompute(self) -> None:
        for name in _AGG_FIELDS:
            values = [getattr(r, name) for r in self.reports]
            values = [v for v in values if v is not None]
            if not values:
                self.mean[name] = None
                self.sem[name] = None
                continue
            arr = np.asarray(values, dtype=np.float64)
            self.mean[name] = float(arr.mean())
            self.sem[name] = (
                float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
            )


@dataclass
class AggregateReport:
    rows: list[AggregateRow]
    fingerprint: str = ""

    def row(self, label: str) -> AggregateRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def to_json(self) -> str:
        payload = {
            "fingerprint": self.fingerprint,
            "rows": [
                {
                    "label": r.label,
                    "mean": r.mean,
                    "sem": r.sem,
                    "subjects": [json.loads(rep.to_json()) for rep in r.reports],
                }
                for r in self.rows
            ],
        }
        return json.dumps(payload, sort_keys=True, indent=1)

    @staticmethod
    def from_json(text: str) -> "AggregateReport":
        d = json.loads(text)
        rows = []
        for row in d["rows"]:
            reports = [MetricReport.from_json(json.dumps(s)) for s in row["subjects"]]
            rows.append(AggregateRow(label=row["label"], reports=reports, mean=row["mean"], sem=row["sem"]))
        return AggregateReport(rows=rows, fingerprint=d["fingerprint"])


def aggregate_reports(label: str, reports: Sequence[MetricReport]) -> AggregateRow:
    row = AggregateRow(label=label, reports=list(reports))
    row.recompute()
    return row


# --- experiment driver --------------------------------------------------------------------


def _fold_windows(
    sessions: Sequence[Session],
    subjects: set[str],
    window_s: float,
    overlap: float,
):
    out = []
    for s in sessions:
        if s.subject_id in subjects:
            out.extend(extract_windows(s, window_s, overlap_frac=overlap, pad_last=True))
    return out


def run_fold(
    cfg: ExperimentConfig,
    sessions: Sequence[Session],
    groups: Sequence[Sequence[str]],
    fold: int,
    ablation: str = "full",
    seed: int | None = None,
) -> tuple[EventDetector, TrainHistory, list[MetricReport]]:
    """Train one fold and evaluate its test subjects."""
    seed = cfg.seed if seed is None else seed
    k = len(groups)
    test_subjects = set(groups[fold])
    val_subjects = set(groups[(fold + 1) % k])
    train_subjects = {
        s for g in groups for s in g if s not in test_subjects and s not in val_subjects
    }
    if not train_subjects:
        raise ValueError("no training subjects left; use more subjects or fewer folds")

    train_windows = _fold_windows(sessions, train_subjects, cfg.window_s, cfg.train_overlap)
    val_windows = _fold_windows(sessions, val_subjects, cfg.window_s, 0.0)

    abl_idx = ("full", "no_decoder", "no_hybrid").index(ablation)
    model = EventDetector(
        cfg.model_config(ablation),
        seed=_derive_seed(seed, 100 + fold, abl_idx),
    )
    train_cfg = cfg.train_config(ablation, seed=_derive_seed(seed, 200 + fold, abl_idx))
    _best, history = train_model(model, train_windows, val_windows, train_cfg, cfg.loss_weights())

    predictor = ModelPredictor(model, cfg.window_s, train_cfg.batch_size)
    test_sessions = [s for s in sessions if s.subject_id in test_subjects]
    reports = evaluate_model(predictor, test_sessions, cfg.class_map(), cfg.metric_spec())
    return model, history, reports


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(parts).generate_state(1)[0])


def run_experiment(
    config: ExperimentConfig | str | Path,
    out_dir: str | Path | None = None,
    folds: Sequence[int] | None = None,
    ablations: Sequence[str] | None = None,
    force: bool = False,
    render: bool = False,
    with_random_baseline: bool = True,
) -> AggregateReport:
    """Generate (or reuse) the dataset, train/evaluate every requested fold,
    and write reports, histories, checkpoints and optional timelines.

    Completed folds are detected by the config fingerprint and skipped; a
    partial run under a different fingerprint is refused unless force=True.
    """
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_file(config)
    out = Path(out_dir) if out_dir is not None else Path(cfg.raw.get("out_dir", "runs/experiment"))
    out.mkdir(parents=True, exist_ok=True)
    fp = cfg.fingerprint()

    marker = out / "config.resolved.json"
    if marker.exists():
        prior = json.loads(marker.read_text())
        if prior.get("fingerprint") != fp and not force:
            raise RuntimeError(
                f"output dir {out} holds results for fingerprint "
                f"{prior.get('fingerprint')}, not {fp}; pass force=True to overwrite"
            )
    marker.write_text(json.dumps({"fingerprint": fp, "config": cfg.raw}, sort_keys=True, indent=1))

    classes = cfg.class_map()
    d = cfg.raw["dataset"]
    sessions = generate_dataset(
        cfg.synthetic_spec(), int(d["n_subjects"]), int(d.get("sessions_per_subject", 1))
    )
    dataset_dir = out / "dataset"
    for s in sessions:
        save_session(s, dataset_dir / s.subject_id, classes)
    scaled = [robust_scale(s, clamp=float(d.get("clamp", 16.0))) for s in sessions]

    subjects = sorted({s.subject_id for s in sessions})
    groups = grouped_kfold(subjects, cfg.k_folds, cfg.seed)
    fold_list = list(folds) if folds is not None else list(range(cfg.k_folds))
    abl_list = list(ablations) if ablations is not None else list(cfg.ablations)

    rows: list[AggregateRow] = []
    for ablation in abl_list:
        reports: list[MetricReport] = []
        for fold in fold_list:
            fold_dir = out / ablation / f"fold{fold}"
            done = fold_dir / "done.json"
            if done.exists() and json.loads(done.read_text()).get("fingerprint") == fp:
                with open(fold_dir / "reports.jsonl") as fh:
                    reports.extend(MetricReport.from_json(line) for line in fh if line.strip())
                continue
            fold_dir.mkdir(parents=True, exist_ok=True)
            model, history, fold_reports = run_fold(cfg, scaled, groups, fold, ablation)
            ad.save_checkpoint(fold_dir / "checkpoint.tsv", model.state_dict())
            (fold_dir / "history.jsonl").write_text(history.to_jsonl())
            with open(fold_dir / "reports.jsonl", "w") as fh:
                for rep in fold_reports:
                    fh.write(rep.to_json() + "\n")
            if render:
                _render_fold_examples(cfg, model, scaled, groups[fold], fold_dir)
            done.write_text(json.dumps({"fingerprint": fp, "fold": fold}))
            reports.extend(fold_reports)
        rows.append(aggregate_reports(ablation, sorted(reports, key=lambda r: r.subject_id)))

    if with_random_baseline:
        stats = collect_stats(scaled)
        predictor = RandomBaselinePredictor(stats, cfg.seed)
        baseline_reports = evaluate_model(predictor, scaled, classes, cfg.metric_spec())
        rows.append(aggregate_reports("random_baseline", baseline_reports))

    report = AggregateReport(rows=rows, fingerprint=fp)
    (out / "aggregate.json").write_text(report.to_json())
    return report


def _render_fold_examples(cfg, model, sessions, test_subjects, fold_dir: Path) -> None:
    test = [s for s in sessions if s.subject_id in set(test_subjects)]
    if not test:
        return
    session = test[0]
    predictor = ModelPredictor(model, cfg.window_s)
    preds = predictor.predict_session(session)
    match = greedy_match(preds, list(session.events), cfg.metric_spec().iou_threshold, True)
    svg = render_timeline(session, list(session.events), preds, match, cfg.class_map())
    (fold_dir / f"timeline_{session.session_id}.svg").write_text(svg)


# --- SVG timeline ---------------------------------------------------------------------------

_PALETTE = (
    "#4C72B0", "#DD8452", "#55A868", "#C44E52", "#8172B3",
    "#937860", "#DA8BC3", "#8C8C8C", "#CCB974", "#64B5CD",
)

SVG_WIDTH = 900
_LANE_H = 40
_MARGIN_L = 50
_MARGIN_R = 130


def _class_color(class_id: int) -> str:
    return _PALETTE[(class_id - 1) % len(_PALETTE)]


def render_timeline(
    session: Session | float,
    ground_truth: Sequence,
    predictions: Sequence,
    match: MatchResult,
    classes: ClassMap | None = None,
    width: int = SVG_WIDTH,
) -> str:
    """Two-lane SVG: ground truth above, predictions below.

    Rectangles are colored by class; matched predictions get a solid border,
    unmatched ones a dashed border. The window's event F1 and sample F1 are
    annotated on the right. Output is byte-stable for golden-file tests.
    """
    duration = session.duration_s if isinstance(session, Session) else float(session)
    if duration <= 0:
        raise ValueError("duration must be positive")
    plot_w = width - _MARGIN_L - _MARGIN_R
    height = 40 + 2 * (_LANE_H + 20)

    def x(t: float) -> float:
        return _MARGIN_L + max(0.0, min(1.0, t / duration)) * plot_w

    f1e = f1_from_counts(match.tp, match.fp, match.fn)
    n_cls = classes.n_classes if classes is not None else max(
        [e.class_id for e in list(ground_truth) + list(predictions)] or [1]
    )
    raster_steps = 512
    gt_n = _to_normalized(ground_truth, duration)
    pr_n = _to_normalized(predictions, duration)
    f1s_mask_gt = rasterize_events(gt_n, raster_steps, n_cls)
    f1s_mask_pr = rasterize_events(pr_n, raster_steps, n_cls)
    cmap = classes if classes is not None else ClassMap(tuple(f"c{i}" for i in range(1, n_cls + 1)))
    f1s = f1_sample(f1s_mask_pr, f1s_mask_gt, cmap)

    matched_pred = {i for i, _ in match.pairs}
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="8" y="{40 + _LANE_H // 2}" font-size="12" font-family="monospace">GT</text>',
        f'<text x="8" y="{40 + _LANE_H + 20 + _LANE_H // 2}" font-size="12" '
        f'font-family="monospace">pred</text>',
    ]
    gt_y = 30
    pr_y = gt_y + _LANE_H + 20
    for lane_y in (gt_y, pr_y):
        parts.append(
            f'<line x1="{_MARGIN_L}" y1="{lane_y + _LANE_H}" x2="{_MARGIN_L + plot_w}" '
            f'y2="{lane_y + _LANE_H}" stroke="#999" stroke-width="1"/>'
        )

    for s, e, c, _conf in zip(*_bounds_arrays(ground_truth)):
        parts.append(_rect(x(s), gt_y, x(e) - x(s), _LANE_H, _class_color(int(c)), solid=True))
    for i, (s, e, c, _conf) in enumerate(zip(*_bounds_arrays(predictions))):
        parts.append(
            _rect(x(s), pr_y, x(e) - x(s), _LANE_H, _class_color(int(c)), solid=i in matched_pred)
        )

    ann_x = _MARGIN_L + plot_w + 10
    parts.append(
        f'<text x="{ann_x}" y="{gt_y + 14}" font-size="12" font-family="monospace">'
        f"F1e={f1e:.3f}</text>"
    )
    parts.append(
        f'<text x="{ann_x}" y="{gt_y + 32}" font-size="12" font-family="monospace">'
        f"F1s={f1s:.3f}</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _rect(x: float, y: float, w: float, h: float, fill: str, solid: bool) -> str:
    dash = "" if solid else ' stroke-dasharray="5,3"'
    return (
        f'<rect x="{x:.3f}" y="{y}" width="{max(w, 0.5):.3f}" height="{h}" '
        f'fill="{fill}" fill-opacity="0.55" stroke="black" stroke-width="1.5"{dash}/>'
    )


def _bounds_arrays(items: Sequence):
    from .assignment import as_scored_arrays

    return as_scored_arrays(list(items))


def _to_normalized(items: Sequence, duration: float) -> list[NormalizedEvent]:
    out = []
    for s, e, c, _conf in zip(*_bounds_arrays(items)):
        lo = max(0.0, min(1.0, s / duration))
        hi = max(0.0, min(1.0, e / duration))
        if hi > lo and c >= 1:
            out.append(NormalizedEvent(lo, hi, int(c)))
    return out
