"""Command-line surface for dataset generation, training, evaluation,
threshold sweeps, timeline rendering and report printing.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .assignment import greedy_match
from .harness import (
    AggregateReport,
    ExperimentConfig,
    IdentityPredictor,
    ModelPredictor,
    RandomBaselinePredictor,
    aggregate_reports,
    evaluate_model,
    gap_fill_sweep,
    grouped_kfold,
    iou_sweep_over_sessions,
    render_timeline,
    run_experiment,
)
from .model import EventDetector
from .signal import collect_stats, generate_dataset, robust_scale, save_session


def _load(args) -> ExperimentConfig:
    return ExperimentConfig.from_file(args.config)


def _sessions(cfg: ExperimentConfig, seed: int | None = None):
    raw = cfg.raw["dataset"]
    if seed is not None:
        cfg.raw["seed"] = seed
    sessions = generate_dataset(
        cfg.synthetic_spec(), int(raw["n_subjects"]), int(raw.get("sessions_per_subject", 1))
    )
    scaled = [robust_scale(s, clamp=float(raw.get("clamp", 16.0))) for s in sessions]
    return sessions, scaled


def _test_sessions_for_fold(cfg, scaled, fold: int):
    subjects = sorted({s.subject_id for s in scaled})
    groups = grouped_kfold(subjects, cfg.k_folds, cfg.seed)
    test = set(groups[fold])
    return [s for s in scaled if s.subject_id in test]


def _checkpoint_predictor(cfg, checkpoint: str, ablation: str):
    model = EventDetector(cfg.model_config(ablation), seed=0)
    model.load_state_dict(ad.load_checkpoint(checkpoint))
    return ModelPredictor(model, cfg.window_s)


def cmd_generate(args) -> int:
    cfg = _load(args)
    sessions, _ = _sessions(cfg, args.seed)
    out = Path(args.out)
    classes = cfg.class_map()
    for s in sessions:
        save_session(s, out / s.subject_id, classes)
    print(f"wrote {len(sessions)} sessions to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    if args.seed is not None:
        cfg.raw["seed"] = args.seed
    folds = None if args.fold is None else [args.fold]
    report = run_experiment(
        cfg,
        out_dir=args.out,
        folds=folds,
        ablations=[args.ablation],
        force=args.force,
        render=args.render,
    )
    for row in report.rows:
        print(f"{row.label}: mean F1_event={row.mean['f1_event']:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load(args)
    if args.seed is not None:
        cfg.raw["seed"] = args.seed
    _, scaled = _sessions(cfg)
    test = _test_sessions_for_fold(cfg, scaled, args.fold) if args.fold is not None else scaled

    if args.baseline == "random":
        predictor = RandomBaselinePredictor(collect_stats(scaled), cfg.seed)
        label = "random_baseline"
    elif args.baseline == "identity":
        predictor = IdentityPredictor()
        label = "identity"
    elif args.checkpoint:
        predictor = _checkpoint_predictor(cfg, args.checkpoint, args.ablation)
        label = f"checkpoint:{Path(args.checkpoint).name}"
    else:
        print("evaluate needs --baseline or --checkpoint", file=sys.stderr)
        return 2

    reports = evaluate_model(predictor, test, cfg.class_map(), cfg.metric_spec())
    row = aggregate_reports(label, reports)
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "reports.jsonl", "w") as fh:
            for rep in reports:
                fh.write(rep.to_json() + "\n")
    for rep in reports:
        print(rep.to_json())
    print(
        f"{label}: mean F1_event={row.mean['f1_event']:.4f} "
        f"F1_det={row.mean['f1_det']:.4f} F1_sample={row.mean['f1_sample']:.4f}"
    )
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    _, scaled = _sessions(cfg)
    test = _test_sessions_for_fold(cfg, scaled, args.fold) if args.fold is not None else scaled
    if args.baseline == "random":
        predictor = RandomBaselinePredictor(collect_stats(scaled), cfg.seed)
    else:
        predictor = _checkpoint_predictor(cfg, args.checkpoint, args.ablation)

    spec = cfg.metric_spec()
    result = {}
    if spec.sweep_thresholds:
        result["iou_sweep"] = iou_sweep_over_sessions(predictor, test, spec.sweep_thresholds)
    if spec.gap_fill_grid:
        result["gap_fill_sweep"] = gap_fill_sweep(
            predictor, test, spec.gap_fill_grid, spec.iou_threshold
        )
    text = json.dumps(result, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "sweep.json").write_text(text)
    print(text)
    return 0


def cmd_render(args) -> int:
    cfg = _load(args)
    _, scaled = _sessions(cfg)
    session = scaled[args.session_index]
    if args.baseline == "random":
        predictor = RandomBaselinePredictor(collect_stats(scaled), cfg.seed)
    elif args.checkpoint:
        predictor = _checkpoint_predictor(cfg, args.checkpoint, args.ablation)
    else:
        predictor = IdentityPredictor()
    preds = predictor.predict_session(session)
    match = greedy_match(preds, list(session.events), cfg.metric_spec().iou_threshold, True)
    svg = render_timeline(session, list(session.events), preds, match, cfg.class_map())
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"timeline_{session.session_id}.svg"
    path.write_text(svg)
    print(f"wrote {path}")
    return 0


def cmd_report(args) -> int:
    report = AggregateReport.from_json(Path(args.aggregate).read_text())
    print(f"fingerprint: {report.fingerprint}")
    header = f"{'row':<18} {'F1_event':>9} {'SEM':>7} {'F1_det':>7} {'F1_sample':>9} {'d_ctr(s)':>9}"
    print(header)
    for row in report.rows:
        d = row.mean.get("delta_ctr_s")
        print(
            f"{row.label:<18} {row.mean['f1_event']:>9.4f} {row.sem['f1_event']:>7.4f} "
            f"{row.mean['f1_det']:>7.4f} {row.mean['f1_sample']:>9.4f} "
            f"{d if d is None else round(d, 4)!s:>9}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evdet", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="experiment config (YAML)")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="output directory")

    g = sub.add_parser("generate", help="write the synthetic dataset to disk")
    common(g)
    g.set_defaults(fn=cmd_generate)

    t = sub.add_parser("train", help="train one fold or all folds")
    common(t)
    t.add_argument("--fold", type=int, default=None)
    t.add_argument("--ablation", choices=("full", "no_decoder", "no_hybrid"), default="full")
    t.add_argument("--force", action="store_true", help="overwrite mismatched prior outputs")
    t.add_argument("--render", action="store_true", help="emit timeline SVGs per fold")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("evaluate", help="evaluate a checkpoint or baseline")
    common(e)
    e.add_argument("--fold", type=int, default=None)
    e.add_argument("--baseline", choices=("random", "identity"), default=None)
    e.add_argument("--checkpoint", default=None)
    e.add_argument("--ablation", choices=("full", "no_decoder", "no_hybrid"), default="full")
    e.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("sweep", help="IoU-threshold and gap-fill sweeps")
    common(s)
    s.add_argument("--fold", type=int, default=None)
    s.add_argument("--baseline", choices=("random",), default=None)
    s.add_argument("--checkpoint", default=None)
    s.add_argument("--ablation", choices=("full", "no_decoder", "no_hybrid"), default="full")
    s.set_defaults(fn=cmd_sweep)

    r = sub.add_parser("render", help="render a session timeline as SVG")
    common(r)
    r.add_argument("--session-index", type=int, default=0)
    r.add_argument("--baseline", choices=("random", "identity"), default=None)
    r.add_argument("--checkpoint", default=None)
    r.add_argument("--ablation", choices=("full", "no_decoder", "no_hybrid"), default="full")
    r.set_defaults(fn=cmd_render)

    rep = sub.add_parser("report", help="print an aggregate report")
    rep.add_argument("--aggregate", required=True, help="path to aggregate.json")
    rep.set_defaults(fn=cmd_report)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
