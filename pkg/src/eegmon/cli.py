"""Command-line entry points. Stages talk through files so any step can be
rerun or inspected in isolation.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import dataio, pipeline
from .core import LABEL_ATTENTIVE, LABEL_NONATTENTIVE
from .errors import EegmonError
from .features import FeatureManifest, FeatureMatrix, build_manifest
from .learn import SvmModel, train_svm
from .realtime import StreamEngine, pilot_report, session_summary
from .synth import (GeneratorConfig, PhaseSource, ReplaySource,
                    generate_dataset)


def _require(path: str | Path) -> Path:
    p = Path(path)
    if not p.exists():
        print(f"missing input: {p}", file=sys.stderr)
        raise SystemExit(2)
    return p


def _outdir(path: str | Path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _config_from_args(args: argparse.Namespace) -> pipeline.RunConfig:
    cfg = pipeline.RunConfig()
    overrides = {}
    for name in ("segment_len", "overlap", "trim", "pearson_threshold",
                 "rfe_target", "consensus_fraction", "final_c", "final_gamma",
                 "consecutive_required", "cooldown_events", "min_duration_s",
                 "duration_convention", "include_aux"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return pipeline.RunConfig(**{**cfg.to_dict(), **overrides}) if overrides \
        else cfg


def cmd_generate(args: argparse.Namespace) -> int:
    out = _outdir(args.out)
    cfg = GeneratorConfig(
        n_subjects=args.subjects, blocks_per_class=args.blocks_per_class,
        block_len=args.block_len, contrast=args.contrast,
        blink_rate_hz=args.blink_rate, noise_uv=args.noise_uv,
        score_mode=args.score_mode, seed=args.seed)
    records, truth = generate_dataset(cfg)
    dataio.write_records(out / "dataset.jsonl", records)
    dataio.write_json(out / "truth.json", truth)
    print(f"wrote {len(records)} blocks to {out / 'dataset.jsonl'}")
    return 0


def cmd_preprocess(args: argparse.Namespace) -> int:
    dataset = _require(args.dataset)
    out = _outdir(args.out)
    cfg = _config_from_args(args)
    records = dataio.read_records(dataset)
    balanced, report = pipeline.clean_records(records, cfg,
                                              deblink=not args.no_deblink)
    dataio.write_segments(out / "segments.jsonl", balanced.segments)
    dataio.write_json(out / "preprocess_report.json", report.to_dict())
    dataio.write_json(out / "run_manifest.json",
                      pipeline.run_manifest(cfg, {"dataset": dataset},
                                            "preprocess"))
    print(f"kept {len(balanced)} segments "
          f"({report.n_rejected} rejected of {report.n_segments})")
    return 0


def cmd_features(args: argparse.Namespace) -> int:
    segments_path = _require(args.segments)
    out = _outdir(args.out)
    manifest = build_manifest(include_aux=not args.no_aux)
    segments = dataio.read_segments(segments_path)
    matrix = pipeline.extract_matrix(segments, manifest)
    dataio.write_feature_matrix(out / "features.csv", list(matrix.names),
                                matrix.values, matrix.subject_ids,
                                [int(v) for v in matrix.labels])
    dataio.write_json(out / "feature_manifest.json", manifest.to_dict())
    print(f"wrote {matrix.values.shape[0]}x{matrix.values.shape[1]} matrix")
    return 0


def _load_matrix(path: Path) -> FeatureMatrix:
    names, values, subjects, labels = dataio.read_feature_matrix(path)
    return FeatureMatrix(values, tuple(names), subjects,
                         np.asarray(labels, dtype=np.int64))


def cmd_select(args: argparse.Namespace) -> int:
    features = _require(args.features)
    out = _outdir(args.out)
    cfg = _config_from_args(args)
    matrix = _load_matrix(features)
    result = pipeline.run_selection(matrix, cfg)
    dataio.write_json(out / "selection.json", result.to_dict())
    print(f"selected {len(result.selected)} features by consensus")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    features = _require(args.features)
    out = _outdir(args.out)
    cfg = _config_from_args(args)
    matrix = _load_matrix(features)
    if args.selection:
        selected = dataio.read_json(_require(args.selection))["selected"]
        matrix = matrix.subset(selected)
    model = train_svm(matrix.values, matrix.labels, cfg.final_c,
                      cfg.final_gamma, matrix.names,
                      manifest_hash=matrix.manifest_hash)
    dataio.write_json(out / "model.json", model.to_dict())
    print(f"trained rbf svm (c={cfg.final_c}, gamma={cfg.final_gamma}) "
          f"on {matrix.values.shape[0]} rows")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    features = _require(args.features)
    out = _outdir(args.out)
    cfg = _config_from_args(args)
    matrix = _load_matrix(features)
    selected = list(matrix.names)
    if args.selection:
        selected = dataio.read_json(_require(args.selection))["selected"]
    report, model = pipeline.evaluate_loso(matrix, selected, cfg)
    dataio.write_json(out / "loso_report.json", report.to_dict())
    dataio.write_json(out / "model.json", model.to_dict())
    print(f"loso accuracy {report.mean_accuracy:.4f} "
          f"+/- {report.std_accuracy:.4f} "
          f"(modal c={report.modal_c}, gamma={report.modal_gamma})")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    features = _require(args.features)
    selection = _require(args.selection)
    out = _outdir(args.out)
    cfg = _config_from_args(args)
    matrix = _load_matrix(features)
    selected = dataio.read_json(selection)["selected"]
    rows = pipeline.run_ablation(matrix, selected, cfg)
    dataio.write_json(out / "ablation.json", rows)
    for row in rows:
        print(f"{row['name']:>16}: {row['mean_accuracy']:.4f} "
              f"+/- {row['std_accuracy']:.4f} ({row['n_features']} features)")
    return 0


def cmd_stream(args: argparse.Namespace) -> int:
    model_path = _require(args.model)
    manifest_path = _require(args.feature_manifest)
    cfg = _config_from_args(args)
    model = SvmModel.from_dict(dataio.read_json(model_path))
    manifest = FeatureManifest.from_dict(dataio.read_json(manifest_path))
    if manifest.hash != model.manifest_hash and model.manifest_hash:
        print("feature manifest does not match the model", file=sys.stderr)
        return 1
    manifest = FeatureManifest(model.feature_names, manifest.level,
                               manifest.include_aux, manifest.wavelet,
                               manifest.version)

    if args.dataset:
        records = dataio.read_records(_require(args.dataset))
        source = ReplaySource(records)
    else:
        source = PhaseSource(GeneratorConfig(seed=args.seed,
                                             score_mode=args.score_mode))
    engine = StreamEngine(model, manifest, cfg.policy(), cfg.segmentation(),
                          sample_rate=source.sample_rate,
                          base_seed=cfg.base_seed)

    if args.serve:
        import uvicorn

        from .serve import create_app
        app = create_app(engine, source, rate=args.rate,
                         static_dir=args.static_dir)
        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    out = _outdir(args.out)
    events_path = out / "events.jsonl"
    events_path.unlink(missing_ok=True)
    events = engine.run_from_source(source, max_events=args.max_events)
    for event in events:
        dataio.append_jsonl(events_path, event.to_dict())
    summary = session_summary(engine.events, engine.policy,
                              engine.segmentation, engine.sample_rate)
    dataio.write_json(out / "summary.json", summary)
    print(f"{summary['n_classified']} classified, "
          f"{summary['n_warnings']} warnings, "
          f"{summary['n_alerts']} alerts")
    return 0


def cmd_pilot_report(args: argparse.Namespace) -> int:
    scores_path = _require(args.scores)
    scores = dataio.read_json(scores_path)
    report = pilot_report(np.asarray(scores["pre"], dtype=np.float64),
                          np.asarray(scores["post"], dtype=np.float64))
    if args.out:
        dataio.write_json(args.out, report)
    print(f"t={report['t']:.4f} p={report['p']:.4f} "
          f"mean improvement {report['mean_improvement']:.4f}")
    return 0


def _add_segmentation_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--segment-len", dest="segment_len", type=int, default=None)
    p.add_argument("--overlap", dest="overlap", type=float, default=None)
    p.add_argument("--trim", dest="trim", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eegmon",
        description="attention monitoring: synthesis, training, streaming")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a labeled dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=int, default=20)
    p.add_argument("--blocks-per-class", dest="blocks_per_class", type=int,
                   default=2)
    p.add_argument("--block-len", dest="block_len", type=int, default=7500)
    p.add_argument("--contrast", type=float, default=3.0)
    p.add_argument("--blink-rate", dest="blink_rate", type=float, default=0.12)
    p.add_argument("--noise-uv", dest="noise_uv", type=float, default=2.0)
    p.add_argument("--score-mode", dest="score_mode", default="surrogate",
                   choices=["surrogate", "planted", "noise"])
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("preprocess", help="segment, filter, clean, balance")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-deblink", action="store_true")
    _add_segmentation_flags(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("features", help="extract the feature matrix")
    p.add_argument("--segments", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-aux", action="store_true",
                   help="exclude headset score channels")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("select", help="correlation prune + per-subject RFE")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pearson-threshold", dest="pearson_threshold",
                   type=float, default=None)
    p.add_argument("--target", dest="rfe_target", type=int, default=None)
    p.add_argument("--consensus", dest="consensus_fraction", type=float,
                   default=None)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("train", help="fit one SVM with a fixed (C, gamma)")
    p.add_argument("--features", required=True)
    p.add_argument("--selection", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--c", dest="final_c", type=float, default=None)
    p.add_argument("--gamma", dest="final_gamma", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="leave-one-subject-out grid search")
    p.add_argument("--features", required=True)
    p.add_argument("--selection", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="score baselines vs full selection")
    p.add_argument("--features", required=True)
    p.add_argument("--selection", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("stream", help="run the online engine")
    p.add_argument("--model", required=True)
    p.add_argument("--feature-manifest", dest="feature_manifest",
                   required=True)
    p.add_argument("--dataset", default=None,
                   help="replay this recording; default synthesizes live")
    p.add_argument("--out", default="stream_out")
    p.add_argument("--max-events", dest="max_events", type=int, default=None)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--score-mode", dest="score_mode", default="surrogate",
                   choices=["surrogate", "planted", "noise"])
    p.add_argument("--consecutive", dest="consecutive_required", type=int,
                   default=None)
    p.add_argument("--cooldown", dest="cooldown_events", type=int,
                   default=None)
    p.add_argument("--min-duration", dest="min_duration_s", type=float,
                   default=None)
    p.add_argument("--duration-convention", dest="duration_convention",
                   choices=["steps", "span"], default=None)
    p.add_argument("--serve", action="store_true")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--rate", type=float, default=1.0,
                   help="playback speed multiple; 0 = as fast as possible")
    p.add_argument("--static-dir", dest="static_dir", default=None)
    _add_segmentation_flags(p)
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("pilot-report", help="paired pre/post comparison")
    p.add_argument("--scores", required=True,
                   help='JSON file with "pre" and "post" arrays')
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_pilot_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EegmonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
