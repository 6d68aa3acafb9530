"""Command-line pipeline: synth/ingest -> windows -> train -> eval/predict/report.

Every subcommand writes a ``manifest.txt`` (config snapshot, seeds, input
hashes) beside its outputs, and each stage's output directory is accepted
unmodified by the next stage. Exit codes: 0 success, 1 usage, 2 data/format
error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import evaluation, synthetic, tracks, training, windows
from .config import PipelineConfig, parse_config_file, resolve_config, write_manifest
from .errors import CheckpointError, ConfigError, EvaluationError, PipelineError
from .raster import compute_roi, render_preview


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; usage errors are 1
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_config_flag(p: _Parser) -> None:
    p.add_argument("--config", type=Path, default=None, help="flat key = value config file")


def _resolve(args, flag_keys: dict[str, str]) -> PipelineConfig:
    file_values = parse_config_file(args.config) if args.config else None
    flags = {}
    for attr, key in flag_keys.items():
        value = getattr(args, attr, None)
        if value is not None:
            flags[key] = str(value)
    return resolve_config(file_values, flags)


def build_parser() -> _Parser:
    parser = _Parser(prog="bevcast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic highway recording")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vehicles", type=int, default=8)
    p.add_argument("--lanes", type=int, default=3)
    p.add_argument("--duration", type=float, default=30.0)
    p.add_argument("--speed-min", type=float, default=8.0)
    p.add_argument("--speed-max", type=float, default=12.0)
    p.add_argument("--lane-change-prob", type=float, default=0.0)
    p.add_argument("--out", type=Path, required=True)
    _add_config_flag(p)

    p = sub.add_parser("ingest", help="validate and normalize a tracks recording")
    p.add_argument("--tracks", type=Path, required=True)
    p.add_argument("--meta", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_config_flag(p)

    p = sub.add_parser("windows", help="extract, split, and store window samples")
    p.add_argument("--in", dest="in_dir", type=Path, default=None,
                   help="directory with tracks.csv and recordingMeta.csv "
                        "(default: the configured data root)")
    p.add_argument("--out", type=Path, default=None, help="default: <in>/windows")
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--split-seed", type=int, default=None)
    p.add_argument("--previews", type=int, default=0,
                   help="render this many anchor-frame preview images")
    _add_config_flag(p)

    p = sub.add_parser("train", help="train the forecaster on stored windows")
    p.add_argument("--data", type=Path, default=None,
                   help="window root directory (default: <data root>/windows)")
    p.add_argument("--out", type=Path, default=None, help="default: <data>/run")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--precision", choices=("float32", "float64"), default=None)
    p.add_argument("--grad-clip", type=float, default=None)
    p.add_argument("--resume", type=Path, default=None, help="checkpoint to continue from")
    _add_config_flag(p)

    p = sub.add_parser("eval", help="RMSE per horizon on the test split")
    p.add_argument("--data", type=Path, default=None,
                   help="window root directory (default: <data root>/windows)")
    p.add_argument("--checkpoint", default=None, help="checkpoint path, or 'none'")
    p.add_argument("--baselines", default="cv,cp", help="comma list of cv,cp ('' for none)")
    p.add_argument("--split", choices=windows.SPLITS, default="test")
    p.add_argument("--out", type=Path, default=None, help="default: <data>/report")
    p.add_argument("--no-reference", action="store_true")
    _add_config_flag(p)

    p = sub.add_parser("predict", help="write Gaussian parameter sequences for a split")
    p.add_argument("--data", type=Path, default=None,
                   help="window root directory (default: <data root>/windows)")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", choices=windows.SPLITS, default="test")
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--out", type=Path, default=None, help="default: <data>/predictions")
    _add_config_flag(p)

    p = sub.add_parser("report", help="tables, RMSE figure, and trajectory overlays")
    p.add_argument("--data", type=Path, default=None,
                   help="window root directory (default: <data root>/windows)")
    p.add_argument("--checkpoint", default=None, help="checkpoint path, or 'none'")
    p.add_argument("--baselines", default="cv,cp")
    p.add_argument("--split", choices=windows.SPLITS, default="test")
    p.add_argument("--overlays", type=int, default=4)
    p.add_argument("--out", type=Path, default=None, help="default: <data>/report")
    p.add_argument("--no-reference", action="store_true")
    _add_config_flag(p)

    return parser


def _cmd_synth(args) -> int:
    cfg = _resolve(args, {})
    spec = synthetic.SceneSpec(
        seed=args.seed,
        n_vehicles=args.vehicles,
        n_lanes=args.lanes,
        duration=args.duration,
        speed_range=(args.speed_min, args.speed_max),
        lane_change_probability=args.lane_change_prob,
    )
    scene = synthetic.generate_scene(spec)
    tracks_path, meta_path = synthetic.write_scene(scene, args.out)
    write_manifest(
        args.out, "synth", cfg,
        extra={
            "seed": str(args.seed), "vehicles": str(args.vehicles),
            "lanes": str(args.lanes), "duration": repr(args.duration),
            "speed_min": repr(args.speed_min), "speed_max": repr(args.speed_max),
            "lane_change_prob": repr(args.lane_change_prob),
        },
    )
    print(f"wrote {tracks_path} and {meta_path} ({len(scene.tracks)} vehicles)")
    return 0


def _cmd_ingest(args) -> int:
    cfg = _resolve(args, {})
    parsed = tracks.parse_tracks(args.tracks)
    meta = tracks.parse_recording_meta(args.meta)
    kept = tracks.filter_direction(parsed)
    targets = tracks.select_target_vehicles(kept, meta)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tracks.write_tracks(kept, out / "tracks.csv")
    tracks.write_recording_meta(meta, out / "recordingMeta.csv")
    (out / "targets.txt").write_text("".join(f"{tid}\n" for tid in targets))
    write_manifest(out, "ingest", cfg,
                   inputs={"tracks": args.tracks, "meta": args.meta})
    print(f"kept {len(kept)} of {len(parsed)} tracks; {len(targets)} target vehicles")
    return 0


def _data_dir(args, cfg) -> Path:
    return args.data if args.data is not None else cfg.data_root / "windows"


def _load_recording(in_dir: Path):
    tracks_path = in_dir / "tracks.csv"
    meta_path = in_dir / "recordingMeta.csv"
    if not tracks_path.is_file() or not meta_path.is_file():
        raise ConfigError(f"{in_dir} must contain tracks.csv and recordingMeta.csv")
    return tracks.parse_tracks(tracks_path), tracks.parse_recording_meta(meta_path), tracks_path, meta_path


def _cmd_windows(args) -> int:
    cfg = _resolve(args, {"stride": "stride", "split_seed": "split_seed"})
    in_dir = args.in_dir if args.in_dir is not None else cfg.data_root
    all_tracks, meta, tracks_path, meta_path = _load_recording(in_dir)
    kept = tracks.filter_direction(all_tracks)
    targets = tracks.select_target_vehicles(kept, meta)
    corpus = windows.extract_corpus(kept, meta, targets, stride=cfg.stride)
    tagged = windows.split_dataset(corpus, seed=cfg.split_seed)
    out = args.out if args.out is not None else in_dir / "windows"
    n = windows.save_corpus(tagged, out)

    by_id = {tr.id: tr for tr in kept}
    for w in tagged[: max(args.previews, 0)]:
        states = {tr.id: tr.state_at(w.t) for tr in kept if tr.covers(w.t)}
        roi = compute_roi(by_id[w.tv_id].state_at(w.t), meta)
        render_preview(states, roi, w.tv_id, meta, seed=cfg.split_seed,
                       path=out / f"preview_{w.tv_id}_{w.t}.png")

    write_manifest(out, "windows", cfg,
                   inputs={"tracks": tracks_path, "meta": meta_path})
    counts = {s: sum(1 for w in tagged if w.split_tag == s) for s in windows.SPLITS}
    print(f"saved {n} windows to {out} "
          f"(train/test/eval = {counts['train']}/{counts['test']}/{counts['eval']})")
    return 0


def _cmd_train(args) -> int:
    cfg = _resolve(args, {
        "epochs": "epochs", "seed": "train_seed", "lr": "learning_rate",
        "batch_size": "batch_size", "precision": "precision", "grad_clip": "grad_clip",
    })
    data = _data_dir(args, cfg)
    train_windows = windows.load_split(data, "train")
    eval_windows = windows.load_split(data, "eval")
    resume = training.load_checkpoint(args.resume) if args.resume else None
    ckpt, records = training.train(cfg.train_config(), train_windows, eval_windows, resume=resume)

    out = args.out if args.out is not None else data / "run"
    out.mkdir(parents=True, exist_ok=True)
    training.save_checkpoint(ckpt, out / "checkpoint.bin")
    training.write_loss_log(records, out / "loss_log.csv")
    write_manifest(out, "train", cfg, inputs={"windows": data})
    if records:
        last = records[-1]
        ev = "n/a" if last["eval_nll"] is None else f"{last['eval_nll']:.6f}"
        print(f"epoch {last['epoch']}: train NLL {last['train_nll']:.6f}, eval NLL {ev}")
    print(f"saved checkpoint (best epoch {ckpt.epochs_completed}) and loss log to {out}")
    return 0


def _parse_baselines(raw: str) -> list[str]:
    names = [s.strip() for s in raw.split(",") if s.strip()]
    for name in names:
        if name not in ("cv", "cp"):
            raise ConfigError(f"unknown baseline {name!r}; choose from cv, cp")
    return names


def _model_predictions(checkpoint_arg, window_list):
    """(label, predictions) from a checkpoint path, or None for 'none'."""
    if checkpoint_arg in (None, "none"):
        return None
    path = Path(checkpoint_arg)
    if not path.is_file():
        raise CheckpointError(f"checkpoint {path} does not exist")
    ckpt = training.load_checkpoint(path)
    model = ckpt.build_model()
    return "model", training.forward_windows(model, window_list)


def _gather_reports(args, cfg):
    data = _data_dir(args, cfg)
    test_windows = windows.load_split(data, args.split)
    if not test_windows:
        raise EvaluationError(f"no {args.split!r} windows under {data}")
    reports: dict[str, evaluation.HorizonReport] = {}
    model_pred = _model_predictions(args.checkpoint, test_windows)
    predictions_by_row = {}
    if model_pred is not None:
        label, preds = model_pred
        truths = [w.future for w in test_windows]
        reports[label] = evaluation.rmse_per_horizon(preds, truths)
        predictions_by_row[label] = preds
    names = _parse_baselines(args.baselines)
    if names:
        reports.update(evaluation.baseline_reports(test_windows, names))
    if not reports:
        raise EvaluationError("nothing to evaluate: no checkpoint and no baselines selected")
    return test_windows, reports, predictions_by_row


def _cmd_eval(args) -> int:
    cfg = _resolve(args, {})
    test_windows, reports, _ = _gather_reports(args, cfg)
    out = args.out if args.out is not None else _data_dir(args, cfg) / "report"
    out.mkdir(parents=True, exist_ok=True)
    include_ref = cfg.include_reference and not args.no_reference
    evaluation.write_rmse_table(reports, out / "rmse_table.csv", include_ref)
    write_manifest(out, "eval", cfg, inputs=_eval_inputs(args, cfg))
    for name, rep in reports.items():
        joined = ", ".join(f"{s:g}s {r:.3f}" for s, r in zip(rep.horizons, rep.rmse))
        print(f"{name}: {joined} (n={rep.sample_count})")
    return 0


def _eval_inputs(args, cfg) -> dict[str, Path]:
    inputs = {"windows": _data_dir(args, cfg)}
    if args.checkpoint not in (None, "none"):
        inputs["checkpoint"] = Path(args.checkpoint)
    return inputs


def _cmd_predict(args) -> int:
    cfg = _resolve(args, {})
    data = _data_dir(args, cfg)
    window_list = windows.load_split(data, args.split)
    if not window_list:
        raise EvaluationError(f"no {args.split!r} windows under {data}")
    if args.limit is not None:
        window_list = window_list[: args.limit]
    _, preds = _model_predictions(args.checkpoint, window_list)
    out = args.out if args.out is not None else data / "predictions"
    out.mkdir(parents=True, exist_ok=True)
    lines = ["tv_id,t,step,mu_x,mu_y,sigma_x,sigma_y,rho"]
    for w, seq in zip(window_list, preds):
        for k in range(1, len(seq) + 1):
            g = seq.step(k)
            values = (g.mu_x, g.mu_y, g.sigma_x, g.sigma_y, g.rho)
            joined = ",".join(repr(float(v)) for v in values)
            lines.append(f"{w.tv_id},{w.t},{k},{joined}")
    (out / "predictions.csv").write_text("\n".join(lines) + "\n")
    write_manifest(out, "predict", cfg,
                   inputs={"windows": data, "checkpoint": Path(args.checkpoint)})
    print(f"wrote {len(window_list)} windows x {windows.FUTURE_STEPS} steps to {out / 'predictions.csv'}")
    return 0


def _cmd_report(args) -> int:
    cfg = _resolve(args, {})
    test_windows, reports, predictions_by_row = _gather_reports(args, cfg)
    out = args.out if args.out is not None else _data_dir(args, cfg) / "report"
    include_ref = cfg.include_reference and not args.no_reference

    model_preds = predictions_by_row.get("model")
    qualitative = []
    for i, w in enumerate(test_windows[: max(args.overlays, 0)]):
        qualitative.append((w, model_preds[i] if model_preds is not None else None))
    created = evaluation.render_report(reports, out, qualitative, include_ref)
    write_manifest(out, "report", cfg, inputs=_eval_inputs(args, cfg))
    for path in created:
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "ingest": _cmd_ingest,
    "windows": _cmd_windows,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "report": _cmd_report,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except PipelineError as exc:
        print(f"bevcast {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
