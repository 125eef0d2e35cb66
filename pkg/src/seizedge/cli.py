"""Command-line entry point wiring the modules into reproducible pipelines."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import data as D
from . import evaluation as E
from .cost import bench_inference, model_cost
from .errors import SeizedgeError
from .labels import PHASE_NAMES, Phase
from .models import build_family, infer_batch, load_weights, random_bundle, save_weights
from .quantizer import degradation_report, equalize_activation_range, quantize_model
from .stream import classify_recording, run_stream
from .trainer import TrainConfig, class_weights, train_model
from .wmv import EventKind, EventRecord, WmvParams, moving_average_detector


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SeizedgeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seizedge",
        description="Quantized edge-inference engine and evaluation pipeline for "
        "EEG seizure detection over recorded or synthetic signals.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic annotated recording")
    p.add_argument("--hours", type=float, required=True)
    p.add_argument("--seizures", type=int, required=True)
    p.add_argument("--channels", type=int, default=9)
    p.add_argument("--fs", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--signal", required=True, help="output raw int16 signal file")
    p.add_argument("--meta", required=True, help="output JSON meta file")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("rank", help="channel ranking by ictal line length")
    _recording_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", help="optional report file (name=value lines)")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("segment", help="extract labeled segments to an archive")
    _recording_args(p)
    p.add_argument("--k", type=int, help="use top-k ranked channels")
    p.add_argument("--channels", help="explicit comma-separated channel indices")
    p.add_argument("--seconds", type=float, required=True)
    p.add_argument("--interictal-clearance-h", type=float, default=2.0)
    p.add_argument("--interictal-count", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output segment archive")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", help="train a DNN or CNN on a segment archive")
    p.add_argument("--segments", required=True)
    p.add_argument("--family", choices=["dnn", "cnn"], required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON config file (train section)")
    p.add_argument("--out", required=True, help="output weight file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("quantize", help="quantize a float weight file to 8 bits")
    p.add_argument("--weights", required=True, help="input float weight file")
    p.add_argument("--out", required=True, help="output quantized weight file")
    p.add_argument("--segments", help="segment archive for the degradation report")
    p.add_argument("--equalize", action="store_true",
                   help="rescale activations onto the fixed-point range first "
                        "(needs --segments for calibration)")
    p.add_argument("--report", help="degradation report output file")
    p.add_argument("--plot", help="degradation figure output (PNG)")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("stream", help="replay a recording through a model + WMV")
    _recording_args(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--channels", help="comma-separated channel indices (default: first K)")
    p.add_argument("--stride", type=float, help="segment stride in seconds (default: segment length)")
    p.add_argument("--config", help="JSON config file (wmv section)")
    p.add_argument("--scores-csv", required=True)
    p.add_argument("--events-csv", required=True)
    p.add_argument("--plot", help="score timeline figure output (PNG)")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("eval", help="event metrics from an events CSV + annotations")
    p.add_argument("--events-csv", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--mode", choices=["detection", "prediction", "both"], default="both")
    p.add_argument("--out", help="optional report file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cv", help="stratified k-fold or LOOCV end-to-end")
    _recording_args(p)
    p.add_argument("--family", choices=["dnn", "cnn"], required=True)
    p.add_argument("--mode", choices=["kfold", "loocv"], default="kfold")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seconds", type=float, required=True)
    p.add_argument("--k", type=int, required=True, help="input channel count (ranked)")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--interictal-clearance-h", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config", help="JSON config file (train/wmv sections)")
    p.add_argument("--out", help="optional report file")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("cost", help="MAC and memory report for a model family")
    p.add_argument("--family", choices=["dnn", "cnn", "lstm"], required=True)
    p.add_argument("--fs", type=int, default=256)
    p.add_argument("--channels", type=int)
    p.add_argument("--seconds", type=float)
    p.add_argument("--precision", choices=["float32", "int16", "quantized"], default="quantized")
    p.add_argument("--out", help="optional report file")
    p.add_argument("--plot", help="per-layer MAC figure output (PNG)")
    p.set_defaults(func=cmd_cost)

    return parser


def _recording_args(p):
    p.add_argument("--signal", required=True, help="raw int16 signal file")
    p.add_argument("--meta", required=True, help="JSON meta file")


def _load_config(path):
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _wmv_params(cfg) -> WmvParams:
    return WmvParams(**cfg.get("wmv", {}))


def _emit(lines, out_path):
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    rec = D.synth_generate(
        seed=args.seed,
        hours=args.hours,
        seizure_count=args.seizures,
        channels=args.channels,
        fs=args.fs,
    )
    D.save_recording(rec, args.signal, args.meta)
    print(f"wrote {rec.n_channels}-channel recording, {rec.duration_s:.1f} s, "
          f"{len(rec.annotations)} seizures")
    return 0


def cmd_rank(args) -> int:
    rec = D.load_recording(args.signal, args.meta)
    ranked = D.rank_channels(rec, args.k)
    lines = [f"rank_{i}={ch}" for i, ch in enumerate(ranked)]
    _emit(lines, args.out)
    return 0


def _select_channels(args, rec) -> list:
    if getattr(args, "channels", None):
        return [int(c) for c in str(args.channels).split(",")]
    if getattr(args, "k", None):
        return D.rank_channels(rec, args.k)
    return None


def cmd_segment(args) -> int:
    rec = D.load_recording(args.signal, args.meta)
    channels = _select_channels(args, rec)
    if channels is None:
        raise ValueError("pass --k or --channels to select input channels")
    segments = D.extract_segments(
        rec,
        channels,
        args.seconds,
        interictal_clearance_h=args.interictal_clearance_h,
        interictal_count=args.interictal_count,
        seed=args.seed,
    )
    if not segments:
        raise ValueError("no segments extracted")
    D.save_segments(segments, rec.fs, args.out)
    counts = {name: sum(1 for s in segments if s.label == Phase.from_name(name)) for name in PHASE_NAMES}
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


def cmd_train(args) -> int:
    segments, fs = D.load_segments(args.segments)
    k, n = segments[0].data.shape
    spec = build_family(args.family.upper(), fs, k, n / fs)
    counts = [max(1, sum(1 for s in segments if s.label == p)) for p in Phase]
    cfg_file = _load_config(args.config).get("train", {})
    config = TrainConfig(
        learning_rate=cfg_file.get("learning_rate", args.learning_rate),
        epochs=cfg_file.get("epochs", args.epochs),
        batch_size=cfg_file.get("batch_size", args.batch_size),
        class_weights=tuple(cfg_file.get("class_weights", class_weights(counts))),
        rng_seed=cfg_file.get("rng_seed", args.seed),
    )
    bundle, loss_curve = train_model(spec, segments, config)
    save_weights(bundle, args.out)
    for epoch, loss in enumerate(loss_curve):
        print(f"epoch_{epoch}_loss={loss:.6f}")
    return 0


def cmd_quantize(args) -> int:
    bundle = load_weights(args.weights)
    segments = None
    if args.segments:
        segments, _fs = D.load_segments(args.segments)
    if args.equalize:
        if segments is None:
            raise ValueError("--equalize needs --segments for calibration")
        bundle = equalize_activation_range(bundle, segments)
    quant = quantize_model(bundle)
    save_weights(quant, args.out)
    if segments is not None:
        report = degradation_report(bundle, quant, segments)
        _emit(report.lines(), args.report)
        if args.plot:
            from .figures import plot_degradation

            plot_degradation(report, args.plot)
    return 0


def cmd_stream(args) -> int:
    rec = D.load_recording(args.signal, args.meta)
    bundle = load_weights(args.weights)
    channels = _select_channels(args, rec) or list(range(bundle.spec.channels))
    params = _wmv_params(_load_config(args.config))
    result = run_stream(bundle, rec, channels, params, stride_s=args.stride)

    event_at = {e.segment_index: e for e in result.events}
    with open(args.scores_csv, "w") as fh:
        fh.write("time_s,score_ictal,score_preictal,pred_label,event\n")
        for i, t in enumerate(result.starts_s):
            ev = event_at.get(i)
            fh.write(
                f"{t:.6f},{result.score_ictal[i]:.6f},{result.score_preictal[i]:.6f},"
                f"{result.preds[i].name.lower()},{ev.kind.value if ev else ''}\n"
            )
    with open(args.events_csv, "w") as fh:
        fh.write("kind,segment_index,time_s\n")
        for ev in result.events:
            fh.write(f"{ev.kind.value},{ev.segment_index},{ev.time_s:.6f}\n")
    if args.plot:
        from .figures import plot_stream_scores

        plot_stream_scores(
            result.starts_s,
            result.score_ictal,
            result.score_preictal,
            result.events,
            rec.annotations,
            args.plot,
            theta_i=params.theta_i,
            theta_p=params.theta_p,
        )
    print(f"segments={len(result.starts_s)} events={len(result.events)}")
    return 0


def read_events_csv(path):
    events = []
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("kind,"):
            raise ValueError(f"{path} is not an events CSV (bad field: kind)")
        for line in fh:
            kind, idx, t = line.strip().split(",")
            events.append(EventRecord(EventKind(kind), int(idx), float(t)))
    return events


def cmd_eval(args) -> int:
    events = read_events_csv(args.events_csv)
    with open(args.meta) as fh:
        meta = json.load(fh)
    seizures = [(a["start_s"], a["end_s"]) for a in meta["annotations"]]
    hours = meta["duration_samples"] / meta["fs"] / 3600.0
    lines = []
    if args.mode in ("detection", "both"):
        det = E.match_detections(events, seizures, hours)
        lines += [f"detection_{l}" for l in det.lines()]
    if args.mode in ("prediction", "both"):
        pre = E.match_predictions(events, seizures, hours)
        lines += [f"prediction_{l}" for l in pre.lines()]
    _emit(lines, args.out)
    return 0


def cmd_cost(args) -> int:
    spec = build_family(args.family.upper(), args.fs, args.channels, args.seconds)
    report = model_cost(spec, precision=args.precision)
    _emit(report.lines(args.precision), args.out)
    if args.plot:
        from .figures import plot_cost_report

        plot_cost_report(report, args.plot)
    return 0


# ---------------------------------------------------------------------------
# Cross validation


def _kfold_one(payload):
    spec_args, train_segments, val_segments, config = payload
    spec = build_family(*spec_args)
    bundle, _curve = train_model(spec, train_segments, config)
    logits = infer_batch(bundle, np.stack([s.data for s in val_segments]))
    preds = np.argmax(logits, axis=1)
    return [(Phase(int(p)), s.label) for p, s in zip(preds, val_segments)]


def cmd_cv(args) -> int:
    rec = D.load_recording(args.signal, args.meta)
    channels = D.rank_channels(rec, args.k)
    cfg = _load_config(args.config)
    cfg_train = cfg.get("train", {})
    lines = []
    if args.mode == "kfold":
        segments = D.extract_segments(
            rec, channels, args.seconds,
            interictal_clearance_h=args.interictal_clearance_h, seed=args.seed,
        )
        counts = [sum(1 for s in segments if s.label == p) for p in Phase]
        config = TrainConfig(
            epochs=cfg_train.get("epochs", args.epochs),
            class_weights=tuple(cfg_train.get("class_weights", class_weights(counts))),
            rng_seed=args.seed,
        )
        splits = E.stratified_kfold(segments, folds=args.folds, seed=args.seed)
        spec_args = (args.family.upper(), rec.fs, args.k, args.seconds)
        payloads = [(spec_args, tr, va, config) for tr, va in splits]
        if args.jobs > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                fold_pairs = list(pool.map(_kfold_one, payloads))
        else:
            fold_pairs = [_kfold_one(p) for p in payloads]
        all_pairs = [pair for fold in fold_pairs for pair in fold]
        metrics = E.segment_metrics(all_pairs)
        for f, fold in enumerate(fold_pairs):
            lines.append(f"fold_{f}_accuracy={E.segment_metrics(fold).accuracy:.6f}")
        lines += metrics.lines()
    else:
        lines += _cv_loocv(args, rec, channels, cfg)
    _emit(lines, args.out)
    return 0


def _cv_loocv(args, rec, channels, cfg):
    splits = E.loocv_splits(rec)
    params = _wmv_params(cfg)
    cfg_train = cfg.get("train", {})
    tp = fp = fn = 0
    lines = []
    for k, (train_secs, val_sec) in enumerate(splits):
        train_segments = []
        for lo, hi in train_secs:
            sub = _slice_recording(rec, lo, hi)
            train_segments += D.extract_segments(
                sub, channels, args.seconds,
                interictal_clearance_h=args.interictal_clearance_h, seed=args.seed,
            )
        counts = [max(1, sum(1 for s in train_segments if s.label == p)) for p in Phase]
        config = TrainConfig(
            epochs=cfg_train.get("epochs", args.epochs),
            class_weights=tuple(cfg_train.get("class_weights", class_weights(counts))),
            rng_seed=args.seed,
        )
        spec = build_family(args.family.upper(), rec.fs, args.k, args.seconds)
        bundle, _curve = train_model(spec, train_segments, config)
        sub = _slice_recording(rec, *val_sec)
        result = run_stream(bundle, sub, channels, params)
        hours = (val_sec[1] - val_sec[0]) / 3600.0
        det = E.match_detections(result.events, sub.annotations, hours)
        tp += det.tp
        fp += det.fp
        fn += det.fn
        lines.append(f"section_{k}_tp={det.tp} ")
    total = E.EventMetrics(tp=tp, fp=fp, fn=fn, hours=rec.duration_s / 3600.0)
    lines += [f"detection_{l}" for l in total.lines()]
    return lines


def _slice_recording(rec, lo_s: float, hi_s: float):
    lo = int(round(lo_s * rec.fs))
    hi = int(round(hi_s * rec.fs))
    annotations = [
        (s - lo_s, e - lo_s) for s, e in rec.annotations if s >= lo_s and e <= hi_s
    ]
    return D.Recording(
        fs=rec.fs,
        channel_names=rec.channel_names,
        samples=rec.samples[:, lo:hi],
        annotations=annotations,
    )


if __name__ == "__main__":
    sys.exit(main())
