"""Command-line entry point: ``tinycrnn <subcommand> ...``.

Exit status is 0 on success, 1 for usage errors and 2 for bad data or
model files. Every random choice comes from ``--seed``, so repeating a
command reproduces its output files byte for byte.
"""

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evaluation as ev
from .errors import TinyCrnnError
from .features import LfbeConfig, delta_lfbe, lfbe, read_pcm
from .formats import is_feature_file, read_features, read_manifest, write_dataset, write_features
from .nn import (REFERENCE_CONFIGS, ModelConfig, fold_batchnorm, frames_per_step, load_model,
                 profile, receptive_field, save_model, temporal_specs)
from .streaming import StreamState, detect, peak_scores, window_posteriors
from .train import SyntheticSpec, TrainConfig, gen_synthetic, train_loop


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _on_off(value):
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return value == "on"


def _config_args(p, required=True):
    p.add_argument("--config", required=required,
                   help=f"reference name ({', '.join(REFERENCE_CONFIGS)}) or a JSON config file")
    p.add_argument("--bins", type=int, choices=(20, 64))
    p.add_argument("--attention", type=_on_off, metavar="{on,off}")
    p.add_argument("--divisor", choices=("dk", "sqrt-dk"))
    p.add_argument("--delta-lfbe", type=_on_off, metavar="{on,off}")


def build_parser():
    parser = _Parser(prog="tinycrnn", description="Small-footprint wakeword CRNN toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("featurize", help="PCM file -> LFBE feature file")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bins", type=int, choices=(20, 64), default=64)
    p.add_argument("--delta-lfbe", type=_on_off, default=False, metavar="{on,off}")
    p.add_argument("--pcm-format", choices=("s16le", "f32le"), default="s16le")

    p = sub.add_parser("synth", help="write a synthetic chirp-in-noise dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--bins", type=int, choices=(20, 64), default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-pos", type=int, default=256)
    p.add_argument("--n-neg", type=int, default=256)
    p.add_argument("--frames", type=int, default=100)

    p = sub.add_parser("train", help="train a model on a dataset manifest")
    _config_args(p, required=False)
    p.add_argument("--in", dest="inp", required=True, help="manifest file or dataset directory")
    p.add_argument("--out", required=True, help="model file; history goes to <out>.history.csv")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--eval-every", type=int, default=100)

    p = sub.add_parser("eval", help="DET curve, FA at MR15, endpoints and latency")
    p.add_argument("--model", action="append", required=True, help="repeat to compare models")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threshold", type=float, help="detection threshold for endpoint stats "
                   "(default: the FA@MR15 operating point)")
    p.add_argument("--target-mr", type=float, default=0.15)
    p.add_argument("--baseline-ms", type=float, default=50.0)

    p = sub.add_parser("stream", help="stream a PCM or feature file through a model")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--runtime", choices=("bank", "vectorized"), default="bank")
    p.add_argument("--pcm-format", choices=("s16le", "f32le"), default="s16le")
    p.add_argument("--hangover", type=int, default=3)

    for name, text in (("profile", "parameter and multiply table"),
                       ("rf", "receptive field and time steps")):
        p = sub.add_parser(name, help=text)
        _config_args(p)
    return parser


def resolve_config(args, default=None):
    name = getattr(args, "config", None) or default
    if name in REFERENCE_CONFIGS:
        cfg = REFERENCE_CONFIGS[name]()
    else:
        try:
            cfg = ModelConfig.from_dict(json.loads(Path(name).read_text()))
        except OSError as exc:
            raise DataError(f"--config {name}: {exc.strerror}") from None
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"--config {name}: invalid config ({exc})") from None
    if getattr(args, "bins", None):
        cfg = cfg.with_bins(args.bins)
    if getattr(args, "attention", None) is False:
        cfg = cfg.without_attention()
    if getattr(args, "divisor", None):
        cfg = cfg.with_divisor(args.divisor)
    if getattr(args, "delta_lfbe", None):
        cfg = cfg.with_delta()
    return cfg


def _require(path, flag):
    if not os.path.exists(path):
        raise DataError(f"{flag} {path}: no such file or directory")


def _writer(path):
    if path is None:
        return sys.stdout
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline="\n")


def cmd_featurize(args, out):
    _require(args.inp, "--in")
    cfg = LfbeConfig(n_mels=args.bins)
    feats = lfbe(read_pcm(args.inp, args.pcm_format), cfg)
    if args.delta_lfbe:
        feats = delta_lfbe(feats)
    write_features(args.out, feats)
    print(f"wrote {args.out}: {feats.shape[0]} frames x {feats.shape[1]} bins", file=out)


def cmd_synth(args, out):
    spec = SyntheticSpec.for_bins(args.bins, n_pos=args.n_pos, n_neg=args.n_neg,
                                  n_frames=args.frames, seed=args.seed)
    manifest = write_dataset(args.out, gen_synthetic(spec))
    print(f"wrote {manifest}: {args.n_pos} positive, {args.n_neg} negative", file=out)


def _check_data(cfg, data, flag):
    got = data.feats.shape[1:]
    if got[1] != cfg.n_mels:
        raise DataError(f"{flag}: data has {got[1]} bins but the model expects {cfg.n_mels} "
                        "(see --bins)")
    if got[0] < cfg.frames:
        raise DataError(f"{flag}: examples have {got[0]} frames, the model window needs "
                        f"{cfg.frames}")


def cmd_train(args, out):
    _require(args.inp, "--in")
    cfg = resolve_config(args, default="crnn58k-ref")
    data = read_manifest(args.inp)
    _check_data(cfg, data, "--in")
    if data.feats.shape[1] != cfg.frames:
        raise DataError(f"--in: training needs exactly {cfg.frames}-frame examples, "
                        f"got {data.feats.shape[1]}")
    tcfg = TrainConfig(lr=args.lr, batch_size=args.batch_size, steps=args.steps,
                       seed=args.seed, eval_every=args.eval_every)
    weights, history = train_loop(cfg, tcfg, data)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_model(args.out, cfg, weights, seed=args.seed)
    Path(f"{args.out}.history.csv").write_text(history.to_csv())
    step, loss, acc = history.records[-1]
    print(f"trained {cfg.name}: step {step} loss {loss:.6g} acc {acc:.6g}", file=out)


def _endpoint_stats(cfg, weights, data, threshold):
    """Endpoints of each positive's best-overlapping detection, within that example."""
    k = frames_per_step(cfg)
    dets, refs = [], []
    positives = np.flatnonzero(data.labels == 1)
    for i in positives:
        posts = window_posteriors(cfg, weights, data.feats[i])
        found = detect(list(enumerate(posts)), threshold, hop_frames=k, window_frames=cfg.frames)
        ref = (int(data.starts[i]), int(data.ends[i]))
        _, best = ev.match_detections(found, [ref])[0]
        if best is not None:
            dets.append(best)
            refs.append(ref)
    if not refs:
        return None
    stats = ev.endpoint_deltas(dets, refs)
    return replace(stats, n_unmatched=len(positives) - stats.n_matched)


def cmd_eval(args, out):
    _require(args.inp, "--in")
    for m in args.model:
        _require(m, "--model")
    data = read_manifest(args.inp)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rows, records = [], []
    for idx, path in enumerate(args.model):
        cfg, weights, _ = load_model(path)
        _check_data(cfg, data, "--in")
        scores = peak_scores(cfg, weights, data.feats)
        curve = ev.det_curve(scores, data.labels)
        op = ev.fa_at_mr(curve, args.target_mr)
        if args.threshold is not None:
            threshold = args.threshold
        else:
            threshold = min(max(op.threshold, 1e-6), 1 - 1e-6)
        stats = _endpoint_stats(cfg, weights, data, threshold)
        stem = f"{idx}_{Path(path).stem}"
        (outdir / f"det_{stem}.csv").write_text(curve.to_csv())
        record = {"model": path, "config": cfg.name, **ev.summary(curve, stats, args.baseline_ms,
                                                                   args.target_mr)}
        record["endpoint_threshold"] = float(f"{threshold:.6g}")
        records.append(record)
        rows.append((f"{cfg.name}", op, curve.n_neg))
        line = f"{cfg.name}: FA@MR{args.target_mr * 100:.0f} = {op.false_detects}/{curve.n_neg}"
        if stats is not None:
            line += f", {ev.format_latency(ev.latency(stats, args.baseline_ms))}"
        print(line, file=out)
    (outdir / "summary.json").write_text(ev.summary_json(records))
    if len(rows) > 1:
        table = ev.ablation_table(rows)
        (outdir / "comparison.txt").write_text(table)
        print(table, end="", file=out)


def _stream_input(path, cfg, pcm_format):
    if is_feature_file(path):
        feats = read_features(path)
    else:
        feats = lfbe(read_pcm(path, pcm_format), LfbeConfig(n_mels=cfg.n_mels))
    if feats.shape[1] != cfg.n_mels:
        raise DataError(f"--in {path}: {feats.shape[1]} bins, model expects {cfg.n_mels}")
    return feats


def cmd_stream(args, out):
    _require(args.model, "--model")
    _require(args.inp, "--in")
    if not 0 < args.threshold < 1:
        raise UsageError("--threshold must lie strictly between 0 and 1")
    cfg, weights, _ = load_model(args.model)
    feats = _stream_input(args.inp, cfg, args.pcm_format)
    if cfg.has_batchnorm():
        cfg, weights = fold_batchnorm(cfg, weights)
    state = StreamState(cfg, weights, args.runtime)
    posts = state.push_frames(feats) + state.flush()
    dets = detect(posts, args.threshold, args.hangover, hop_frames=state.hop,
                  window_frames=cfg.frames)
    fh = _writer(args.out)
    try:
        for w, p in posts:
            fh.write(f"{w},{state.frame_of(w)},{p.p_wakeword:.6g}\n")
        for d in dets:
            fh.write(f"DET,{d.start_frame},{d.end_frame},{d.score:.6g}\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    if args.out is not None:
        print(f"{len(posts)} posteriors, {len(dets)} detections -> {args.out}", file=out)


def cmd_profile(args, out):
    cfg = resolve_config(args)
    fp = profile(cfg)
    print(f"{cfg.name}: {cfg.frames} frames x {cfg.n_mels} bins", file=out)
    print(fp.table(), file=out)


def cmd_rf(args, out):
    cfg = resolve_config(args)
    rf, steps = receptive_field(temporal_specs(cfg), cfg.frames)
    print(f"rf={rf} steps={steps}", file=out)


COMMANDS = {
    "featurize": cmd_featurize,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "stream": cmd_stream,
    "profile": cmd_profile,
    "rf": cmd_rf,
}


def run(argv=None, out=None):
    """Run one subcommand; returns the exit status instead of exiting."""
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"tinycrnn: usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, TinyCrnnError) as exc:
        print(f"tinycrnn: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        name = exc.filename if exc.filename is not None else ""
        print(f"tinycrnn: error: {name}: {exc.strerror}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    return 0


def main():
    sys.exit(run())
