"""Command-line entry point: ``pvred <command> [flags]``.

Exit codes: 0 success, 1 runtime or check failure, 2 usage error.
Every command accepts ``--config FILE`` with flat ``key = value`` lines whose
keys are the command's long flag names (dashes or underscores); flags given on
the command line win over the file.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__, backend_name
from . import data as dm
from . import evaluation as ev
from . import gradcheck as gc
from . import model as mdl
from ._io import atomic_write_text
from .errors import InvalidInputError, ParseError, PvredError, TrainingDivergenceError

log = logging.getLogger("pvred")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _csv_floats(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _bool(text):
    t = str(text).strip().lower()
    if t in {"1", "true", "yes", "on"}:
        return True
    if t in {"0", "false", "no", "off"}:
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# ---------------------------------------------------------------------------
# config file
# ---------------------------------------------------------------------------

def read_config(path):
    """Parse flat ``key = value`` text; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}: expected 'key = value'", line=lineno)
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def apply_config(parser, config):
    """Validate config keys against ``parser``'s flags and install them as defaults."""
    actions = {a.dest: a for a in parser._actions if a.option_strings and a.dest not in ("help", "config")}
    unknown = sorted(set(config) - set(actions))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    defaults = {}
    for key, value in config.items():
        action = actions[key]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            flag = _bool(value)
            defaults[key] = flag if isinstance(action, argparse._StoreTrueAction) else not flag
        elif action.type is not None:
            try:
                defaults[key] = action.type(value)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {key}: {exc}") from None
        else:
            defaults[key] = value
        if action.choices is not None and defaults[key] not in action.choices:
            raise UsageError(f"config key {key}: {defaults[key]!r} not in {list(action.choices)}")
    parser.set_defaults(**defaults)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _common(p, out_help):
    p.add_argument("--config", help="key = value file with defaults for these flags")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", default=None, help=out_help)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="pvred", description="Position-velocity recurrent encoder-decoder for pose prediction.")
    parser.add_argument("--version", action="version", version=f"pvred {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    g = sub.add_parser("gen-data", help="write a synthetic train/test dataset", formatter_class=fmt)
    _common(g, "dataset directory")
    spec = dm.SynthSpec()
    g.set_defaults(seed=spec.seed, out="data")
    g.add_argument("--num-train", type=int, default=20, help="training sequences")
    g.add_argument("--num-test", type=int, default=4, help="test sequences")
    g.add_argument("--frames", type=int, default=spec.frames, help="frames per sequence")
    g.add_argument("--joints", type=int, default=spec.joints, help="joints (3 channels each)")
    g.add_argument("--fps", type=float, default=spec.fps, help="frame rate")
    g.add_argument("--num-actions", type=int, default=spec.num_actions, help="distinct synthetic actions")
    g.add_argument("--periodic-actions", type=int, default=spec.periodic_actions, help="actions without drift")
    g.add_argument("--harmonics", type=int, default=spec.harmonics, help="sinusoids per channel")
    g.add_argument("--amp-min", type=float, default=spec.amp_range[0], help="smallest amplitude (rad)")
    g.add_argument("--amp-max", type=float, default=spec.amp_range[1], help="largest amplitude (rad)")
    g.add_argument("--freq-min", type=float, default=spec.freq_range[0], help="lowest frequency (Hz)")
    g.add_argument("--freq-max", type=float, default=spec.freq_range[1], help="highest frequency (Hz)")
    g.add_argument("--offset-max", type=float, default=spec.offset_range[1], help="largest constant offset (rad)")
    g.add_argument("--drift", type=float, default=spec.drift, help="largest drift rate (rad/s)")
    g.add_argument("--jitter", type=float, default=spec.jitter, help="relative per-sequence parameter jitter")
    g.add_argument("--noise", type=float, default=spec.noise, help="gaussian noise std (rad)")
    g.set_defaults(func=cmd_gen_data)

    mc = mdl.ModelConfig()
    tc = mdl.TrainConfig()
    t = sub.add_parser("train", help="train a model on a dataset directory", formatter_class=fmt)
    _common(t, "model file")
    t.set_defaults(out="model.json")
    t.add_argument("--data", default="data", help="dataset directory from gen-data")
    t.add_argument("--loss-csv", default=None, help="per-iteration loss CSV; unset means <out>.loss.csv")
    t.add_argument("--report", default=None, help="optional JSON run report")
    t.add_argument("--iters", type=int, default=tc.iterations, help="training iterations")
    t.add_argument("--batch", type=int, default=tc.batch_size, help="clips per mini-batch")
    t.add_argument("--lr", type=float, default=tc.lr, help="Adam learning rate")
    t.add_argument("--clip-norm", type=float, default=tc.clip_norm, help="global gradient-norm clip (0 disables)")
    t.add_argument("--hidden", type=int, default=mc.hidden, help="hidden units")
    t.add_argument("--n", type=int, default=mc.n, help="observed frames")
    t.add_argument("--m", type=int, default=mc.m, help="predicted frames")
    t.add_argument("--pos-dim", type=int, default=None, help="position-embedding size; unset means the pose size")
    t.add_argument("--dropout", type=float, default=mc.dropout, help="dropout rate ahead of the regression layer")
    t.add_argument("--variant", choices=mdl.VARIANTS, default=mc.variant, help="decoder family")
    t.add_argument("--no-vel", action="store_true", help="drop the velocity input")
    t.add_argument("--no-pos", action="store_true", help="drop the position-embedding input")
    t.add_argument("--no-qt", action="store_true", help="train on exp-map L2 instead of quaternion L1")
    t.add_argument("--no-bias", action="store_true", help="drop all bias terms")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="mean Euler error at fixed horizons", formatter_class=fmt)
    _common(e, "horizon table CSV; unset means stdout")
    e.add_argument("--model", default="model.json", help="model file (for --predictor model)")
    e.add_argument("--data", default="data", help="dataset directory")
    e.add_argument("--predictor", choices=("model", "zero-velocity", "moving-average"), default="model")
    e.add_argument("--baselines", action="store_true", help="also score zero-velocity and moving-average")
    e.add_argument("--horizons", type=_csv_floats, default=ev.DEFAULT_HORIZONS_MS, help="milliseconds")
    e.add_argument("--clips", type=int, default=8, help="seed clips to average over")
    e.add_argument("--n", type=int, default=None, help="observed frames; unset means the model's n")
    e.add_argument("--m", type=int, default=None, help="predicted frames; unset means the model's m")
    e.add_argument("--window", type=int, default=2, help="moving-average window")
    e.set_defaults(func=cmd_evaluate)

    pr = sub.add_parser("predict", help="extend a sequence file with predicted frames", formatter_class=fmt)
    _common(pr, "predicted sequence file")
    pr.set_defaults(out="prediction.csv")
    pr.add_argument("--model", default="model.json", help="model file")
    pr.add_argument("--input", required=True, help="sequence file; its last n frames seed the prediction")
    pr.add_argument("--frames", type=int, default=None, help="frames to predict; unset means the model's m")
    pr.set_defaults(func=cmd_predict)

    gk = sub.add_parser("gradcheck", help="finite-difference checks of every gradient", formatter_class=fmt)
    _common(gk, "optional report file")
    gk.add_argument("--tol", type=float, default=1e-4, help="end-to-end relative tolerance")
    gk.add_argument("--unit-tol", type=float, default=1e-6, help="cell and Jacobian relative tolerance")
    gk.add_argument("--corrupt-jacobian", action="store_true", help="debug: inject a faulty quaternion Jacobian")
    gk.set_defaults(func=cmd_gradcheck)

    ep = sub.add_parser("emit-plot", help="merge horizon/loss CSVs into long format", formatter_class=fmt)
    _common(ep, "long-format CSV; unset means stdout")
    ep.add_argument("inputs", nargs="+", help="CSV files, optionally as label=path")
    ep.set_defaults(func=cmd_emit_plot)
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sub = parser._subparsers._group_actions[0].choices[args.command]
        try:
            config = read_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        except ParseError as exc:
            raise UsageError(str(exc)) from None
        apply_config(sub, config)
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _write_or_print(path, text):
    if path:
        atomic_write_text(path, text)
    else:
        sys.stdout.write(text)


def cmd_gen_data(args):
    spec = dm.SynthSpec(
        num_sequences=args.num_train + args.num_test,
        frames=args.frames,
        joints=args.joints,
        fps=args.fps,
        num_actions=args.num_actions,
        periodic_actions=args.periodic_actions,
        harmonics=args.harmonics,
        amp_range=(args.amp_min, args.amp_max),
        freq_range=(args.freq_min, args.freq_max),
        offset_range=(-args.offset_max, args.offset_max),
        drift=args.drift,
        jitter=args.jitter,
        noise=args.noise,
        seed=args.seed,
    )
    try:
        spec.validate()
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None
    seqs = dm.generate_synthetic(spec)
    files = {"train": [], "test": []}
    for i, seq in enumerate(seqs):
        split = "train" if i < args.num_train else "test"
        idx = i if split == "train" else i - args.num_train
        rel = f"{split}/seq_{idx:03d}.csv"
        dm.save_sequence(seq, os.path.join(args.out, rel))
        files[split].append(rel)
    manifest = {"tool_version": __version__, "spec": spec.to_dict(), **files}
    text = json.dumps(manifest, indent=2) + "\n"
    atomic_write_text(os.path.join(args.out, "manifest.json"), text)
    sys.stdout.write(text)
    return EXIT_OK


def load_split(directory, split):
    manifest_path = os.path.join(directory, "manifest.json")
    if os.path.exists(manifest_path):
        with open(manifest_path, encoding="utf-8") as fh:
            names = json.load(fh)[split]
    else:
        sub = os.path.join(directory, split)
        names = [os.path.join(split, f) for f in sorted(os.listdir(sub)) if f.endswith(".csv")]
    if not names:
        raise InvalidInputError(f"no {split} sequences in {directory}")
    return [dm.load_sequence(os.path.join(directory, name)) for name in names]


def _model_config_from_args(args, pose_dim, fps):
    return mdl.ModelConfig(
        pose_dim=pose_dim,
        hidden=args.hidden,
        n=args.n,
        m=args.m,
        pos_dim=args.pos_dim,
        use_velocity=not args.no_vel,
        use_position=not args.no_pos,
        use_qt=not args.no_qt,
        use_bias=not args.no_bias,
        variant=args.variant,
        dropout=args.dropout,
        fps=fps,
    )


def cmd_train(args):
    train_set = load_split(args.data, "train")
    try:
        mc = _model_config_from_args(args, train_set[0].D, train_set[0].fps)
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None
    cfg = mdl.TrainConfig(model=mc, iterations=args.iters, batch_size=args.batch, lr=args.lr,
                          clip_norm=args.clip_norm, seed=args.seed)
    params = mdl.init_model(mc, args.seed)
    loss_path = args.loss_csv or os.path.splitext(args.out)[0] + ".loss.csv"

    def progress(it, loss):
        if it % 100 == 0:
            log.info("iteration %d loss %.6f", it, loss)

    started = time.perf_counter()
    params, history = mdl.train(params, train_set, cfg, callback=progress)
    wall = time.perf_counter() - started
    meta = {"seed": args.seed, "iterations": cfg.iterations, "batch_size": cfg.batch_size, "lr": cfg.lr,
            "clip_norm": cfg.clip_norm}
    mdl.save_model(args.out, params, mc, meta)
    atomic_write_text(loss_path, format_loss_csv(history))
    if args.report:
        report = {"tool_version": __version__, "backend": backend_name(), "wall_clock_s": wall,
                  "config": vars_for_report(args), "final_loss": history[-1] if history else None,
                  "loss_history": history, "horizon_tables": _report_tables(args.data, params, mc, args.seed)}
        atomic_write_text(args.report, json.dumps(report, indent=1) + "\n")
    print(f"trained {cfg.iterations} iterations in {wall:.1f}s; model -> {args.out}; losses -> {loss_path}")
    return EXIT_OK


def _report_tables(directory, params, mc, seed):
    """Model and baseline horizon tables on the test split, when there is one."""
    try:
        test_set = load_split(directory, "test")
    except (OSError, KeyError, PvredError):
        return {}
    horizons = [h for h in ev.DEFAULT_HORIZONS_MS if ev.horizon_frame(h, mc.fps) <= mc.m]
    predictors = {"model": lambda X, k: mdl.predict(params, X, mc, k), "zero-velocity": ev.zero_velocity_predict}
    return {name: ev.evaluate(f, test_set, mc.n, mc.m, horizons, seed=seed).errors for name, f in predictors.items()}


def vars_for_report(args):
    return {k: v for k, v in vars(args).items() if k != "func"}


def format_loss_csv(history):
    lines = ["iteration,loss"] + [f"{i},{loss!r}" for i, loss in enumerate(history, start=1)]
    return "\n".join(lines) + "\n"


def cmd_evaluate(args):
    test_set = load_split(args.data, "test")
    fps = test_set[0].fps
    predictors = {}
    n, m = args.n, args.m
    if args.predictor == "model":
        params, mc, _ = mdl.load_model(args.model)
        n = mc.n if n is None else n
        m = mc.m if m is None else m
        predictors["model"] = lambda X, k: mdl.predict(params, X, mc, k)
    n = 50 if n is None else n
    m = 25 if m is None else m
    if args.predictor == "zero-velocity" or args.baselines:
        predictors["zero-velocity"] = ev.zero_velocity_predict
    if args.predictor == "moving-average" or args.baselines:
        predictors["moving-average"] = lambda X, k: ev.moving_average_predict(X, k, args.window)

    tables = {name: ev.evaluate(f, test_set, n, m, args.horizons, args.clips, args.seed)
              for name, f in predictors.items()}
    if len(tables) == 1:
        text = next(iter(tables.values())).to_csv()
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["predictor", *ev.TABLE_HEADER])
        for name, table in tables.items():
            for h, err in table.errors.items():
                w.writerow([name, ev._fmt_num(h), repr(err), table.clips])
        text = buf.getvalue()
    _write_or_print(args.out, text)
    return EXIT_OK


def cmd_predict(args):
    params, mc, _ = mdl.load_model(args.model)
    seq = dm.load_sequence(args.input)
    if seq.T < mc.n:
        raise PvredError(f"input has {seq.T} frames, the model needs at least n={mc.n}")
    frames = mc.m if args.frames is None else args.frames
    if frames < 1:
        raise UsageError("--frames must be >= 1")
    Y = mdl.predict(params, seq.frames[-mc.n:], mc, frames)
    dm.save_sequence(dm.MotionSequence(Y, seq.fps, seq.channel_names), args.out)
    print(f"wrote {frames} frames to {args.out}")
    return EXIT_OK


def cmd_gradcheck(args):
    results = gc.run_all(seed=args.seed, tol=args.tol, unit_tol=args.unit_tol,
                         corrupt_jacobian=args.corrupt_jacobian)
    text = "\n".join(r.line() for r in results) + "\n"
    failed = [r.name for r in results if not r.ok]
    text += f"{len(results) - len(failed)}/{len(results)} checks passed\n"
    if failed:
        text += "failed: " + ", ".join(failed) + "\n"
    sys.stdout.write(text)
    if args.out:
        atomic_write_text(args.out, text)
    return EXIT_FAIL if failed else EXIT_OK


def _read_long_rows(label, path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file", line=1)
    header = [c.strip() for c in rows[0]]
    known = (list(ev.TABLE_HEADER), ["iteration", "loss"], ["predictor", *ev.TABLE_HEADER])
    if header not in known:
        raise ParseError(f"{path}: unrecognised header {','.join(header)}", line=1)
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}: expected {len(header)} fields", line=lineno)
        rec = dict(zip(header, row))
        try:
            if header == list(ev.TABLE_HEADER):
                out.append((label, ev._parse_num(rec["horizon_ms"]), float(rec["mean_error"])))
            elif header == ["iteration", "loss"]:
                out.append((label, int(rec["iteration"]), float(rec["loss"])))
            else:
                out.append((f"{label}:{rec['predictor']}", ev._parse_num(rec["horizon_ms"]),
                            float(rec["mean_error"])))
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}", line=lineno) from None
    return out


def cmd_emit_plot(args):
    rows = []
    for item in args.inputs:
        label, sep, path = item.partition("=")
        if not sep:
            label, path = os.path.splitext(os.path.basename(item))[0], item
        rows += _read_long_rows(label, path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["series", "horizon_ms", "value"])
    for series, x, value in rows:
        w.writerow([series, x, repr(value)])
    _write_or_print(args.out, buf.getvalue())
    return EXIT_OK


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (PvredError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
