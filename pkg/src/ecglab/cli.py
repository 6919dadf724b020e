"""Command line front end: synth, ingest, split, train, eval, report.

Every command reads and writes inside a working directory (``--out``) and
leaves a ``<command>_manifest.json`` describing the run. Settings resolve as
command-line flag > ``--config`` file > built-in default.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import __version__, cohort, labels, metrics, model, pipeline, synth
from .errors import EcgLabError

log = logging.getLogger("ecglab")

WINDOW_CHOICES = (3600, 1800, 900)
SUBSTREAMS = ("split", "sampling", "init", "shuffle", "bootstrap", "synth")


def _floats(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment; dashes in keys map to underscores."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise EcgLabError(f"{path}:{lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="root seed for every random stream")
    common.add_argument("--threads", type=int, default=1, help="worker threads for data preparation")
    common.add_argument("--out", type=Path, default=Path("."), help="working directory")
    common.add_argument("--config", type=Path, help="flat key = value settings file")
    common.add_argument("--data", type=Path, help="input directory (defaults to --out)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ecglab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ecglab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic cohort")
    s.add_argument("--visits", type=int, default=50)
    s.add_argument("--events-per-visit", type=int, default=2)
    s.add_argument("--recordings-per-visit", type=int, default=2)
    s.add_argument("--classes", type=int, default=8)
    s.add_argument("--effects", type=_floats, default=synth.SynthConfig.effect_sizes,
                   help="comma-separated effect size per class")
    s.add_argument("--noise", type=float, default=0.05)
    s.add_argument("--missing", type=float, default=0.2)

    s = sub.add_parser("ingest", parents=[common], help="validate inputs and encode events")
    s.add_argument("--manifest", type=Path)
    s.add_argument("--labs", type=Path)
    s.add_argument("--thresholds", type=Path)

    s = sub.add_parser("split", parents=[common], help="visit-level train/test split")
    s.add_argument("--ratio", type=cohort.parse_ratio, default=(4, 1))

    s = sub.add_parser("train", parents=[common], help="train the classifier")
    s.add_argument("--window", type=int, choices=WINDOW_CHOICES, default=3600)
    s.add_argument("--epochs", type=int, default=model.TrainConfig.epochs)
    s.add_argument("--batch-size", type=int, default=model.TrainConfig.batch_size)
    s.add_argument("--lr", type=float, default=model.TrainConfig.learning_rate)
    s.add_argument("--channels", type=_ints, default=model.ModelConfig.channels)

    s = sub.add_parser("eval", parents=[common], help="per-indicator evaluation")
    s.add_argument("--window", type=int, choices=WINDOW_CHOICES, action="append",
                   help="repeatable; default evaluates all three windows")
    s.add_argument("--max-test-segments", type=int, default=200)
    s.add_argument("--boot", type=int, default=metrics.N_BOOT)

    sub.add_parser("report", parents=[common], help="stratified CSV and Markdown report")
    return p


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        try:
            values = read_config(args.config)
        except (OSError, EcgLabError) as exc:
            parser.error(str(exc))
        sp = parser._subparsers._group_actions[0].choices[args.command]
        actions = {a.dest: a for a in sp._actions}
        defaults = {}
        for key, raw in values.items():
            if key not in actions or key in ("help", "config"):
                parser.error(f"{args.config}: unknown setting {key!r} for {args.command}")
            a = actions[key]
            try:
                defaults[key] = a.type(raw) if a.type else raw
            except (TypeError, ValueError) as exc:
                parser.error(f"{args.config}: bad value for {key}: {exc}")
        if "window" in defaults and args.command == "eval":
            defaults["window"] = [defaults["window"]]
        sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
    if args.data is None:
        args.data = args.out
    return args


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, tuple):
        return list(v)
    return v


def write_run_manifest(args, inputs, outputs, started):
    out = {
        "command": args.command,
        "artifact_version": __version__,
        "config": {k: _jsonable(v) for k, v in sorted(vars(args).items())},
        "seed": args.seed,
        "substreams": list(SUBSTREAMS),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    path = args.out / f"{args.command}_manifest.json"
    path.write_text(json.dumps(out, indent=2) + "\n")
    return path


def _inputs(args):
    d = args.data
    return {
        "manifest": getattr(args, "manifest", None) or d / "manifest.csv",
        "labs": getattr(args, "labs", None) or d / "labs.csv",
        "thresholds": getattr(args, "thresholds", None) or d / "thresholds.csv",
        "events": d / "events.csv",
        "split": d / "split.csv",
        "checkpoint": d / "checkpoint.ecgk",
    }


def _load(args, paths):
    return pipeline.load_dataset(paths["events"], paths["manifest"], paths["thresholds"])


def cmd_synth(args):
    cfg = synth.SynthConfig(
        n_visits=args.visits, events_per_visit=args.events_per_visit,
        recordings_per_visit=args.recordings_per_visit, n_classes=args.classes,
        effect_sizes=args.effects, noise_std=args.noise, missing_prob=args.missing,
        seed=args.seed)
    m = synth.generate_cohort(cfg, args.out, threads=args.threads)
    return [], m.files


def cmd_ingest(args):
    p = _inputs(args)
    ds = pipeline.ingest(p["manifest"], p["labs"], p["thresholds"])
    args.out.mkdir(parents=True, exist_ok=True)
    out = labels.write_events(ds.events, args.out / "events.csv")
    n_rec = sum(len(v) for v in ds.recordings.values())
    log.info("%d events, %d recordings, C=%d", len(ds.events), n_rec, ds.table.n_classes)
    return [p["manifest"], p["labs"], p["thresholds"]], [out]


def cmd_split(args):
    p = _inputs(args)
    ds = _load(args, p)
    split = cohort.split_by_visit(ds.visits, args.ratio, seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    outs = cohort.write_split(split, args.out / "split.csv",
                              {"ratio": f"{args.ratio[0]}:{args.ratio[1]}"})
    log.info("%d train / %d test visits", len(split.train_visits), len(split.test_visits))
    return [p["events"], p["manifest"]], list(outs)


def cmd_train(args):
    p = _inputs(args)
    ds = _load(args, p)
    split = cohort.read_split(p["split"])
    pairs = pipeline.train_pairs(ds, split, args.window, threads=args.threads)
    if not pairs:
        raise EcgLabError("no training segments fall inside the training window")
    mcfg = model.ModelConfig(n_classes=ds.table.n_classes, n_blocks=len(args.channels),
                             channels=args.channels,
                             strides=model.ModelConfig.strides[:len(args.channels)])
    tcfg = model.TrainConfig(batch_size=args.batch_size, learning_rate=args.lr,
                             epochs=args.epochs, seed=args.seed)
    log.info("training on %d segments", len(pairs))
    net, trace = model.train(pairs, mcfg, tcfg,
                             log=lambda e, l: log.info("epoch %d loss %.6f", e + 1, l))
    args.out.mkdir(parents=True, exist_ok=True)
    ck = model.save_checkpoint(args.out / "checkpoint.ecgk", net, tcfg,
                               {"optimizer": "adam", "window": args.window,
                                "n_train_segments": len(pairs)})
    trace_path = args.out / "loss_trace.csv"
    trace_path.write_text("epoch,mean_loss\n"
                          + "".join(f"{i + 1},{v:.10f}\n" for i, v in enumerate(trace)))
    return [p["events"], p["split"], p["thresholds"]], [ck, trace_path]


def cmd_eval(args):
    p = _inputs(args)
    ds = _load(args, p)
    split = cohort.read_split(p["split"])
    net, _ = model.load_checkpoint(p["checkpoint"])
    outs = []
    for w in args.window or WINDOW_CHOICES:
        pairs = pipeline.test_pairs(ds, split, w, max_n=args.max_test_segments, seed=args.seed,
                                    threads=args.threads)
        res = pipeline.evaluate(pairs, net, ds.table, w, n_boot=args.boot, seed=args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        outs.append(metrics.write_results_csv(res, args.out / f"eval_{w}.csv"))
        log.info("window %d s: %d test segments", w, len(pairs))
    return [p["events"], p["split"], p["checkpoint"]], outs


def cmd_report(args):
    files = sorted(args.data.glob("eval_*.csv"), key=lambda f: -int(f.stem.split("_")[1]))
    if not files:
        raise EcgLabError(f"{args.data}: no eval_*.csv files; run eval first")
    results = [r for f in files for r in metrics.read_results_csv(f)]
    args.out.mkdir(parents=True, exist_ok=True)
    csv_path = metrics.write_results_csv(results, args.out / "report.csv")
    parts = ["# Indicator report", ""]
    for f in files:
        w = int(f.stem.split("_")[1])
        parts.append(metrics.format_markdown([r for r in results if r.window == w],
                                             title=f"Window +/- {w} s"))
    md = args.out / "report.md"
    md.write_text("\n".join(parts))
    return files, [csv_path, md]


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "split": cmd_split,
            "train": cmd_train, "eval": cmd_eval, "report": cmd_report}


def main(argv=None):
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    try:
        inputs, outputs = COMMANDS[args.command](args)
        args.out.mkdir(parents=True, exist_ok=True)
        write_run_manifest(args, inputs, outputs, started)
    except (EcgLabError, OSError, ValueError) as exc:
        print(f"ecglab {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
