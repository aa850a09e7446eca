"""Command-line front end: ``lpmgh {synth,train,encode,eval}``.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import stiefel
from .dataset import MultiviewDataset, SplitSpec, load_dataset, split_indices, synth_multiview, write_features, write_labels
from .errors import ConfigError, DegenerateError, NumericError
from .experiment import evaluate_model
from .model_io import load_model, save_model, write_codes
from .retrieval import write_metrics, write_pr_csv
from .trainer import TrainConfig, encode, train


EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

MODEL_FILE = "model.json"
CODES_FILE = "codes.lpmb"
CONVERGENCE_FILE = "convergence.csv"
REPORT_FILE = "report.json"

# TrainConfig fields settable from flags or the config file
_TRAIN_KEYS = ("bits", "max_outer_iters", "rel_tol", "mu_init", "seed", "n_anchors", "anchor_s", "bandwidth", "kmeans_iters")
# flag/config name -> StiefelOptions field
_STIEFEL_KEYS = {"inner_iters": "max_iters", "grad_tol": "grad_tol"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(text: str) -> list[str]:
    return [t for t in text.split(",") if t]


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _resolve_threads(flag: int | None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("LPMGH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"LPMGH_THREADS must be an integer, got {env!r}") from None
    return 1


def _model_path(path: str) -> Path:
    p = Path(path)
    return p / MODEL_FILE if p.is_dir() or not p.suffix else p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lpmgh", description="Locality-preserving multiview graph hashing.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--threads", type=int, default=None, help="worker cap (env LPMGH_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic clustered multiview dataset")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--dims", type=_int_list, default=[8, 6], help="per-view dimensions, e.g. 8,6")
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("lpmv", "csv"), default="lpmv")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="learn a hash model")
    p.add_argument("--views", type=_csv_list, required=True, help="comma-separated feature files, one per view")
    p.add_argument("--labels", default=None)
    p.add_argument("--model", required=True, help="output directory for model, codes and convergence data")
    p.add_argument("--config", default=None, help="JSON file with training options")
    p.add_argument("--bits", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-outer-iters", "--max-iters", dest="max_outer_iters", type=int, default=None)
    p.add_argument("--rel-tol", type=float, default=None)
    p.add_argument("--mu-init", type=float, default=None)
    p.add_argument("--anchors", dest="n_anchors", type=int, default=None)
    p.add_argument("--anchor-s", type=int, default=None)
    p.add_argument("--bandwidth", default=None, help="'auto' or a positive number")
    p.add_argument("--kmeans-iters", type=int, default=None)
    p.add_argument("--inner-iters", type=int, default=None, help="Stiefel iterations per W-step")
    p.add_argument("--grad-tol", type=float, default=None)
    p.add_argument("--query-frac", type=float, default=None,
                   help="hold out this fraction as queries and train on the rest")

    p = sub.add_parser("encode", help="encode feature files with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--views", type=_csv_list, required=True)
    p.add_argument("--out", required=True, help="codes file to write")

    p = sub.add_parser("eval", help="retrieval MAP and precision-recall on a query split")
    p.add_argument("--model", required=True)
    p.add_argument("--views", type=_csv_list, default=None, help="defaults to the training views")
    p.add_argument("--labels", default=None, help="defaults to the training labels")
    p.add_argument("--query-frac", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pr", default=None, help="PR-curve CSV to write")
    p.add_argument("--metrics", default=None, help="metrics file (default: next to the model)")
    return parser


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    ds = synth_multiview(args.n, args.clusters, args.dims, noise=args.noise, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for m, v in enumerate(ds.views):
        write_features(out / f"view{m}.{args.format}", v, args.format)
    write_labels(out / "labels.txt", ds.labels)
    print(f"wrote {ds.n_views} views of {ds.n} samples to {out}")
    return EXIT_OK


def train_config(args, threads: int) -> TrainConfig:
    """Defaults, overridden by ``--config``, overridden by explicit flags."""
    values: dict = {}
    inner: dict = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a JSON object")
        for key, val in doc.items():
            key = key.replace("-", "_")
            if key in _TRAIN_KEYS:
                values[key] = val
            elif key in _STIEFEL_KEYS:
                inner[_STIEFEL_KEYS[key]] = val
            elif key == "query_frac":
                if args.query_frac is None:
                    args.query_frac = float(val)
            else:
                raise UsageError(f"unknown config key {key!r}")
    for key in _TRAIN_KEYS:
        val = getattr(args, key)
        if val is not None:
            values[key] = val
    for flag, field in _STIEFEL_KEYS.items():
        val = getattr(args, flag)
        if val is not None:
            inner[field] = val
    if "bandwidth" in values and values["bandwidth"] != "auto":
        try:
            values["bandwidth"] = float(values["bandwidth"])
        except ValueError:
            raise UsageError(f"bandwidth must be 'auto' or a number, got {values['bandwidth']!r}") from None
    return TrainConfig(**values, stiefel=stiefel.StiefelOptions(**inner), threads=threads)


def cmd_train(args, threads: int) -> int:
    cfg = train_config(args, threads)
    ds = load_dataset(args.views, args.labels)
    query_frac = args.query_frac or 0.0
    if query_frac > 0:
        spec = SplitSpec(1.0 - query_frac, cfg.seed, stratified=ds.labels is not None)
        train_rows, _ = split_indices(ds.n, spec, ds.labels)
        ds = ds.take(train_rows)
    model, B, report = train(ds, cfg)

    out = Path(args.model)
    out.mkdir(parents=True, exist_ok=True)
    provenance = {
        "train": cfg.to_dict(),
        "views": list(args.views),
        "labels": args.labels,
        "query_frac": query_frac,
        "split_seed": cfg.seed,
        "n_train": ds.n,
    }
    save_model(out / MODEL_FILE, model, provenance)
    write_codes(out / CODES_FILE, B)
    with open(out / CONVERGENCE_FILE, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "objective"])
        for k, f in enumerate(report.objective_per_iter):
            w.writerow([k, repr(f)])
    (out / REPORT_FILE).write_text(json.dumps(report.to_dict(), indent=1) + "\n", encoding="ascii")
    status = "converged" if report.converged else "stopped"
    print(f"{status} after {report.iters_run} iterations; objective {report.objective_per_iter[-1]:.6g}; "
          f"mu {[round(v, 4) for v in report.final_mu]}")
    return EXIT_OK


def cmd_encode(args) -> int:
    model, _ = load_model(_model_path(args.model))
    ds = load_dataset(args.views)
    write_codes(args.out, encode(model, ds.views))
    print(f"wrote {ds.n} codes of {model.r} bits to {args.out}")
    return EXIT_OK


def cmd_eval(args, threads: int) -> int:
    model_file = _model_path(args.model)
    model, prov = load_model(model_file)
    views = args.views or prov.get("views")
    labels = args.labels or prov.get("labels")
    if not views or not labels:
        raise UsageError("eval needs --views and --labels (none recorded in the model)")
    ds: MultiviewDataset = load_dataset(views, labels)
    if not 0.0 < args.query_frac < 1.0:
        raise UsageError("--query-frac must lie in (0, 1)")
    m, curve, nq, ndb = evaluate_model(model, ds, args.query_frac, args.seed, threads)
    metrics = Path(args.metrics) if args.metrics else model_file.parent / "metrics.json"
    write_metrics(metrics, m, nq, ndb, model.r)
    if args.pr:
        write_pr_csv(args.pr, curve.downsample(200))
    print(f"MAP {m:.6f} ({nq} queries, {ndb} database items, {model.r} bits)")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(name)s: %(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        threads = _resolve_threads(args.threads)
        if threads < 1:
            raise UsageError("--threads must be >= 1")
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "train":
            return cmd_train(args, threads)
        if args.command == "encode":
            return cmd_encode(args)
        return cmd_eval(args, threads)
    except (UsageError, ConfigError) as exc:
        print(f"lpmgh: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, DegenerateError) as exc:
        print(f"lpmgh: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        print(f"lpmgh: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
