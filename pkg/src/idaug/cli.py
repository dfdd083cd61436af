"""Command line entry point: ``idaug <subcommand> ...``.

Exit codes: 0 success, 1 hard failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from idaug import __version__
from idaug.analyzer import analyze, emit_report
from idaug.config import parse_config
from idaug.errors import IdaugError
from idaug.evaluator import (
    DEFAULT_BETA,
    DEFAULT_FIXED_TH,
    evaluate_model,
    rank_metric_files,
    write_metrics,
    write_ranks,
    write_sweep,
)
from idaug.features import read_feature_store, write_feature_store
from idaug.inpaint import DEFAULT_DILATION, generate_backgrounds
from idaug.matcher import match_all, read_matches, write_matches
from idaug.pipeline import extract_store, run_pipeline
from idaug.sample import binarize_mask, load_manifest, read_gray
from idaug.synthesis import augment_manifest, synthesize
from idaug.toy import make_toy_dataset
from idaug.workers import default_jobs

log = logging.getLogger("idaug")


def _report(outcomes) -> int:
    failed = [o for o in outcomes if not o.ok]
    for o in failed:
        print(f"failed: {o.key}: {o.error}", file=sys.stderr)
    print(f"{len(outcomes) - len(failed)} succeeded, {len(failed)} failed")
    return 1 if failed else 0


def cmd_inpaint(args) -> int:
    manifest = load_manifest(args.manifest)
    path, outcomes = generate_backgrounds(manifest, args.out, backend=args.backend, cmd=args.cmd,
                                          dilation_radius=args.dilate, jobs=args.jobs)
    print(f"wrote {path}")
    return _report(outcomes)


def cmd_extract(args) -> int:
    manifest = load_manifest(args.manifest)
    store, outcomes = extract_store(manifest, masked=args.masked, jobs=args.jobs)
    write_feature_store(store, args.out)
    print(f"wrote {args.out}")
    return _report(outcomes)


def cmd_match(args) -> int:
    matches = match_all(
        read_feature_store(args.object_features), read_feature_store(args.background_features),
        criterion=args.criterion, k=args.k, exclude_self=args.exclude_self, reading=args.reading,
    )
    write_matches(matches, args.out)
    print(f"wrote {len(matches)} matches to {args.out}")
    return 0


def cmd_synth(args) -> int:
    path, outcomes = synthesize(load_manifest(args.manifest), load_manifest(args.backgrounds),
                                read_matches(args.matches), args.seed, args.out, jobs=args.jobs)
    print(f"wrote {path}")
    return _report(outcomes)


def cmd_augment(args) -> int:
    d_range = (args.d_min, args.d_max) if args.kind == "gridmask" else (96, 224)
    ratio = args.ratio if args.kind == "gridmask" else 0.6
    path, outcomes = augment_manifest(load_manifest(args.manifest), args.out, args.kind, seed=args.seed,
                                      jobs=args.jobs, p=args.p, d_range=d_range, ratio=ratio)
    print(f"wrote {path}")
    return _report(outcomes)


def cmd_stats(args) -> int:
    report = analyze(load_manifest(args.manifest), grid=args.grid)
    for p in emit_report(report, args.out):
        print(f"wrote {p}")
    if report.skipped:
        print(f"skipped {len(report.skipped)} non-salient samples")
    return 0


def cmd_eval(args) -> int:
    manifest = load_manifest(args.gt_manifest)
    pred_dir = Path(args.pred_dir)
    preds, gts = [], []
    for e in manifest:
        pred_path = pred_dir / f"{e.id}.png"
        if not pred_path.is_file():
            raise IdaugError(f"missing prediction {pred_path}")
        preds.append(read_gray(pred_path))
        gts.append(binarize_mask(read_gray(e.mask_path)))
    model_id = args.model_id or pred_dir.resolve().name
    ev = evaluate_model(model_id, preds, gts, beta=args.beta, fixed_th=args.fixed_th)
    out = write_metrics(ev, args.out)
    if ev.sweep is not None:
        write_sweep(ev.sweep, out.with_suffix(".sweep.csv"))
    print(f"wrote {out} ({ev.n_images} images, {ev.n_excluded} without salient object)")
    return 0


def cmd_rank(args) -> int:
    table = rank_metric_files(args.metrics_glob, fixed_th=args.fixed_th)
    write_ranks(table, args.out)
    for model, avg, _ in table.rows():
        print(f"{avg:6.3f}  {model}")
    return 0


def cmd_pipeline(args) -> int:
    overrides = {
        "manifest": args.manifest, "out": args.out, "seed": args.seed, "jobs": args.jobs,
        "criterion": args.criterion, "k": args.k, "dilation_radius": args.dilate,
        "inpaint_backend": args.backend, "inpaint_cmd": args.cmd,
    }
    if args.exclude_self is not None:
        overrides["exclude_self"] = args.exclude_self
    config = parse_config(args.config, overrides)
    code, summary = run_pipeline(config)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return code


def cmd_toy(args) -> int:
    path = make_toy_dataset(args.out, n=args.n, width=args.width, height=args.height, seed=args.seed)
    print(f"wrote {path}")
    return 0


def _add_common(p: argparse.ArgumentParser, jobs: bool = True) -> None:
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    if jobs:
        p.add_argument("--jobs", type=int, default=default_jobs(), help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="idaug", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING", help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inpaint", help="generate a background per sample")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", choices=("diffusion", "external"), default="diffusion")
    p.add_argument("--cmd", help="external command template with {image} {mask} {out}")
    p.add_argument("--dilate", type=int, default=DEFAULT_DILATION, help="hole dilation radius (px)")
    _add_common(p)
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("extract", help="write a feature store")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--masked", dest="masked", action="store_true", default=True,
                   help="describe the masked object (default)")
    g.add_argument("--full", dest="masked", action="store_false", help="describe the whole image")
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("match", help="pick a background for every object")
    p.add_argument("--object-features", required=True)
    p.add_argument("--background-features", required=True)
    p.add_argument("--criterion", choices=("mu-sigma", "median"), default="mu-sigma")
    p.add_argument("--k", type=int, default=None, help="neighbours kept (default: all)")
    p.add_argument("--no-exclude-self", dest="exclude_self", action="store_false", default=True)
    p.add_argument("--reading", choices=("distance", "similarity"), default="distance")
    p.add_argument("--out", required=True)
    _add_common(p, jobs=False)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("synth", help="composite objects onto their matched backgrounds")
    p.add_argument("--manifest", required=True)
    p.add_argument("--backgrounds", required=True, help="background manifest")
    p.add_argument("--matches", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", help="baseline augmentations")
    p.add_argument("kind", choices=("hflip", "gridmask"))
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p", type=float, default=None, help="apply probability (hflip 1.0, gridmask 0.7)")
    p.add_argument("--d-min", type=int, default=96)
    p.add_argument("--d-max", type=int, default=224)
    p.add_argument("--ratio", type=float, default=0.6, help="GridMask keep ratio")
    _add_common(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("stats", help="box position and size distribution")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", type=int, default=64)
    _add_common(p, jobs=False)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("eval", help="score a directory of salience maps")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-manifest", required=True)
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--fixed-th", type=int, default=DEFAULT_FIXED_TH)
    p.add_argument("--model-id")
    p.add_argument("--out", required=True)
    _add_common(p, jobs=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rank", help="average ranking over metrics files")
    p.add_argument("--metrics-glob", required=True)
    p.add_argument("--fixed-th", type=int, default=DEFAULT_FIXED_TH)
    p.add_argument("--out", required=True)
    _add_common(p, jobs=False)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("pipeline", help="inpaint, extract, match and synth in one go")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--manifest")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--criterion", choices=("mu-sigma", "median"))
    p.add_argument("--k", type=int)
    p.add_argument("--dilate", type=int)
    p.add_argument("--backend", choices=("diffusion", "external"))
    p.add_argument("--cmd")
    p.add_argument("--no-exclude-self", dest="exclude_self", action="store_false", default=None)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("toy", help="write a small synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=9)
    p.add_argument("--width", type=int, default=96)
    p.add_argument("--height", type=int, default=96)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p, jobs=False)
    p.set_defaults(func=cmd_toy)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(asctime)s level=%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    start = time.perf_counter()
    try:
        code = args.func(args)
    except IdaugError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    log.info("stage=%s event=exit code=%d duration=%.3f", args.command, code, time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
