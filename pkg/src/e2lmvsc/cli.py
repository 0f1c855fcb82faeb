"""Command-line entry point: ``e2lmvsc {synth,train,eval,gradcheck}``.

Exit codes: 0 success, 2 bad input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext

from threadpoolctl import threadpool_limits

from . import dataio
from .cluster import evaluate_labels
from .errors import InputError, NumericalError
from .gradsuite import run_suite
from .pipeline import TrainConfig, run_experiment

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("e2lmvsc")


def _thread_limit():
    raw = os.environ.get("E2LMVSC_THREADS")
    if not raw:
        return nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"E2LMVSC_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise InputError("E2LMVSC_THREADS must be at least 1")
    return threadpool_limits(limits=n)


def cmd_synth(args):
    spec = dataio.SynthSpec(
        n=args.n, V=args.views, K=args.clusters,
        shared_dim=args.shared_dim, private_dim=args.private_dim,
        noise_dim=args.noise_dim, noise_scale=args.noise_scale, seed=args.seed,
    )
    root = dataio.save_dataset(dataio.synth_generate(spec), args.out, format=args.format)
    print(f"wrote {spec.V} views x {spec.n} samples to {root}")
    return EXIT_OK


def cmd_train(args):
    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    cfg = cfg.with_overrides(
        seed=args.seed,
        epochs_pretrain=args.epochs_pretrain,
        epochs_finetune=args.epochs_finetune,
    )
    report = run_experiment(args.data, cfg, args.out, pretrain_only=args.pretrain_only,
                            export_affinity=args.export_affinity)
    if report.final_metrics is not None:
        print(json.dumps(report.final_metrics.as_dict(6)))
    else:
        print(f"outputs written to {args.out}")
    return EXIT_OK


def cmd_eval(args):
    pred = dataio.read_labels(args.pred)
    truth = dataio.read_labels(args.truth)
    print(json.dumps(evaluate_labels(pred, truth).as_dict(6), indent=2))
    return EXIT_OK


def cmd_gradcheck(args):
    seeds = [args.seed] if args.seed is not None else range(10)
    results = run_suite(seeds=seeds, tol=args.tol)
    ok = True
    for name, reports in results.items():
        worst = max(r.max_rel_error for r in reports)
        passed = all(r.passed for r in reports)
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:<11s} max rel error {worst:.2e}  ({len(reports)} seeds)")
    return EXIT_OK if ok else EXIT_NUMERICAL


def build_parser():
    p = argparse.ArgumentParser(prog="e2lmvsc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic multi-view dataset")
    s.add_argument("--out", required=True, help="dataset directory to create")
    s.add_argument("--n", type=int, required=True, help="number of samples")
    s.add_argument("--views", type=int, required=True)
    s.add_argument("--clusters", type=int, required=True)
    s.add_argument("--shared-dim", type=int, default=6, help="cluster code shared by all views")
    s.add_argument("--private-dim", type=int, default=3, help="per-view cluster code")
    s.add_argument("--noise-dim", type=int, default=4, help="label-free nuisance dimensions")
    s.add_argument("--noise-scale", type=float, default=0.05, help="std of within-cluster jitter")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--format", choices=dataio.FORMATS, default="f64bin", help="view file format")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="pretrain, fine-tune and cluster a dataset directory")
    t.add_argument("--data", required=True, help="dataset directory with meta.json")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--config", help="JSON file with TrainConfig fields")
    t.add_argument("--seed", type=int, help="master seed (overrides the config file)")
    t.add_argument("--epochs-pretrain", type=int, help="override epochs_pretrain")
    t.add_argument("--epochs-finetune", type=int, help="override epochs_finetune")
    t.add_argument("--pretrain-only", action="store_true", help="stop after autoencoder pretraining")
    t.add_argument("--export-affinity", action="store_true", help="also write affinity.f64bin (n x n)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score predicted labels against ground truth")
    e.add_argument("--pred", required=True, help="predicted labels, one per line")
    e.add_argument("--truth", required=True, help="true labels, one per line")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference check of every loss")
    g.add_argument("--seed", type=int, help="check one instance (default: seeds 0-9)")
    g.add_argument("--tol", type=float, default=1e-4, help="max relative error")
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"bad input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
