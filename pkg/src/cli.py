#!/usr/bin/env python
"""
libs-adapt command line: synthetic data, offline training, prequential
streaming runs, report comparison, timing benchmarks and drift checks.

Human-readable results go to stdout, diagnostics to stderr, artifacts only
to --out paths. Exit code 1 means the tool failed, never an analytical verdict.
"""
from __future__ import annotations
import argparse
import logging
import statistics
import sys
from dataclasses import asdict, replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from adaptation import Lltm, Ustm, build_lltm, retrain
from config import Config, ExperimentConfig, experiment_from_mapping, load_experiment_config
from drift import DEFAULT_ALPHA, detect_shift, pooled_shift
from experiment import summarize, sweep, train_pipeline
from extensions import Database
from helpers import clock, derive_seed, now_utc
from model_io import Checkpoint, load_checkpoint, reduce_set, save_checkpoint
from network import evaluate_accuracy, predict_batch
from repositories import SQLAlchemyRunRepository
from spectra import load_spectra, save_spectra, split
from streaming import (StreamConfig, compare_reports, final_model, read_report, write_comparison,
                       write_report)
from synthgen import DEFAULT_DIM, DEFAULT_SHIFT, default_spec, generate, generate_drift_stream

logger = logging.getLogger("libs_adapt")

EXIT_OK = 0
EXIT_FAILURE = 1


# ---------- Shared helpers ----------
def _experiment_config(args: argparse.Namespace, keys: Sequence[str]) -> ExperimentConfig:
    """Config file first (if any), then every flag the user actually set."""
    overrides: Dict[str, Any] = {}
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "config", None):
        return load_experiment_config(args.config, overrides)
    return experiment_from_mapping(overrides)


def _lltm_from_file(c: Checkpoint, path: str, L: float, seed: int) -> Lltm:
    reduced = reduce_set(c, load_spectra(path, n_classes=c.network.n_classes))
    fraction = float(L) if L <= 1 else float(L) / len(reduced)
    if fraction > 1:
        raise ValueError(f"L={L} exceeds the {len(reduced)} available LLTM samples")
    return build_lltm(reduced, fraction, seed)


def _format_timing(values: List[float]) -> str:
    mean = statistics.fmean(values)
    if len(values) == 1:
        return f"{mean:.6f} s (n=1)"
    return f"{mean:.6f} s ± {statistics.stdev(values):.6f} s (n={len(values)})"


def _run_repository(url: Optional[str]) -> Optional[SQLAlchemyRunRepository]:
    url = url or Config.RESULTS_DATABASE_URL
    if not url:
        return None
    return SQLAlchemyRunRepository(Database(url))


# ---------- Commands ----------
def cmd_gen(args: argparse.Namespace) -> int:
    if args.n < 1:
        raise ValueError(f"--n must be >= 1, got {args.n}")
    spec = default_spec(args.spec_seed, n_classes=args.classes, dim=args.dim)
    if args.shift == "default":
        start = args.shift_start or 0
        data = generate_drift_stream(spec, args.n, start, DEFAULT_SHIFT, args.seed)
    else:
        data = generate(spec, args.n, None, args.seed)
    save_spectra(data, args.out)
    counts = np.bincount(data.labels(), minlength=spec.n_classes)
    print(f"wrote {len(data)} spectra ({int(np.count_nonzero(counts))} classes, D={data.dim}) to {args.out}")
    return EXIT_OK


TRAIN_KEYS = ("i", "k", "hidden", "data", "seed", "epochs", "learning_rate", "batch_size")


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _experiment_config(args, TRAIN_KEYS)
    if cfg.data:
        data = load_spectra(cfg.data)
    else:
        spec = default_spec(args.spec_seed, dim=args.dim)
        data = generate(spec, cfg.i, None, cfg.seed)
    if args.val_fraction > 0:
        train_set, val_set = split(data, [1.0 - args.val_fraction, args.val_fraction], cfg.seed)
    else:
        train_set, val_set = data, None
    meta = {
        "seed": cfg.seed,
        "i": len(train_set),
        "data": cfg.data or f"synthetic(spec_seed={args.spec_seed}, dim={args.dim})",
        "train": asdict(cfg.train),
        "created_at": now_utc().isoformat(),
    }
    checkpoint, reduced, _ = train_pipeline(train_set, k=cfg.k, hidden=cfg.hidden,
                                            train_cfg=replace(cfg.train, seed=cfg.seed),
                                            seed=cfg.seed, meta=meta)
    save_checkpoint(checkpoint, args.out)
    if args.save_train:
        save_spectra(train_set, args.save_train)
    print(f"train accuracy: {evaluate_accuracy(checkpoint.network, reduced):.4f}")
    if val_set is not None and len(val_set) > 0:
        val_acc = evaluate_accuracy(checkpoint.network, reduce_set(checkpoint, val_set))
        print(f"validation accuracy: {val_acc:.4f}")
    print(f"checkpoint: {args.out} (D={checkpoint.dim}, k={checkpoint.reduction.k})")
    return EXIT_OK


STREAM_KEYS = ("U", "chunk_size", "n_chunks", "seed", "retrain_epochs", "retrain_learning_rate")


def cmd_stream(args: argparse.Namespace) -> int:
    cfg = _experiment_config(args, STREAM_KEYS)
    checkpoint = load_checkpoint(args.checkpoint)
    stream = reduce_set(checkpoint, load_spectra(args.stream, n_classes=checkpoint.network.n_classes))
    lltm = None
    if args.adapt:
        if not args.lltm:
            raise ValueError("--adapt needs --lltm (the labeled offline training data)")
        # L is checked against the LLTM file, not against i
        L = args.L if args.L is not None else cfg.L
        lltm = _lltm_from_file(checkpoint, args.lltm, L, derive_seed(cfg.seed, 0))
    stream_cfg = StreamConfig(chunk_size=cfg.chunk_size, n_chunks=cfg.n_chunks, ustm_capacity=cfg.U,
                              adapt=args.adapt, retrain=replace(cfg.retrain, seed=cfg.seed),
                              ustm_fill=args.ustm_fill, seed=cfg.seed)
    report, adapted = final_model(checkpoint.network, stream, lltm, stream_cfg)
    for r in report.records:
        print(f"chunk {r.chunk_index:>3}  n={r.n_samples}  accuracy={r.accuracy:.4f}  "
              f"retrain={r.retrain_seconds:.3f}s  inference={r.inference_seconds:.3f}s")
    print(f"average accuracy: {report.average_accuracy:.6f}")
    if args.out:
        write_report(report, args.out)
    if args.save_checkpoint:
        meta = dict(checkpoint.meta, adapted_from=args.checkpoint, stream=args.stream)
        save_checkpoint(Checkpoint(checkpoint.normalization, checkpoint.reduction, adapted, meta), args.save_checkpoint)
    repo = _run_repository(args.db)
    if repo is not None:
        run_id = repo.save_run(args.run_name or ("adapt" if args.adapt else "baseline"), report, stream_cfg)
        print(f"recorded run {run_id}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    a = read_report(args.report_a)
    b = read_report(args.report_b)
    if args.out:
        cmp = write_comparison(a, b, args.out)
    else:
        cmp = compare_reports(a, b)
    for ra, rb, d in zip(a.records, b.records, cmp.deltas):
        print(f"chunk {ra.chunk_index:>3}  a={ra.accuracy:.6f}  b={rb.accuracy:.6f}  delta={d:+.6f}")
    print(f"average delta: {cmp.average_delta:+.6f}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    if args.repeat < 1:
        raise ValueError("--repeat must be >= 1")
    checkpoint = load_checkpoint(args.checkpoint)
    raw = load_spectra(args.stream, n_classes=checkpoint.network.n_classes)
    if len(raw) < args.chunk_size:
        raise ValueError(f"stream has {len(raw)} samples, need at least one chunk of {args.chunk_size}")
    chunk = raw.subset(range(args.chunk_size))

    inference: List[float] = []
    for _ in range(args.repeat):
        started = clock()
        predict_batch(checkpoint.network, reduce_set(checkpoint, chunk).matrix())
        inference.append(clock() - started)
    print(f"inference per chunk of {args.chunk_size}: {_format_timing(inference)}")

    if not args.inference_only:
        if not args.lltm:
            raise ValueError("retrain timing needs --lltm (or pass --inference-only)")
        lltm = _lltm_from_file(checkpoint, args.lltm, 1.0, args.seed)
        ustm = Ustm(args.U, checkpoint.network.input_dim)
        for row in reduce_set(checkpoint, chunk).matrix()[-args.U:]:
            ustm.push(row)
        cfg = replace(ExperimentConfig().retrain, epochs=args.retrain_epochs, seed=args.seed)
        timings: List[float] = []
        for _ in range(args.repeat):
            _, stats = retrain(checkpoint.network, lltm, ustm, cfg)
            timings.append(stats.wall_seconds)
        print(f"retrain ({args.retrain_epochs} epochs, LLTM={lltm.capacity}, USTM={len(ustm)}): "
              f"{_format_timing(timings)}")
    return EXIT_OK


def cmd_drift(args: argparse.Namespace) -> int:
    if not 0.0 < args.alpha < 1.0:
        raise ValueError(f"--alpha must be in (0, 1), got {args.alpha}")
    a = load_spectra(args.file_a)
    b = load_spectra(args.file_b)
    result = pooled_shift(a, b, normalize=not args.raw)
    verdict = "shift" if detect_shift(result, args.alpha) else "no shift"
    print(f"statistic={result.statistic:.6f} p_value={result.p_value:.6g} alpha={args.alpha} verdict={verdict}")
    return EXIT_OK


SWEEP_KEYS = ("i", "L", "U", "chunk_size", "n_chunks", "k", "epochs", "retrain_epochs")


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _experiment_config(args, SWEEP_KEYS)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if not seeds:
        raise ValueError("--seeds must list at least one seed")
    results = sweep(seeds, jobs=args.jobs or Config.DEFAULT_JOBS, i=cfg.i, lltm_fraction=cfg.lltm_fraction,
                    U=cfg.U, dim=args.dim, k=cfg.k or 32, chunk_size=cfg.chunk_size,
                    n_chunks=cfg.n_chunks, train_cfg=cfg.train, retrain_cfg=cfg.retrain)
    for r in results:
        print(f"seed {r.seed}: baseline={r.baseline.average_accuracy:.4f} "
              f"adapted={r.adapted.average_accuracy:.4f} delta={r.average_delta:+.4f}")
    s = summarize(results)
    print(f"mean: baseline={s['baseline']:.4f} adapted={s['adapted']:.4f} "
          f"adapted better in {s['wins']}/{s['paired']} seeds")
    return EXIT_OK


def cmd_runs(args: argparse.Namespace) -> int:
    repo = _run_repository(args.db)
    if repo is None:
        raise ValueError("no run database: pass --db or set RESULTS_DATABASE_URL")
    adapt = {"adapt": True, "baseline": False, "all": None}[args.kind]
    rows, total = repo.list_runs(adapt=adapt, limit=args.limit, offset=args.offset)
    for run in rows:
        print(f"{run.id:>5}  {run.name:<20} {'adapt' if run.adapt else 'baseline':<8} "
              f"U={run.ustm_capacity:<4} chunks={run.n_chunks:<3} avg={run.average_accuracy:.6f}  "
              f"{run.created_at.isoformat()}")
    print(f"{len(rows)} of {total} runs")
    return EXIT_OK


# ---------- Parser ----------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="libs-adapt", description=__doc__.strip().splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic spectra CSV")
    p.add_argument("--n", type=int, default=25000)
    p.add_argument("--seed", type=int, default=Config.DEFAULT_SEED)
    p.add_argument("--spec-seed", type=int, default=0, help="seed of the class line tables")
    p.add_argument("--dim", type=int, default=DEFAULT_DIM)
    p.add_argument("--classes", type=int, default=12)
    p.add_argument("--shift", choices=["none", "default"], default="none")
    p.add_argument("--shift-start", type=int, default=None,
                   help="with --shift default: index of the first shifted spectrum (default 0)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="offline training: normalize, reduce, fit the MLP")
    p.add_argument("--config")
    p.add_argument("--data", help="labeled CSV; synthetic source data when omitted")
    p.add_argument("--i", type=int, help="synthetic training size")
    p.add_argument("--spec-seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=DEFAULT_DIM)
    p.add_argument("--k", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int)
    p.add_argument("--save-train", help="write the training split (LLTM source) as CSV")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("stream", help="prequential test-then-train run")
    p.add_argument("--config")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--stream", required=True)
    p.add_argument("--lltm", help="labeled offline training CSV")
    p.add_argument("--adapt", action="store_true")
    p.add_argument("--L", type=float, help="LLTM fraction (<= 1) or size")
    p.add_argument("--U", type=int)
    p.add_argument("--chunk-size", dest="chunk_size", type=int)
    p.add_argument("--n-chunks", dest="n_chunks", type=int)
    p.add_argument("--retrain-epochs", dest="retrain_epochs", type=int)
    p.add_argument("--retrain-learning-rate", dest="retrain_learning_rate", type=float)
    p.add_argument("--ustm-fill", choices=["tail", "uniform"], default="tail")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="report CSV")
    p.add_argument("--save-checkpoint", help="write the adapted model here")
    p.add_argument("--db", help="record the run in this database URL")
    p.add_argument("--run-name")
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("compare", help="per-chunk deltas between two reports (a - b)")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--out", help="plot-ready CSV")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="host timing of chunk inference and one retrain")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--stream", required=True)
    p.add_argument("--lltm")
    p.add_argument("--chunk-size", type=int, default=2500)
    p.add_argument("--U", type=int, default=100)
    p.add_argument("--retrain-epochs", type=int, default=30)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--inference-only", action="store_true")
    p.add_argument("--seed", type=int, default=Config.DEFAULT_SEED)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("drift", help="pooled two-sample KS test between two spectra files")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--raw", action="store_true", help="skip min-max normalization")
    p.set_defaults(func=cmd_drift)

    p = sub.add_parser("sweep", help="synthetic drift benchmark over several seeds")
    p.add_argument("--config")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--jobs", type=int)
    p.add_argument("--dim", type=int, default=DEFAULT_DIM)
    p.add_argument("--i", type=int)
    p.add_argument("--L", type=float)
    p.add_argument("--U", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--chunk-size", dest="chunk_size", type=int)
    p.add_argument("--n-chunks", dest="n_chunks", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--retrain-epochs", dest="retrain_epochs", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("runs", help="list recorded stream runs")
    p.add_argument("--db")
    p.add_argument("--kind", choices=["all", "adapt", "baseline"], default="all")
    p.add_argument("--limit", type=int, default=50)
    p.add_argument("--offset", type=int, default=0)
    p.set_defaults(func=cmd_runs)
    return parser


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, str(Config.LOG_LEVEL).upper(), logging.INFO)
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as e:
        logger.debug("command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
