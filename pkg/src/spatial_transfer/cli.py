"""Command-line entry point: ``spatial-transfer <subcommand> ...``.

Exit status is 0 on success, 1 on a usage error and 2 on a runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import config as config_mod
from .basis import embed_batch
from .config import ExperimentConfig, load_config
from .errors import ConfigError, SpatialTransferError
from .experiment import (
    _R_TRANSFER,
    build_source,
    default_threads,
    replicate_datasets,
    replicate_state,
    run_benchmark,
    run_pretrain,
    pretrain_state,
)
from .net import load_weights, predict, save_weights, train
from .numerics import derive_child
from .report import read_csv, render_plot_svg
from .surfaces import PROCESSES

log = logging.getLogger("spatial_transfer")

OUTPUT_DIR_ENV = "SPATIAL_TRANSFER_OUTPUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="spatial-transfer",
        description="Spatial transfer learning with an RBF-embedded network, benchmarked against Kriging.",
        epilog="Config file schema (YAML or JSON):\n" + config_mod.__doc__.split("Example::", 1)[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="SUBCOMMAND")

    def common(p, seed=True):
        p.add_argument("--config", help="YAML/JSON experiment config; defaults apply to missing keys")
        p.add_argument("--out-dir", help=f"output directory (overrides ${OUTPUT_DIR_ENV} and the config)")
        if seed:
            p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("-v", "--verbose", action="count", default=0)

    p = sub.add_parser("simulate", help="write one replicate's source/target/test data as CSV",
                       description="CSV columns: role,s1,s2,signal,observed.")
    common(p)
    p.add_argument("--process", choices=PROCESSES, required=True)
    p.add_argument("--target-n", type=int, help="target size (default: first configured size)")
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--out", help="CSV path (default: <out-dir>/simulate_<process>_n<N>_r<R>.csv)")

    p = sub.add_parser("pretrain", help="pretrain on source data; writes pretrained_<process>.sntl and a trace")
    common(p)
    p.add_argument("--process", choices=PROCESSES, action="append",
                   help="process to pretrain (repeatable; default: all configured)")

    p = sub.add_parser("finetune", help="fine-tune a weight file on the target rows of a simulate CSV",
                       description="Uses the same random stream as the benchmark for the given "
                                   "process, target size and replicate.")
    common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True, help="CSV written by `simulate`; only role=target rows are used")
    p.add_argument("--process", choices=PROCESSES, required=True)
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--out", required=True, help="output weight file")

    p = sub.add_parser("predict", help="evaluate a weight file at points",
                       description="Input CSV header s1,s2. Output CSV header s1,s2,prediction.")
    common(p, seed=False)
    p.add_argument("--weights", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("benchmark", help="run the full transfer / target-only / Kriging study",
                       description="Writes mse.csv (process,method,target_n,replicate,seed,mse), mse.svg, "
                                   "summary.txt, pretrained weights and traces.")
    common(p)
    p.add_argument("--threads", type=int, default=None, help="worker processes (default: logical cores)")
    p.add_argument("--replicates", type=int)

    p = sub.add_parser("plot", help="render mse.svg from an mse.csv")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    out_dir = getattr(args, "out_dir", None) or os.environ.get(OUTPUT_DIR_ENV)
    return cfg.with_overrides(seed=getattr(args, "seed", None), output_dir=out_dir,
                              replicates=getattr(args, "replicates", None))


def _manifest(cfg: ExperimentConfig, command: str, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    rec = {
        "command": command,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "version": __version__,
        "time": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    }
    with open(out_dir / "manifest.jsonl", "a") as fh:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _read_points(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"s1", "s2"} <= set(reader.fieldnames):
            raise UsageError(f"{path}: expected a header with columns s1,s2")
        return np.array([[float(r["s1"]), float(r["s2"])] for r in reader]).reshape(-1, 2)


def _read_dataset_csv(path, role: str):
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["role"] == role]
    locs = np.array([[float(r["s1"]), float(r["s2"])] for r in rows]).reshape(-1, 2)
    obs = np.array([float(r["observed"]) for r in rows])
    return locs, obs


def cmd_simulate(args, cfg):
    n = args.target_n or cfg.target_sizes[0]
    out = Path(args.out) if args.out else Path(cfg.output_dir) / f"simulate_{args.process}_n{n}_r{args.replicate}.csv"
    cfg.replicate_config(n)
    source = build_source(args.process, cfg)
    datasets = replicate_datasets(args.process, n, cfg, replicate_state(cfg, args.process, args.replicate, n), source)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="\n") as fh:
        fh.write("role,s1,s2,signal,observed\n")
        for ds in datasets:
            for (s1, s2), sig, obs in zip(ds.locations, ds.signal, ds.observed):
                fh.write(f"{ds.role},{s1:.17g},{s2:.17g},{sig:.17g},{obs:.17g}\n")
    _manifest(cfg, "simulate", out.parent)
    print(out)


def cmd_pretrain(args, cfg):
    out_dir = Path(cfg.output_dir)
    for process in args.process or cfg.processes:
        pre = run_pretrain(process, cfg, pretrain_state(cfg, process), out_dir)
        print(f"{process}: final train mse {pre.trace.train_mse[-1]:.6g}" if len(pre.trace) else process)
    _manifest(cfg, "pretrain", out_dir)


def cmd_finetune(args, cfg):
    params = load_weights(args.weights)
    locs, obs = _read_dataset_csv(args.data, "target")
    if len(obs) == 0:
        raise UsageError(f"{args.data}: no role=target rows")
    basis = cfg.basis()
    state = derive_child(replicate_state(cfg, args.process, args.replicate, len(obs)), _R_TRANSFER)
    tuned, trace = train(params, embed_batch(locs, basis), obs, cfg.finetune, state)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_weights(tuned, out)
    _manifest(cfg, "finetune", out.parent)


def cmd_predict(args, cfg):
    basis = cfg.basis()
    params = load_weights(args.weights)
    pts = _read_points(args.points)
    if params.dims[0] != basis.total_dim:
        raise UsageError(f"weights expect {params.dims[0]} inputs but the basis has {basis.total_dim}")
    preds = predict(params, embed_batch(pts, basis)) if len(pts) else np.empty(0)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="\n") as fh:
        fh.write("s1,s2,prediction\n")
        for (s1, s2), y in zip(pts, preds):
            fh.write(f"{s1:.17g},{s2:.17g},{y:.17g}\n")


def cmd_benchmark(args, cfg):
    threads = args.threads if args.threads is not None else default_threads()
    if threads < 1:
        raise UsageError("--threads must be at least 1")
    out_dir = Path(cfg.output_dir)

    def progress(done, total):
        log.info("replicate tasks done: %d/%d", done, total)

    report = run_benchmark(cfg, threads=threads, out_dir=out_dir, progress=progress)
    _manifest(cfg, "benchmark", out_dir)
    print((out_dir / "summary.txt").read_text(), end="")
    return report


def cmd_plot(args, cfg):
    report = read_csv(args.csv)
    render_plot_svg(report, args.out)


COMMANDS = {
    "simulate": cmd_simulate,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "predict": cmd_predict,
    "benchmark": cmd_benchmark,
    "plot": cmd_plot,
}


def parse_and_dispatch(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "spatial-transfer: error: a subcommand is required\n")
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _config(args) if args.command != "plot" else None
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return 1
    except ConfigError as exc:
        sys.stderr.write(f"spatial-transfer: config error: {exc}\n")
        return 1
    try:
        COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError) as exc:
        sys.stderr.write(f"spatial-transfer: {exc}\n")
        return 1
    except (SpatialTransferError, OSError, ValueError) as exc:
        sys.stderr.write(f"spatial-transfer: {type(exc).__name__}: {exc}\n")
        return 2
    return 0


def main():
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
