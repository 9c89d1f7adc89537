"""Pretrain / fine-tune / target-only / Kriging benchmark.

Random streams are addressed below the master seed as

* ``(process, 0)``            pretraining: source data, network init, training
* ``(process, 1, r, n)``      replicate ``r`` at target size ``n``
* ``(process, 2, r)``         per-replicate pretraining, when enabled

so a replicate's results depend only on its own address and the pretrained
network, never on scheduling or on how many replicates run.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .basis import embed_batch
from .config import ExperimentConfig
from .errors import DimensionMismatch, FitFailed, NotPositiveDefinite
from .gp import fit_kriging, fit_matern_ml, krige_predict
from .net import NetworkParams, TrainTrace, init_network, predict, save_weights, train
from .numerics import derive_child, stream, stream_id
from .report import MseReport, MseRow, render_plot_svg, write_csv, write_summary
from .surfaces import PROCESSES, SourceSurface, make_replicate, make_source

log = logging.getLogger(__name__)

# children of the pretraining state
_PT_SOURCE, _PT_INIT, _PT_TRAIN = 0, 1, 2
# children of a replicate state
_R_DATA, _R_TRANSFER, _R_INIT, _R_TARGET_ONLY = 0, 1, 2, 3


def process_index(process: str) -> int:
    return PROCESSES.index(process)


def pretrain_state(cfg: ExperimentConfig, process: str) -> np.random.Generator:
    return stream(cfg.seed, process_index(process), 0)


def replicate_state(cfg: ExperimentConfig, process: str, replicate: int, n: int) -> np.random.Generator:
    return stream(cfg.seed, process_index(process), 1, replicate, n)


@dataclass
class Pretrained:
    process: str
    params: NetworkParams
    trace: TrainTrace
    source: SourceSurface


def mse(pred, truth) -> float:
    r = np.asarray(pred) - np.asarray(truth)
    return float(np.mean(r * r))


def build_source(process: str, cfg: ExperimentConfig, state: np.random.Generator | None = None) -> SourceSurface:
    """The source surface the benchmark pretrains on (``state`` defaults to the pretraining stream)."""
    if state is None:
        state = pretrain_state(cfg, process)
    return make_source(process, cfg.replicate_config(cfg.target_sizes[0]), derive_child(state, _PT_SOURCE))


def run_pretrain(process: str, cfg: ExperimentConfig, state: np.random.Generator,
                 out_dir: Path | None = None) -> Pretrained:
    """Simulate the source data, train from a fresh network, optionally persist weights and trace."""
    basis = cfg.basis()
    source = build_source(process, cfg, state)
    design = embed_batch(source.data.locations, basis)
    params = init_network(derive_child(state, _PT_INIT), cfg.network_dims())
    params, trace = train(params, design, source.data.observed, cfg.pretrain, derive_child(state, _PT_TRAIN))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_weights(params, out_dir / f"pretrained_{process}.sntl")
        (out_dir / f"trace_{process}.csv").write_text(trace.to_csv())
    log.info("pretrained %s: final train mse %.3g", process, trace.train_mse[-1] if len(trace) else float("nan"))
    return Pretrained(process, params, trace, source)


def replicate_datasets(process: str, n: int, cfg: ExperimentConfig, state: np.random.Generator,
                       source: SourceSurface | None):
    return make_replicate(process, cfg.replicate_config(n), derive_child(state, _R_DATA), source)


def run_replicate(process: str, n: int, pretrained: Pretrained, cfg: ExperimentConfig,
                  state: np.random.Generator, replicate: int = 0) -> list:
    """Transfer, target-only and Kriging MSEs on one replicate's held-out signal."""
    basis = cfg.basis()
    if pretrained.params.dims[0] != basis.total_dim:
        raise DimensionMismatch(
            f"pretrained network takes {pretrained.params.dims[0]} inputs, basis has {basis.total_dim}")
    seed = stream_id(state)
    _, target, test = replicate_datasets(process, n, cfg, state, pretrained.source)
    x_target = embed_batch(target.locations, basis)
    x_test = embed_batch(test.locations, basis)

    tuned, _ = train(pretrained.params, x_target, target.observed, cfg.finetune,
                     derive_child(state, _R_TRANSFER), record=False)
    fresh = init_network(derive_child(state, _R_INIT), pretrained.params.dims)
    alone, _ = train(fresh, x_target, target.observed, cfg.target_only, derive_child(state, _R_TARGET_ONLY),
                     record=False)

    fallback = False
    params = cfg.matern
    if cfg.kriging_params == "ml":
        try:
            params = fit_matern_ml(target.locations, target.observed)
        except FitFailed as exc:
            log.warning("%s n=%d rep=%d: ML fit failed (%s); kriging with true parameters",
                        process, n, replicate, exc)
            fallback = True
    kriged = krige_predict(fit_kriging(target.locations, target.observed, params), test.locations)

    return [
        MseRow(process, "transfer", n, replicate, seed, mse(predict(tuned, x_test), test.signal)),
        MseRow(process, "target_only", n, replicate, seed, mse(predict(alone, x_test), test.signal)),
        MseRow(process, "kriging", n, replicate, seed, mse(kriged, test.signal), fallback),
    ]


# --------------------------------------------------------------------------
# benchmark driver

_WORKER = {}


def _init_worker(cfg, pretrained):
    _WORKER["cfg"] = cfg
    _WORKER["pretrained"] = pretrained


def _task(process, n, r):
    cfg = _WORKER["cfg"]
    with threadpool_limits(limits=1):
        try:
            if cfg.pretrain_per_replicate:
                pre = run_pretrain(process, cfg, stream(cfg.seed, process_index(process), 2, r))
            else:
                pre = _WORKER["pretrained"][process]
            return run_replicate(process, n, pre, cfg, replicate_state(cfg, process, r, n), r), None
        except (NotPositiveDefinite, FitFailed, FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
            return [], (process, n, r, f"{type(exc).__name__}: {exc}")


def run_benchmark(cfg: ExperimentConfig, threads: int = 1, out_dir=None, progress=None) -> MseReport:
    """Run every (process, target size, replicate) cell and write the report files.

    Output is identical for any ``threads`` value: each task owns its random
    streams and the merge is ordered by (process, n, replicate).
    """
    out_dir = Path(out_dir if out_dir is not None else cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pretrained = {}
    with threadpool_limits(limits=1):
        if not cfg.pretrain_per_replicate:
            for process in cfg.processes:
                pretrained[process] = run_pretrain(process, cfg, pretrain_state(cfg, process), out_dir)

    tasks = [(p, n, r) for p in cfg.processes for n in cfg.target_sizes for r in range(cfg.replicates)]
    report = MseReport()
    if threads <= 1:
        _init_worker(cfg, pretrained)
        results = (_task(*t) for t in tasks)
        _collect(report, results, len(tasks), progress)
    else:
        with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker,
                                 initargs=(cfg, pretrained)) as pool:
            futures = [pool.submit(_task, *t) for t in tasks]
            _collect(report, (f.result() for f in futures), len(tasks), progress)
    for fail in report.failures:
        log.warning("replicate failed and was excluded: %s", fail)

    report = report.sorted()
    write_csv(report, out_dir / "mse.csv")
    render_plot_svg(report, out_dir / "mse.svg")
    write_summary(report, out_dir / "summary.txt")
    return report


def _collect(report, results, total, progress):
    for done, (rows, failure) in enumerate(results, 1):
        report.rows.extend(rows)
        if failure is not None:
            report.failures.append(failure)
        if progress is not None:
            progress(done, total)


def default_threads() -> int:
    return os.cpu_count() or 1
