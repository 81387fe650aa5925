"""Execute a benchmark grid and write its result files."""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from febench.bench.config import (ConfigError, apply_overrides, config_hash,
                                  load_config)
from febench.bench.report import (RESULTS_FILE, TIMING_FILE, emit_report,
                                  load_results, render_tsv)
from febench.cnn import CnnHead, CnnHeadConfig
from febench.encoders import Encoder, preset_config
from febench.text import build_vocab, load_dataset
from febench.training import RunConfig, default_epochs, run_experiment


@dataclass
class CellResult:
    cell_id: str
    preset: str
    mode: str
    metrics_mean: dict = field(default_factory=dict)
    metrics_std: dict = field(default_factory=dict)
    peak_bytes: float = 0.0
    epoch_seconds: List[float] = field(default_factory=list)
    total_seconds: float = 0.0
    seeds: List[int] = field(default_factory=list)
    failed: bool = False
    error: Optional[str] = None


@dataclass
class BenchmarkOutcome:
    config: object
    dataset_name: str
    task_kind: str
    results: List[CellResult]
    config_hash: str

    @property
    def ok(self):
        return not any(r.failed for r in self.results)


def _resolve_epochs(config, dataset):
    resolved = {}
    for cell in config.cells:
        epochs = cell.epochs
        if epochs is None:
            epochs = default_epochs(dataset.name, cell.mode)
        if epochs is None:
            raise ConfigError(
                f"cell {cell.cell_id!r} has no epochs and dataset "
                f"{dataset.name!r} has no default; set epochs explicitly")
        resolved[cell.cell_id] = epochs
    return resolved


def _preflight(config):
    for cell in config.cells:
        preset = preset_config(cell.preset, vocab_size=_MIN_VOCAB)
        if preset.kind == "transformer" and cell.max_len > preset.max_positions:
            raise ConfigError(
                f"cell {cell.cell_id!r}: max_len {cell.max_len} exceeds the "
                f"{cell.preset} preset's {preset.max_positions} positions")


_MIN_VOCAB = 5


def _run_cell(cell, config, dataset, vocab, epochs):
    run_cfg = RunConfig(mode=cell.mode, epochs=epochs,
                        batch_size=cell.batch_size,
                        learning_rate=cell.learning_rate, seed=config.seed,
                        threshold=cell.threshold, max_len=cell.max_len)

    def make_model(seed):
        encoder = Encoder.from_preset(cell.preset, vocab.size,
                                      seed=[seed, 0],
                                      frozen=(cell.mode == "FE"))
        head_cfg = CnnHeadConfig(hidden=encoder.config.hidden,
                                 classes=len(dataset.label_space),
                                 kernel_sizes=cell.kernel_sizes,
                                 filters=cell.filters)
        head = CnnHead.build(head_cfg, seed=[seed, 1])
        return encoder, head, vocab

    seeds = [config.seed + i for i in range(config.repeats)]
    try:
        agg = run_experiment(run_cfg, dataset, make_model,
                             repeats=config.repeats)
    except Exception as exc:
        return CellResult(cell_id=cell.cell_id, preset=cell.preset,
                          mode=cell.mode, seeds=seeds, failed=True,
                          error=f"{type(exc).__name__}: {exc}")
    return CellResult(cell_id=cell.cell_id, preset=cell.preset,
                      mode=cell.mode, metrics_mean=dict(agg.metrics_mean),
                      metrics_std=dict(agg.metrics_std),
                      peak_bytes=agg.peak_bytes,
                      epoch_seconds=list(agg.epoch_seconds),
                      total_seconds=agg.total_seconds, seeds=list(agg.seeds))


def execute(config):
    """Run every cell; cells fail independently and siblings continue."""
    _preflight(config)
    try:
        dataset = load_dataset(config.dataset_path,
                               fmt=config.dataset_format)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load dataset "
                          f"{config.dataset_path!r}: {exc}") from None
    epochs = _resolve_epochs(config, dataset)
    vocab = build_vocab([ex.text for ex in dataset.train],
                        max_size=config.vocab_size)

    def job(cell):
        return _run_cell(cell, config, dataset, vocab,
                         epochs[cell.cell_id])

    if config.parallel == 1 or len(config.cells) == 1:
        results = [job(cell) for cell in config.cells]
    else:
        with ThreadPoolExecutor(max_workers=config.parallel) as pool:
            results = list(pool.map(job, config.cells))
    return BenchmarkOutcome(config=config, dataset_name=dataset.name,
                            task_kind=dataset.task_kind, results=results,
                            config_hash=config_hash(config))


def _result_record(outcome, result):
    metrics = {name: {"mean": result.metrics_mean[name],
                      "std": result.metrics_std[name]}
               for name in sorted(result.metrics_mean)}
    return {"cell": result.cell_id, "preset": result.preset,
            "mode": result.mode, "dataset": outcome.dataset_name,
            "task_kind": outcome.task_kind, "metrics": metrics,
            "peak_bytes": result.peak_bytes, "seeds": result.seeds,
            "repeats": outcome.config.repeats,
            "config_hash": outcome.config_hash, "failed": result.failed,
            "error": result.error}


def write_outputs(outcome, out_dir):
    """Write results.jsonl, timing.jsonl, report.tsv, and report.txt.

    results.jsonl carries only deterministic fields so identical reruns
    produce identical bytes; wall-clock numbers live in timing.jsonl.
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)

    results_path = root / RESULTS_FILE
    with open(results_path, "w", encoding="utf-8") as fh:
        for result in outcome.results:
            fh.write(json.dumps(_result_record(outcome, result),
                                sort_keys=True) + "\n")

    with open(root / TIMING_FILE, "w", encoding="utf-8") as fh:
        for result in outcome.results:
            fh.write(json.dumps({"cell": result.cell_id,
                                 "epoch_seconds": result.epoch_seconds,
                                 "total_seconds": result.total_seconds},
                                sort_keys=True) + "\n")

    records = load_results(root)
    baseline = outcome.config.baseline
    with open(root / "report.tsv", "w", encoding="utf-8") as fh:
        fh.write(render_tsv(records, baseline_cell=baseline))
    with open(root / "report.txt", "w", encoding="utf-8") as fh:
        fh.write(emit_report(records, baseline_cell=baseline,
                             master_seed=outcome.config.seed))
    return {"results": results_path, "timing": root / TIMING_FILE,
            "tsv": root / "report.tsv", "report": root / "report.txt"}


def run_benchmark(config_path, seed=None, repeats=None, parallel=None,
                  out=None):
    """Load a config, run the grid, write outputs; returns the outcome and
    the output directory."""
    config = apply_overrides(load_config(config_path), seed=seed,
                             repeats=repeats, parallel=parallel, out=out)
    outcome = execute(config)
    write_outputs(outcome, config.out_dir)
    return outcome, Path(config.out_dir)
