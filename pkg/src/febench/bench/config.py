"""Benchmark config files.

INI layout: one ``[benchmark]`` section with run-wide settings and one
``[cell:<id>]`` section per grid cell. Example::

    [benchmark]
    dataset = data/keywords
    repeats = 3
    seed = 11
    out = runs/keywords

    [cell:tiny-fe]
    preset = tiny
    mode = FE
    epochs = 12
    max_len = 32
"""

import configparser
import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass
from typing import Optional, Tuple

from febench.encoders import PRESETS

_CELL_ID = re.compile(r"^[A-Za-z0-9_.-]+$")

_BENCH_KEYS = {"dataset", "format", "repeats", "seed", "out", "parallel",
               "vocab", "baseline"}
_CELL_KEYS = {"preset", "mode", "epochs", "batch", "lr", "threshold",
              "max_len", "kernels", "filters"}


class ConfigError(ValueError):
    """A benchmark config file failed to parse or validate."""


@dataclass(frozen=True)
class CellSpec:
    """One (encoder preset, training mode) cell of the benchmark grid."""

    cell_id: str
    preset: str
    mode: str
    epochs: Optional[int] = None
    batch_size: Optional[int] = None
    learning_rate: float = 5e-5
    threshold: float = 0.5
    max_len: int = 200
    kernel_sizes: Tuple[int, ...] = (3, 4, 5, 6)
    filters: int = 100

    def __post_init__(self):
        if not _CELL_ID.match(self.cell_id):
            raise ConfigError(f"invalid cell id {self.cell_id!r}")
        if self.preset not in PRESETS:
            raise ConfigError(f"cell {self.cell_id!r}: unknown preset "
                              f"{self.preset!r} (choose from "
                              f"{sorted(PRESETS)})")
        if self.mode not in ("FE", "FiT"):
            raise ConfigError(f"cell {self.cell_id!r}: mode must be FE or "
                              f"FiT, got {self.mode!r}")
        if self.epochs is not None and self.epochs < 1:
            raise ConfigError(f"cell {self.cell_id!r}: epochs must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError(f"cell {self.cell_id!r}: batch must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError(f"cell {self.cell_id!r}: lr must be > 0")
        if not 0 < self.threshold < 1:
            raise ConfigError(f"cell {self.cell_id!r}: threshold must be in "
                              f"(0, 1)")
        if self.max_len < 3:
            raise ConfigError(f"cell {self.cell_id!r}: max_len must be >= 3")
        if self.filters < 1:
            raise ConfigError(f"cell {self.cell_id!r}: filters must be >= 1")
        if (not self.kernel_sizes
                or len(set(self.kernel_sizes)) != len(self.kernel_sizes)
                or any(k < 1 for k in self.kernel_sizes)):
            raise ConfigError(f"cell {self.cell_id!r}: kernels must be "
                              f"distinct positive integers")


@dataclass(frozen=True)
class BenchmarkConfig:
    dataset_path: str
    cells: Tuple[CellSpec, ...]
    dataset_format: Optional[str] = None
    repeats: int = 3
    seed: int = 0
    out_dir: str = "bench-out"
    parallel: int = 1
    vocab_size: int = 30000
    baseline: Optional[str] = None

    def __post_init__(self):
        if not self.cells:
            raise ConfigError("config defines no cells")
        ids = [c.cell_id for c in self.cells]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate cell ids")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.parallel < 1:
            raise ConfigError("parallel must be >= 1")
        if self.vocab_size < 5:
            raise ConfigError("vocab must be >= 5")
        if self.baseline is not None and self.baseline not in ids:
            raise ConfigError(f"baseline {self.baseline!r} is not a "
                              f"configured cell")

    def cell(self, cell_id):
        for c in self.cells:
            if c.cell_id == cell_id:
                return c
        raise KeyError(cell_id)


def _get_typed(section, key, convert, kind):
    raw = section[key]
    try:
        return convert(raw)
    except ValueError:
        raise ConfigError(f"[{section.name}] {key} = {raw!r} is not "
                          f"{kind}") from None


def _reject_unknown(section, allowed):
    extra = set(section) - allowed
    if extra:
        raise ConfigError(f"[{section.name}] has unknown keys: "
                          f"{', '.join(sorted(extra))}")


def _parse_kernels(section):
    raw = section["kernels"]
    try:
        return tuple(int(part) for part in raw.split(","))
    except ValueError:
        raise ConfigError(f"[{section.name}] kernels = {raw!r} is not a "
                          f"comma-separated list of integers") from None


def _parse_cell(section):
    cell_id = section.name.split(":", 1)[1]
    _reject_unknown(section, _CELL_KEYS)
    for required in ("preset", "mode"):
        if required not in section:
            raise ConfigError(f"[{section.name}] is missing {required!r}")
    kwargs = {"cell_id": cell_id, "preset": section["preset"],
              "mode": section["mode"]}
    if "epochs" in section:
        kwargs["epochs"] = _get_typed(section, "epochs", int, "an integer")
    if "batch" in section:
        kwargs["batch_size"] = _get_typed(section, "batch", int, "an integer")
    if "lr" in section:
        kwargs["learning_rate"] = _get_typed(section, "lr", float, "a number")
    if "threshold" in section:
        kwargs["threshold"] = _get_typed(section, "threshold", float,
                                         "a number")
    if "max_len" in section:
        kwargs["max_len"] = _get_typed(section, "max_len", int, "an integer")
    if "kernels" in section:
        kwargs["kernel_sizes"] = _parse_kernels(section)
    if "filters" in section:
        kwargs["filters"] = _get_typed(section, "filters", int, "an integer")
    return CellSpec(**kwargs)


def load_config(path):
    """Parse and validate a benchmark config file."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None

    if "benchmark" not in parser:
        raise ConfigError("config is missing the [benchmark] section")
    bench = parser["benchmark"]
    _reject_unknown(bench, _BENCH_KEYS)
    if "dataset" not in bench:
        raise ConfigError("[benchmark] is missing 'dataset'")

    cells = []
    for name in parser.sections():
        if name == "benchmark":
            continue
        if not name.startswith("cell:"):
            raise ConfigError(f"unexpected section [{name}] (cells are "
                              f"named [cell:<id>])")
        cells.append(_parse_cell(parser[name]))

    kwargs = {"dataset_path": bench["dataset"], "cells": tuple(cells)}
    if "format" in bench:
        kwargs["dataset_format"] = bench["format"]
    if "repeats" in bench:
        kwargs["repeats"] = _get_typed(bench, "repeats", int, "an integer")
    if "seed" in bench:
        kwargs["seed"] = _get_typed(bench, "seed", int, "an integer")
    if "out" in bench:
        kwargs["out_dir"] = bench["out"]
    if "parallel" in bench:
        kwargs["parallel"] = _get_typed(bench, "parallel", int, "an integer")
    if "vocab" in bench:
        kwargs["vocab_size"] = _get_typed(bench, "vocab", int, "an integer")
    if "baseline" in bench:
        kwargs["baseline"] = bench["baseline"]
    return BenchmarkConfig(**kwargs)


def apply_overrides(config, seed=None, repeats=None, parallel=None, out=None):
    """Return a copy of ``config`` with command-line overrides applied."""
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if repeats is not None:
        changes["repeats"] = repeats
    if parallel is not None:
        changes["parallel"] = parallel
    if out is not None:
        changes["out_dir"] = out
    return dataclasses.replace(config, **changes) if changes else config


def config_hash(config):
    """Hash of everything that shapes the results.

    The output directory and the parallelism limit are excluded: neither
    affects the numbers, and two runs that differ only in where they write
    must produce byte-identical result records.
    """
    payload = {
        "dataset": config.dataset_path,
        "format": config.dataset_format,
        "repeats": config.repeats,
        "seed": config.seed,
        "vocab": config.vocab_size,
        "baseline": config.baseline,
        "cells": [dataclasses.asdict(c) for c in config.cells],
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()
