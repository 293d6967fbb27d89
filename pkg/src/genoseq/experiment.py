"""Config-driven grid runner: tokenizer x positional scheme x depth sweeps.

Every grid cell trains one model per task dataset and evaluates it on the
test split under the three robustness settings. Cells persist incrementally
as one JSON record each, keyed by a coordinate hash, so an interrupted run
resumes by skipping completed cells. Records are a pure function of
(config, seed, data files): rerunning any cell reproduces its metrics.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import re
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import __version__
from .corpus import TaskDataset, default_perturbations, load_task, perturbation_name
from .model import ModelConfig, count_parameters, init_params
from .positional import scheme_from_name
from .tokenizers import BpeTokenizer, save_vocabulary, tokenizer_from_descriptor
from .training import evaluate, train


class ExperimentError(Exception):
    pass


class DataMissingError(ExperimentError):
    pass


class NoRecordsError(ExperimentError):
    pass


class ConfigError(ExperimentError):
    pass


REPORT_LAYOUTS = ("by-scheme", "robustness")


@dataclass(frozen=True)
class GridConfig:
    """One experiment sweep: the cross product of the five coordinate lists.

    The remaining fields are training overrides shared by every cell.
    ``max_len=None`` applies the per-tokenizer defaults: nominal length + 2
    for k-mers, nominal length / 3 + 2 for BPE (its empirical compression
    ratio). ``num_heads=None`` picks the largest of 12, 8, 4, 2, 1 that
    divides ``d_model`` with an even per-head width.
    """

    tasks: tuple[str, ...]
    tokenizers: tuple[str, ...]
    schemes: tuple[str, ...]
    depths: tuple[int, ...]
    seeds: tuple[int, ...]
    batch_size: int = 32
    epochs: int = 3
    max_len: int | None = None
    d_model: int = 768
    num_heads: int | None = None
    d_ff: int | None = None
    dropout: float = 0.1
    lr_peak: float = 1e-4
    weight_decay: float = 0.01
    bpe_merges: int = 4092
    perturb_n: int = 3
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("tasks", "tokenizers", "schemes", "depths", "seeds"):
            if not getattr(self, name):
                raise ConfigError(f"grid list {name!r} must be non-empty")

    @property
    def num_cells(self) -> int:
        return (
            len(self.tasks)
            * len(self.tokenizers)
            * len(self.schemes)
            * len(self.depths)
            * len(self.seeds)
        )

    def resolved_num_heads(self) -> int:
        if self.num_heads is not None:
            return self.num_heads
        for h in (12, 8, 4, 2, 1):
            if self.d_model % h == 0 and (self.d_model // h) % 2 == 0:
                return h
        return 1

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def grid_config_from_json(payload: dict) -> GridConfig:
    """Build a GridConfig from parsed JSON, rejecting unknown keys."""
    if not isinstance(payload, dict):
        raise ConfigError("grid config must be a JSON object")
    known = {f.name for f in dataclasses.fields(GridConfig)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise ConfigError(f"unknown grid config keys: {unknown}")
    missing = [k for k in ("tasks", "tokenizers", "schemes", "depths", "seeds") if k not in payload]
    if missing:
        raise ConfigError(f"grid config missing required keys: {missing}")
    data = dict(payload)
    for key in ("tasks", "tokenizers", "schemes", "depths", "seeds"):
        data[key] = tuple(data[key])
    try:
        return GridConfig(**data)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def load_grid_config(path: str | Path) -> GridConfig:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return grid_config_from_json(payload)


@dataclass(frozen=True)
class CellSpec:
    task: str
    tokenizer: str
    scheme: str
    depth: int
    seed: int

    @property
    def key(self) -> str:
        return f"{self.task}|{self.tokenizer}|{self.scheme}|depth={self.depth}|seed={self.seed}"

    @property
    def filename(self) -> str:
        slug = re.sub(r"[^A-Za-z0-9._-]+", "-", self.key)
        digest = hashlib.sha1(self.key.encode("utf-8")).hexdigest()[:10]
        return f"{slug}-{digest}.json"


@dataclass
class ExperimentRecord:
    """One grid cell's coordinates, metrics, and run metadata."""

    task: str
    tokenizer: str
    scheme: str
    depth: int
    seed: int
    per_dataset_mcc: dict[str, float]
    task_avg_mcc: float
    perturbation_mcc: dict[str, float]
    per_dataset_perturbation_mcc: dict[str, dict[str, float]]
    dev_mcc_history: dict[str, list[float]]
    parameter_count: int
    runtime_seconds: float
    code_version: str
    config: dict

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, payload: dict) -> "ExperimentRecord":
        return cls(**payload)

    def semantic_fields(self) -> dict:
        """Everything except wall-clock timing, for record-set comparison."""
        out = self.to_json()
        out.pop("runtime_seconds")
        return out

    def sort_key(self):
        return (self.task, self.tokenizer, self.scheme, self.depth, self.seed)


def _atomic_write_json(path: Path, payload: dict) -> None:
    tmp = path.with_suffix(path.suffix + f".tmp{os.getpid()}")
    tmp.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _stable_seed(*parts: str | int) -> list[int]:
    out = []
    for part in parts:
        out.append(part if isinstance(part, int) else zlib.crc32(part.encode("utf-8")))
    return out


def _cell_tokenizer(spec: CellSpec, config: GridConfig, dataset: TaskDataset, run_dir: Path):
    """Build and fit the cell's tokenizer, caching trained BPE vocabularies."""
    if config.max_len is not None:
        max_len = config.max_len
    elif spec.tokenizer.startswith("bpe"):
        max_len = dataset.nominal_length // 3 + 2
    else:
        max_len = dataset.nominal_length + 2
    train_seqs = [seq for seq, _ in dataset.train]
    if spec.tokenizer == "bpe":
        vocab_dir = run_dir / "vocabs"
        vocab_dir.mkdir(parents=True, exist_ok=True)
        ds = dataset.dataset or "_"
        cache = vocab_dir / f"{re.sub(r'[^A-Za-z0-9._-]+', '-', spec.task)}_{ds}_{config.bpe_merges}.json"
        if cache.exists():
            tok = BpeTokenizer(max_len=max_len, vocabulary=str(cache))
            return tok.fit(train_seqs)
        tok = BpeTokenizer(num_merges=config.bpe_merges, max_len=max_len)
        tok.fit(train_seqs)
        tmp = cache.with_suffix(f".tmp{os.getpid()}")
        save_vocabulary(tok.vocabulary_, tmp)
        os.replace(tmp, cache)
        return tok
    return tokenizer_from_descriptor(
        spec.tokenizer, max_len=max_len, bpe_merges=config.bpe_merges
    ).fit(train_seqs)


def run_cell(spec: CellSpec, config: GridConfig, data_dir: str | Path, run_dir: str | Path) -> ExperimentRecord:
    """Train and evaluate one grid cell; pure given (spec, config, data files)."""
    start = time.perf_counter()
    run_dir = Path(run_dir)
    datasets = load_task(Path(data_dir) / spec.task, name=spec.task)
    num_heads = config.resolved_num_heads()
    scheme = scheme_from_name(spec.scheme, num_heads)

    per_dataset_mcc: dict[str, float] = {}
    per_dataset_perturbation: dict[str, dict[str, float]] = {}
    dev_histories: dict[str, list[float]] = {}
    parameter_count = 0
    for dataset in datasets:
        ds_name = dataset.dataset or spec.task
        tokenizer = _cell_tokenizer(spec, config, dataset, run_dir)
        train_ids = tokenizer.transform([s for s, _ in dataset.train])
        train_labels = np.array([l for _, l in dataset.train], dtype=np.int64)
        dev_ids = tokenizer.transform([s for s, _ in dataset.dev])
        dev_labels = np.array([l for _, l in dataset.dev], dtype=np.int64)

        model_config = ModelConfig(
            vocab_size=tokenizer.vocab_size_,
            num_classes=dataset.num_classes,
            max_len=tokenizer.max_len_,
            num_layers=spec.depth,
            d_model=config.d_model,
            num_heads=num_heads,
            d_ff=config.d_ff,
            dropout=config.dropout,
            scheme=scheme,
        )
        parameter_count = count_parameters(model_config)
        cell_rng = np.random.default_rng(
            _stable_seed(spec.seed, spec.task, ds_name, spec.tokenizer, spec.scheme, spec.depth)
        )
        params = init_params(model_config, cell_rng, dtype=np.dtype(config.dtype))
        train_seed = int(cell_rng.integers(2**63))
        eval_seed = int(cell_rng.integers(2**63))
        result = train(
            params,
            model_config,
            train_ids,
            train_labels,
            dev_ids,
            dev_labels,
            epochs=config.epochs,
            batch_size=config.batch_size,
            lr_peak=config.lr_peak,
            weight_decay=config.weight_decay,
            seed=train_seed,
        )
        dev_histories[ds_name] = result.dev_mcc_history
        perturbed: dict[str, float] = {}
        for offset, kind in enumerate(default_perturbations(config.perturb_n)):
            _, test_mcc = evaluate(
                result.params,
                model_config,
                tokenizer,
                dataset.test,
                perturbation=kind,
                seed=eval_seed + offset,
            )
            perturbed[perturbation_name(kind)] = test_mcc
        per_dataset_perturbation[ds_name] = perturbed
        per_dataset_mcc[ds_name] = perturbed["original"]

    n = len(datasets)
    perturbation_avg = {
        name: sum(per_dataset_perturbation[ds][name] for ds in per_dataset_perturbation) / n
        for name in ("original", "end_substitution", "head_delete_tail_fill")
    }
    return ExperimentRecord(
        task=spec.task,
        tokenizer=spec.tokenizer,
        scheme=spec.scheme,
        depth=spec.depth,
        seed=spec.seed,
        per_dataset_mcc=per_dataset_mcc,
        task_avg_mcc=sum(per_dataset_mcc.values()) / n,
        perturbation_mcc=perturbation_avg,
        per_dataset_perturbation_mcc=per_dataset_perturbation,
        dev_mcc_history=dev_histories,
        parameter_count=parameter_count,
        runtime_seconds=time.perf_counter() - start,
        code_version=__version__,
        config=GridConfig.to_json(config),
    )


def _run_cell_entry(args: tuple) -> tuple[CellSpec, dict | None, str | None]:
    spec, config, data_dir, run_dir = args
    try:
        record = run_cell(spec, config, data_dir, run_dir)
        return spec, record.to_json(), None
    except Exception as e:  # recorded as a cell failure; the run continues
        return spec, None, f"{type(e).__name__}: {e}"


@dataclass
class GridRunResult:
    records: list[ExperimentRecord]
    executed: int = 0
    skipped: int = 0
    failures: dict[str, str] = field(default_factory=dict)


def enumerate_cells(config: GridConfig) -> list[CellSpec]:
    return [
        CellSpec(task, tokenizer, scheme, depth, seed)
        for task in config.tasks
        for tokenizer in config.tokenizers
        for scheme in config.schemes
        for depth in config.depths
        for seed in config.seeds
    ]


def run_grid(
    config: GridConfig,
    data_dir: str | Path,
    run_dir: str | Path,
    workers: int = 1,
) -> GridRunResult:
    """Execute every grid cell, resuming past completed ones.

    Records are written atomically as they finish; the returned list is
    order-normalized by coordinates. Parallel execution (one process per
    worker) produces the identical record set as a serial run because each
    cell is seeded purely from its own coordinates.
    """
    data_dir = Path(data_dir)
    run_dir = Path(run_dir)
    for task in config.tasks:
        if not (data_dir / task).is_dir():
            raise DataMissingError(f"task directory {data_dir / task} does not exist")
    records_dir = run_dir / "records"
    failures_dir = run_dir / "failures"
    records_dir.mkdir(parents=True, exist_ok=True)
    failures_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write_json(run_dir / "grid_config.json", config.to_json())

    result = GridRunResult(records=[])
    pending: list[CellSpec] = []
    for spec in enumerate_cells(config):
        record_path = records_dir / spec.filename
        if record_path.exists():
            result.records.append(ExperimentRecord.from_json(json.loads(record_path.read_text())))
            result.skipped += 1
        else:
            pending.append(spec)

    def finish(spec: CellSpec, payload: dict | None, error: str | None) -> None:
        if error is not None:
            _atomic_write_json(failures_dir / spec.filename, {"cell": spec.key, "error": error})
            result.failures[spec.key] = error
            return
        _atomic_write_json(records_dir / spec.filename, payload)
        result.records.append(ExperimentRecord.from_json(payload))
        result.executed += 1

    if workers <= 1:
        for spec in pending:
            finish(*_run_cell_entry((spec, config, str(data_dir), str(run_dir))))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            jobs = [(spec, config, str(data_dir), str(run_dir)) for spec in pending]
            for spec, payload, error in pool.map(_run_cell_entry, jobs):
                finish(spec, payload, error)

    result.records.sort(key=ExperimentRecord.sort_key)
    return result


def load_records(run_dir: str | Path) -> list[ExperimentRecord]:
    records_dir = Path(run_dir) / "records"
    if not records_dir.is_dir():
        raise NoRecordsError(f"{records_dir} does not exist")
    records = [
        ExperimentRecord.from_json(json.loads(p.read_text()))
        for p in sorted(records_dir.glob("*.json"))
    ]
    if not records:
        raise NoRecordsError(f"no records under {records_dir}")
    records.sort(key=ExperimentRecord.sort_key)
    return records


def _format(value: float) -> str:
    return f"{value:.4f}"


def report_by_scheme(records: Iterable[ExperimentRecord], out_dir: str | Path) -> list[Path]:
    """One CSV per scheme: rows (depth, tokenizer), columns tasks.

    Cells hold the task-average test MCC, averaged over seeds; when several
    seeds were run, ``<task>_range`` columns carry max - min across seeds.
    """
    records = list(records)
    if not records:
        raise NoRecordsError("no records to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = sorted({r.task for r in records})
    schemes = sorted({r.scheme for r in records})
    multi_seed = len({r.seed for r in records}) > 1
    paths = []
    for scheme in schemes:
        rows: dict[tuple[int, str], dict[str, list[float]]] = {}
        for r in records:
            if r.scheme != scheme:
                continue
            cell = rows.setdefault((r.depth, r.tokenizer), {})
            cell.setdefault(r.task, []).append(r.task_avg_mcc)
        header = ["depth", "tokenizer"] + tasks
        if multi_seed:
            header += [f"{t}_range" for t in tasks]
        lines = [",".join(header)]
        for (depth, tokenizer) in sorted(rows):
            cell = rows[(depth, tokenizer)]
            values = [cell.get(t, []) for t in tasks]
            fields = [str(depth), tokenizer]
            fields += [_format(sum(v) / len(v)) if v else "" for v in values]
            if multi_seed:
                fields += [_format(max(v) - min(v)) if v else "" for v in values]
            lines.append(",".join(fields))
        path = out_dir / f"by_scheme_{scheme}.csv"
        path.write_text("\n".join(lines) + "\n")
        paths.append(path)
    return paths


def report_robustness(records: Iterable[ExperimentRecord], out_dir: str | Path) -> list[Path]:
    """One CSV per scheme: rows tokenizers, columns the three perturbation settings."""
    records = list(records)
    if not records:
        raise NoRecordsError("no records to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    settings = ("original", "end_substitution", "head_delete_tail_fill")
    paths = []
    for scheme in sorted({r.scheme for r in records}):
        rows: dict[str, dict[str, list[float]]] = {}
        for r in records:
            if r.scheme != scheme:
                continue
            cell = rows.setdefault(r.tokenizer, {})
            for name in settings:
                cell.setdefault(name, []).append(r.perturbation_mcc[name])
        lines = [",".join(("tokenizer",) + settings)]
        for tokenizer in sorted(rows):
            cell = rows[tokenizer]
            fields = [tokenizer] + [_format(sum(cell[n]) / len(cell[n])) for n in settings]
            lines.append(",".join(fields))
        path = out_dir / f"robustness_{scheme}.csv"
        path.write_text("\n".join(lines) + "\n")
        paths.append(path)
    return paths


def report(records: Iterable[ExperimentRecord], layout: str, out_dir: str | Path) -> list[Path]:
    """Dispatch on report layout: ``by-scheme`` or ``robustness``."""
    if layout == "by-scheme":
        return report_by_scheme(records, out_dir)
    if layout == "robustness":
        return report_robustness(records, out_dir)
    raise ExperimentError(f"unknown report layout {layout!r}; expected one of {REPORT_LAYOUTS}")
