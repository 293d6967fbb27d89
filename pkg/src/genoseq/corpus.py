"""Loading, validation, splitting, and perturbation of labeled DNA sequence datasets.

Datasets follow the GUE CSV layout: one file per split with a
``sequence,label`` header, one record per line, no quoting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ALPHABET = frozenset("ACGTN")
BASES = "ACGT"

CSV_HEADER = "sequence,label"


class CorpusError(Exception):
    """Base class for dataset loading and perturbation errors."""


class MissingHeaderError(CorpusError):
    pass


class EmptyFileError(CorpusError):
    pass


class BadAlphabetError(CorpusError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class LabelOutOfRangeError(CorpusError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class UnknownTaskError(CorpusError):
    pass


class PerturbationTooLargeError(CorpusError):
    pass


def validate_sequence(seq: str, row: int | None = None) -> str:
    """Check that ``seq`` is a non-empty string over {A,C,G,T,N}."""
    if not seq:
        raise BadAlphabetError(row if row is not None else -1, "empty sequence")
    if not set(seq) <= ALPHABET:
        bad = sorted(set(seq) - ALPHABET)
        raise BadAlphabetError(
            row if row is not None else -1,
            f"sequence contains characters outside ACGTN: {bad}",
        )
    return seq


def load_task_csv(path: str | Path, num_classes: int) -> list[tuple[str, int]]:
    """Load one dataset split from a GUE-layout CSV file.

    Returns the ``(sequence, label)`` records in file order. The first line
    must be exactly ``sequence,label``; rows are comma separated with no
    quoting; ``\\r\\n`` endings are accepted.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise EmptyFileError(f"{path}: file is empty")
    header = lines[0].rstrip("\r")
    if header != CSV_HEADER:
        raise MissingHeaderError(f"{path}: expected header {CSV_HEADER!r}, got {header!r}")
    records = []
    for row, line in enumerate(lines[1:], start=1):
        line = line.rstrip("\r")
        parts = line.split(",")
        if len(parts) != 2:
            raise BadAlphabetError(row, f"expected 2 comma-separated fields, got {len(parts)}")
        seq, label_text = parts
        validate_sequence(seq, row)
        try:
            label = int(label_text)
        except ValueError:
            raise LabelOutOfRangeError(row, f"label {label_text!r} is not an integer") from None
        if not 0 <= label < num_classes:
            raise LabelOutOfRangeError(row, f"label {label} not in [0, {num_classes})")
        records.append((seq, label))
    if not records:
        raise EmptyFileError(f"{path}: no data rows")
    return records


def load_sequences(path: str | Path) -> list[str]:
    """Load just the sequence column of a dataset CSV (labels unchecked)."""
    return [seq for seq, _ in load_task_csv(path, num_classes=2**62)]


def save_task_csv(records: Iterable[tuple[str, int]], path: str | Path) -> None:
    """Write records in the same CSV layout accepted by :func:`load_task_csv`."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for seq, label in records:
            fh.write(f"{seq},{label}\n")


@dataclass
class TaskDataset:
    """One labeled classification dataset with train/dev/test splits."""

    name: str
    species: str
    num_classes: int
    nominal_length: int
    train: list[tuple[str, int]] = field(default_factory=list)
    dev: list[tuple[str, int]] = field(default_factory=list)
    test: list[tuple[str, int]] = field(default_factory=list)
    dataset: str | None = None  # sub-dataset label for multi-dataset tasks

    def split(self, which: str) -> list[tuple[str, int]]:
        if which not in ("train", "dev", "test"):
            raise ValueError(f"unknown split {which!r}")
        return getattr(self, which)


@dataclass(frozen=True)
class RegistryEntry:
    species: str
    task: str
    num_datasets: int
    num_classes: int
    sequence_length: int
    train_n: int
    dev_n: int
    test_n: int


# Task statistics for the seven GUE benchmark task families. Split counts are
# task totals summed over the task's datasets.
REGISTRY: dict[str, RegistryEntry] = {
    "human-cpd": RegistryEntry("Human", "Core Promoter Detection", 3, 2, 70, 94712, 11840, 11840),
    "human-tfp": RegistryEntry("Human", "Transcription Factor Prediction", 5, 2, 100, 128345, 5000, 5000),
    "human-pd": RegistryEntry("Human", "Promoter Detection", 3, 2, 300, 93902, 11840, 11840),
    "human-ssd": RegistryEntry("Human", "Splice Site Prediction", 1, 3, 400, 36496, 4562, 4562),
    "mouse-tfp": RegistryEntry("Mouse", "Transcription Factor Prediction", 5, 2, 100, 80018, 9735, 9735),
    "yeast-emp": RegistryEntry("Yeast", "Epigenetic Marks Prediction", 10, 2, 500, 229885, 28741, 28741),
    "virus-cvc": RegistryEntry("Virus", "Covid Variant Classification", 1, 9, 1000, 73335, 9168, 9166),
}


def registry_entry(name: str) -> RegistryEntry:
    key = name.lower()
    if key not in REGISTRY:
        raise UnknownTaskError(f"task {name!r} is not in the registry; known: {sorted(REGISTRY)}")
    return REGISTRY[key]


def validate_statistics(
    name: str,
    num_classes: int,
    nominal_length: int,
    train_n: int,
    dev_n: int,
    test_n: int,
) -> list[str]:
    """Compare task statistics against the embedded registry.

    Returns a list of human-readable mismatches; empty means pass. Validation
    is advisory: callers may legitimately run on subsets.
    """
    entry = registry_entry(name)
    mismatches = []
    checks = [
        ("num_classes", num_classes, entry.num_classes),
        ("nominal_length", nominal_length, entry.sequence_length),
        ("train size", train_n, entry.train_n),
        ("dev size", dev_n, entry.dev_n),
        ("test size", test_n, entry.test_n),
    ]
    for what, got, want in checks:
        if got != want:
            mismatches.append(f"{name}: {what} is {got}, registry says {want}")
    return mismatches


def validate_against_registry(datasets: TaskDataset | Sequence[TaskDataset]) -> list[str]:
    """Validate one task's loaded dataset(s) against the embedded registry.

    Multi-dataset tasks pass all their datasets together; split sizes are
    summed before comparison with the task-level registry row.
    """
    if isinstance(datasets, TaskDataset):
        datasets = [datasets]
    if not datasets:
        raise ValueError("no datasets given")
    names = {d.name.lower() for d in datasets}
    if len(names) != 1:
        raise ValueError(f"datasets belong to different tasks: {sorted(names)}")
    name = datasets[0].name
    entry = registry_entry(name)
    mismatches = []
    if len(datasets) != entry.num_datasets:
        mismatches.append(
            f"{name}: {len(datasets)} datasets loaded, registry says {entry.num_datasets}"
        )
    for d in datasets:
        if d.num_classes != entry.num_classes:
            mismatches.append(f"{name}: num_classes is {d.num_classes}, registry says {entry.num_classes}")
        if d.nominal_length != entry.sequence_length:
            mismatches.append(f"{name}: nominal_length is {d.nominal_length}, registry says {entry.sequence_length}")
    for which, want in (("train", entry.train_n), ("dev", entry.dev_n), ("test", entry.test_n)):
        got = sum(len(d.split(which)) for d in datasets)
        if got != want:
            mismatches.append(f"{name}: {which} size is {got}, registry says {want}")
    return mismatches


def registry_table_csv() -> str:
    """Render the embedded registry as CSV (one row per task)."""
    lines = ["name,species,task,num_datasets,num_classes,sequence_length,train_n,dev_n,test_n"]
    for name, e in REGISTRY.items():
        lines.append(
            f"{name},{e.species},{e.task},{e.num_datasets},{e.num_classes},"
            f"{e.sequence_length},{e.train_n},{e.dev_n},{e.test_n}"
        )
    return "\n".join(lines) + "\n"


def load_task(
    task_dir: str | Path,
    name: str | None = None,
    num_classes: int | None = None,
    nominal_length: int | None = None,
) -> list[TaskDataset]:
    """Load every dataset of a task from a directory tree.

    ``task_dir`` either contains ``train.csv``/``dev.csv``/``test.csv``
    directly (single-dataset task) or one subdirectory per dataset, each with
    the three split files. Task metadata comes from, in order of precedence:
    explicit arguments, a ``meta.json`` file in ``task_dir``, or the embedded
    registry keyed by the directory name.
    """
    task_dir = Path(task_dir)
    if not task_dir.is_dir():
        raise CorpusError(f"task directory {task_dir} does not exist")
    name = name or task_dir.name
    species = "unknown"
    meta_path = task_dir / "meta.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        name = meta.get("name", name)
        species = meta.get("species", species)
        num_classes = num_classes or meta.get("num_classes")
        nominal_length = nominal_length or meta.get("nominal_length")
    if num_classes is None or nominal_length is None:
        entry = registry_entry(name)
        species = entry.species
        num_classes = num_classes or entry.num_classes
        nominal_length = nominal_length or entry.sequence_length

    def load_one(d: Path, dataset: str | None) -> TaskDataset:
        splits = {}
        for which in ("train", "dev", "test"):
            f = d / f"{which}.csv"
            if not f.exists():
                raise CorpusError(f"missing split file {f}")
            splits[which] = load_task_csv(f, num_classes)
        return TaskDataset(
            name=name,
            species=species,
            num_classes=num_classes,
            nominal_length=nominal_length,
            dataset=dataset,
            **splits,
        )

    if (task_dir / "train.csv").exists():
        return [load_one(task_dir, None)]
    subdirs = sorted(d for d in task_dir.iterdir() if d.is_dir() and (d / "train.csv").exists())
    if not subdirs:
        raise CorpusError(f"{task_dir} contains neither split files nor dataset subdirectories")
    return [load_one(d, d.name) for d in subdirs]


@dataclass(frozen=True)
class Original:
    """Leave sequences unchanged."""


@dataclass(frozen=True)
class EndSubstitution:
    """Replace the first and last ``n_per_end`` bases with uniform random bases.

    Replacements are drawn from all four bases, so a draw may repeat the
    original base (expected change rate 3/4 per touched position). When the
    two ends overlap the tail draw is applied last.
    """

    n_per_end: int = 3

    def __post_init__(self):
        if self.n_per_end < 0:
            raise ValueError("n_per_end must be >= 0")


@dataclass(frozen=True)
class HeadDeleteTailFill:
    """Delete the first ``n`` bases and fill the tail with uniform random bases."""

    n: int = 3

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be >= 0")


PerturbationKind = Original | EndSubstitution | HeadDeleteTailFill

PERTURBATION_NAMES = ("original", "end_substitution", "head_delete_tail_fill")


def perturbation_name(kind: PerturbationKind) -> str:
    if isinstance(kind, Original):
        return "original"
    if isinstance(kind, EndSubstitution):
        return "end_substitution"
    return "head_delete_tail_fill"


def default_perturbations(n: int = 3) -> tuple[PerturbationKind, ...]:
    """The three robustness evaluation settings."""
    return (Original(), EndSubstitution(n), HeadDeleteTailFill(n))


def _random_bases(rng: np.random.Generator, n: int) -> list[str]:
    return [BASES[i] for i in rng.integers(0, 4, size=n)]


def perturb(seq: str, kind: PerturbationKind, rng: np.random.Generator) -> str:
    """Apply one perturbation to a sequence; length is always preserved.

    Perturbation never introduces ``N``: fills and substitutions are drawn
    uniformly from {A,C,G,T}.
    """
    if isinstance(kind, Original):
        return seq
    n = kind.n_per_end if isinstance(kind, EndSubstitution) else kind.n
    if n >= len(seq):
        raise PerturbationTooLargeError(
            f"perturbation parameter {n} must be smaller than sequence length {len(seq)}"
        )
    if n == 0:
        return seq
    chars = list(seq)
    if isinstance(kind, EndSubstitution):
        chars[:n] = _random_bases(rng, n)
        chars[len(chars) - n :] = _random_bases(rng, n)
    else:  # HeadDeleteTailFill
        chars = chars[n:] + _random_bases(rng, n)
    return "".join(chars)


def perturb_split(
    records: Sequence[tuple[str, int]],
    kind: PerturbationKind,
    rng: np.random.Generator,
) -> list[tuple[str, int]]:
    """Perturb every sequence of a split in order with one random stream."""
    return [(perturb(seq, kind, rng), label) for seq, label in records]
