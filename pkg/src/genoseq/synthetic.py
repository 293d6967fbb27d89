"""Synthetic planted-motif classification tasks for self-contained experiments."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .corpus import BASES, TaskDataset, save_task_csv

DEFAULT_MOTIF = "TATAAT"


def _random_background(rng: np.random.Generator, length: int, forbidden: str) -> str:
    # rejection-sample so negatives are genuinely motif-free
    while True:
        seq = "".join(BASES[i] for i in rng.integers(0, 4, size=length))
        if forbidden not in seq:
            return seq


def _make_split(
    rng: np.random.Generator, n: int, length: int, motif: str
) -> list[tuple[str, int]]:
    labels = rng.integers(0, 2, size=n)
    records = []
    for label in labels:
        seq = _random_background(rng, length, motif)
        if label == 1:
            offset = int(rng.integers(0, length - len(motif) + 1))
            seq = seq[:offset] + motif + seq[offset + len(motif) :]
        records.append((seq, int(label)))
    return records


def make_motif_task(
    n_train: int = 2000,
    n_dev: int = 500,
    n_test: int = 500,
    length: int = 200,
    motif: str = DEFAULT_MOTIF,
    seed: int = 0,
    name: str = "synthetic-motif",
) -> TaskDataset:
    """Binary task: does the sequence contain ``motif``?

    Positives get the motif written over a uniform random background at a
    uniform random offset (length is preserved); negative backgrounds are
    rejection-sampled to exclude the motif entirely. Fully determined by the
    seed.
    """
    if length <= len(motif):
        raise ValueError("sequence length must exceed the motif length")
    rng = np.random.default_rng(seed)
    return TaskDataset(
        name=name,
        species="synthetic",
        num_classes=2,
        nominal_length=length,
        train=_make_split(rng, n_train, length, motif),
        dev=_make_split(rng, n_dev, length, motif),
        test=_make_split(rng, n_test, length, motif),
    )


def write_task_dir(dataset: TaskDataset, task_dir: str | Path) -> Path:
    """Materialize a TaskDataset as a loadable task directory."""
    task_dir = Path(task_dir)
    task_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "name": dataset.name,
        "species": dataset.species,
        "num_classes": dataset.num_classes,
        "nominal_length": dataset.nominal_length,
    }
    (task_dir / "meta.json").write_text(json.dumps(meta, indent=1) + "\n")
    for which in ("train", "dev", "test"):
        save_task_csv(dataset.split(which), task_dir / f"{which}.csv")
    return task_dir
