"""Core data types for collections of sample sets, manifest I/O, and fold splitting.

A dataset is a JSON manifest plus one CSV file per group:

    {"groups": [{"file": "g0.csv", "label": 0, "partition": "train"}, ...]}

CSV files hold one point per row, comma-separated floats, no header.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

TRAIN = "train"
TEST = "test"


@dataclass(frozen=True)
class SampleSet:
    """One group of points, treated as an i.i.d. sample from an unknown density.

    `points` is an (n, d) float array; it is never mutated after construction.
    """

    points: np.ndarray
    id: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise DataError(f"sample set {self.id!r}: points must be 2-d, got shape {pts.shape}")
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise DataError(f"sample set {self.id!r}: need at least one point and one dimension")
        if not np.isfinite(pts).all():
            row = int(np.flatnonzero(~np.isfinite(pts).all(axis=1))[0])
            raise DataError(f"sample set {self.id!r}: non-finite value at row {row}")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of sample sets with optional labels and partition flags.

    `label_kind` is "class" (contiguous ints 0..r-1), "scalar" (regression
    targets), or None. `class_names` maps class index back to the original
    string label when the manifest used strings.
    """

    sets: tuple[SampleSet, ...]
    labels: np.ndarray | None = None
    label_kind: str | None = None
    partition: tuple[str | None, ...] | None = None
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        sets = tuple(self.sets)
        if not sets:
            raise DataError("dataset has no sample sets")
        d = sets[0].d
        for s in sets:
            if s.d != d:
                raise DataError(
                    f"dimension mismatch: set {sets[0].id!r} has d={d} but {s.id!r} has d={s.d}"
                )
        ids = [s.id for s in sets]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise DataError(f"duplicate sample-set id {dup!r}")
        object.__setattr__(self, "sets", sets)

        if self.labels is not None:
            labels = np.asarray(self.labels)
            if len(labels) != len(sets):
                raise DataError("labels length does not match number of sets")
            if self.label_kind == "class":
                labels = labels.astype(np.int64)
                r = labels.max() + 1
                present = set(labels.tolist())
                if present != set(range(r)):
                    raise DataError(
                        f"class labels must form a contiguous set 0..r-1, got {sorted(present)}"
                    )
            elif self.label_kind == "scalar":
                labels = labels.astype(np.float64)
                if not np.isfinite(labels).all():
                    raise DataError("scalar labels must be finite")
            else:
                raise DataError(f"unknown label kind {self.label_kind!r}")
            object.__setattr__(self, "labels", labels)
        elif self.label_kind is not None:
            raise DataError("label_kind given without labels")

        if self.partition is not None:
            part = tuple(self.partition)
            if len(part) != len(sets):
                raise DataError("partition length does not match number of sets")
            for p in part:
                if p not in (TRAIN, TEST, None):
                    raise DataError(f"partition flag must be 'train', 'test', or null, got {p!r}")
            object.__setattr__(self, "partition", part)

    @property
    def T(self) -> int:
        return len(self.sets)

    @property
    def d(self) -> int:
        return self.sets[0].d

    @property
    def n_classes(self) -> int:
        if self.label_kind != "class":
            raise DataError("dataset has no class labels")
        return int(self.labels.max()) + 1

    def train_test_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """Indices flagged train/test in the manifest; errors if any flag is missing."""
        if self.partition is None or any(p is None for p in self.partition):
            raise DataError("dataset has no complete train/test partition")
        part = np.array([p == TRAIN for p in self.partition])
        return np.flatnonzero(part), np.flatnonzero(~part)


def _read_group_csv(path: Path, set_id: str) -> np.ndarray:
    try:
        pts = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except OSError as e:
        raise DataError(f"cannot read group file {path}: {e}") from e
    except ValueError as e:
        raise DataError(f"group file {path} is not valid CSV: {e}") from e
    if pts.size == 0:
        raise DataError(f"group file {path} is empty")
    if not np.isfinite(pts).all():
        row = int(np.flatnonzero(~np.isfinite(pts).all(axis=1))[0])
        raise DataError(f"non-finite value in set {set_id!r} at row {row} ({path})")
    return pts


def load_dataset(manifest_path: str | Path) -> Dataset:
    """Load a dataset from a JSON manifest; group order follows the manifest."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise DataError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"manifest {manifest_path} is not valid JSON: {e}") from e
    groups = manifest.get("groups")
    if not isinstance(groups, list) or not groups:
        raise DataError(f"manifest {manifest_path} has no 'groups' list")

    base = manifest_path.parent
    sets, raw_labels, partition = [], [], []
    for g in groups:
        if not isinstance(g, dict) or "file" not in g:
            raise DataError("each manifest group needs a 'file' entry")
        path = base / g["file"]
        if not path.is_file():
            raise DataError(f"group file not found: {path}")
        set_id = Path(g["file"]).stem
        sets.append(SampleSet(_read_group_csv(path, set_id), id=set_id))
        raw_labels.append(g.get("label"))
        partition.append(g.get("partition"))

    labels, label_kind, class_names = _interpret_labels(raw_labels)
    if all(p is None for p in partition):
        partition = None
    return Dataset(
        sets=tuple(sets),
        labels=labels,
        label_kind=label_kind,
        partition=tuple(partition) if partition is not None else None,
        class_names=class_names,
    )


def _interpret_labels(raw):
    """Map manifest labels to (array, kind, class_names).

    All-null -> no labels. Strings are class names, mapped to 0..r-1 in sorted
    order. Integers are class indices and must already be contiguous from 0.
    Any float makes the labels scalar regression targets.
    """
    if all(v is None for v in raw):
        return None, None, None
    if any(v is None for v in raw):
        raise DataError("labels must be present for all groups or for none")
    if any(isinstance(v, bool) for v in raw):
        raise DataError("boolean labels are not supported")
    if all(isinstance(v, str) for v in raw):
        names = tuple(sorted(set(raw)))
        index = {name: i for i, name in enumerate(names)}
        return np.array([index[v] for v in raw], dtype=np.int64), "class", names
    if any(isinstance(v, str) for v in raw):
        raise DataError("labels mix strings and numbers")
    if all(isinstance(v, int) for v in raw):
        return np.array(raw, dtype=np.int64), "class", None
    return np.array(raw, dtype=np.float64), "scalar", None


def save_dataset(dataset: Dataset, out_dir: str | Path, manifest_name: str = "manifest.json") -> Path:
    """Write one CSV per set plus a manifest; floats round-trip bit-for-bit."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups = []
    for i, s in enumerate(dataset.sets):
        fname = f"{s.id or f'set-{i:04d}'}.csv"
        lines = [",".join(repr(float(v)) for v in row) for row in s.points]
        (out_dir / fname).write_text("\n".join(lines) + "\n")
        label = None
        if dataset.labels is not None:
            if dataset.label_kind == "class" and dataset.class_names is not None:
                label = dataset.class_names[int(dataset.labels[i])]
            elif dataset.label_kind == "class":
                label = int(dataset.labels[i])
            else:
                label = float(dataset.labels[i])
        groups.append(
            {
                "file": fname,
                "label": label,
                "partition": dataset.partition[i] if dataset.partition else None,
            }
        )
    manifest_path = out_dir / manifest_name
    manifest_path.write_text(json.dumps({"groups": groups}, indent=2) + "\n")
    return manifest_path


def stratified_folds(labels: np.ndarray | None, n_items: int, n_folds: int, seed: int):
    """Deal items into `n_folds` folds, class-stratified when labels are given.

    Returns a list of index arrays (the folds). Deterministic given the seed:
    each class's members are shuffled and dealt one at a time to the currently
    smallest fold (ties broken by fold index).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    folds = [[] for _ in range(n_folds)]
    sizes = np.zeros(n_folds, dtype=np.int64)
    if labels is None:
        class_groups = [np.arange(n_items)]
    else:
        class_groups = [np.flatnonzero(labels == c) for c in np.unique(labels)]
    for members in class_groups:
        for idx in rng.permutation(members):
            f = int(np.argmin(sizes))
            folds[f].append(int(idx))
            sizes[f] += 1
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def split_folds(dataset: Dataset, n_folds: int, seed: int):
    """Cross-validation folds over a dataset's sets.

    Returns a list of (train_indices, test_indices) pairs, one per fold.
    Folds are disjoint, cover all indices, and are stratified by class when
    class labels exist.
    """
    if n_folds < 2:
        raise ConfigError(f"n_folds must be at least 2, got {n_folds}")
    if n_folds > dataset.T:
        raise ConfigError(f"n_folds={n_folds} exceeds the number of sets ({dataset.T})")
    labels = dataset.labels if dataset.label_kind == "class" else None
    if labels is not None:
        counts = np.bincount(labels)
        if counts.min() < n_folds:
            short = int(np.argmin(counts))
            raise DataError(
                f"class {short} has only {counts.min()} sets; need at least {n_folds} per class"
            )
    folds = stratified_folds(labels, dataset.T, n_folds, seed)
    everything = np.arange(dataset.T)
    out = []
    for f in folds:
        mask = np.ones(dataset.T, dtype=bool)
        mask[f] = False
        out.append((everything[mask], f))
    return out
