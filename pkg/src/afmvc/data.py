"""Multi-view datasets: containers, CSV/manifest ingestion, view synthesis, batching."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .errors import BoundsError, ParseError, StructuralError

TRANSFORMS = {
    "sigmoid": lambda a: 1.0 / (1.0 + np.exp(-a)),
    "relu": lambda a: np.maximum(a, 0.0),
}


@dataclass
class MultiViewDataset:
    views: list[np.ndarray]
    sensitive: np.ndarray
    labels: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if len(self.views) < 1:
            raise StructuralError("a dataset needs at least one view")
        self.views = [np.ascontiguousarray(v, dtype=np.float64) for v in self.views]
        n = self.views[0].shape[0]
        if n < 1:
            raise StructuralError("a dataset needs at least one instance")
        for v, x in enumerate(self.views):
            if x.ndim != 2:
                raise StructuralError(f"view {v} is not a matrix (ndim={x.ndim})")
            if x.shape[0] != n:
                raise StructuralError(f"view {v} has {x.shape[0]} rows, view 0 has {n}")
            if not np.all(np.isfinite(x)):
                raise StructuralError(f"view {v} contains non-finite values")
        self.sensitive = np.asarray(self.sensitive, dtype=np.int64).reshape(-1)
        if self.sensitive.shape[0] != n:
            raise StructuralError(f"sensitive vector has {self.sensitive.shape[0]} entries, expected {n}")
        if np.any(self.sensitive < 0):
            raise StructuralError("sensitive group ids must be non-negative")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if self.labels.shape[0] != n:
                raise StructuralError(f"label vector has {self.labels.shape[0]} entries, expected {n}")

    @property
    def n_instances(self) -> int:
        return self.views[0].shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def view_dims(self) -> list[int]:
        return [x.shape[1] for x in self.views]

    @property
    def n_groups(self) -> int:
        return int(self.sensitive.max()) + 1

    def subset(self, index) -> "MultiViewDataset":
        index = np.asarray(index)
        return MultiViewDataset(
            views=[x[index] for x in self.views],
            sensitive=self.sensitive[index],
            labels=None if self.labels is None else self.labels[index],
            name=self.name,
        )

    def standardized(self) -> "MultiViewDataset":
        return MultiViewDataset([standardize(x) for x in self.views], self.sensitive, self.labels, self.name)


@dataclass
class DatasetManifest:
    view_paths: list[Path]
    n_clusters: int
    labels_path: Path | None = None
    sensitive_path: Path | None = None
    sensitive_source: str = "file"
    bernoulli_p: float = 0.5
    subsample: int | None = None
    seed: int = 0
    header: bool = False
    name: str = ""

    def __post_init__(self):
        self.view_paths = [Path(p) for p in self.view_paths]
        if not self.view_paths:
            raise StructuralError("manifest lists no view files")
        if self.n_clusters < 2:
            raise BoundsError(f"n_clusters must be >= 2, got {self.n_clusters}")
        if not 0.0 < self.bernoulli_p < 1.0:
            raise BoundsError(f"bernoulli_p must lie in (0, 1), got {self.bernoulli_p}")
        if self.sensitive_source not in ("file", "synthetic"):
            raise StructuralError(f"unknown sensitive_source {self.sensitive_source!r}")
        if self.sensitive_source == "file" and self.sensitive_path is None:
            raise StructuralError("sensitive_source 'file' requires sensitive_path")
        self.labels_path = None if self.labels_path is None else Path(self.labels_path)
        self.sensitive_path = None if self.sensitive_path is None else Path(self.sensitive_path)

    @classmethod
    def from_file(cls, path) -> "DatasetManifest":
        """Read a YAML (or JSON, which is valid YAML) manifest; relative paths resolve against its folder."""
        path = Path(path)
        with open(path) as fh:
            tree = yaml.safe_load(fh)
        if not isinstance(tree, dict):
            raise StructuralError(f"{path}: manifest must be a mapping")
        base = path.parent

        def resolve(p):
            if p is None:
                return None
            p = Path(p)
            return p if p.is_absolute() else base / p

        known = {f for f in cls.__dataclass_fields__}
        unknown = set(tree) - known
        if unknown:
            raise StructuralError(f"{path}: unknown manifest keys {sorted(unknown)}")
        tree = dict(tree)
        tree["view_paths"] = [resolve(p) for p in tree.get("view_paths", [])]
        tree["labels_path"] = resolve(tree.get("labels_path"))
        tree["sensitive_path"] = resolve(tree.get("sensitive_path"))
        return cls(**tree)

    def to_mapping(self, relative_to=None) -> dict:
        def rel(p):
            if p is None:
                return None
            if relative_to is not None:
                try:
                    return str(Path(p).relative_to(relative_to))
                except ValueError:
                    pass
            return str(p)

        return {
            "name": self.name,
            "view_paths": [rel(p) for p in self.view_paths],
            "labels_path": rel(self.labels_path),
            "sensitive_path": rel(self.sensitive_path),
            "sensitive_source": self.sensitive_source,
            "bernoulli_p": self.bernoulli_p,
            "n_clusters": self.n_clusters,
            "subsample": self.subsample,
            "seed": self.seed,
            "header": self.header,
        }

    def write(self, path) -> None:
        path = Path(path)
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_mapping(relative_to=path.parent), fh, sort_keys=False)


def read_numeric_csv(path, header: bool = False) -> np.ndarray:
    """Parse a comma-separated numeric table, reporting the 1-based row/column of the first bad cell."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        for r, row in enumerate(csv.reader(fh), start=1):
            if header and r == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            try:
                values = [float(c) for c in row]
            except ValueError:
                c = next(i for i, cell in enumerate(row) if not _is_float(cell))
                raise ParseError(path, r, c + 1, row[c]) from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise StructuralError(f"{path}: row {r} has {len(values)} columns, expected {width}")
            for c, v in enumerate(values):
                if not math.isfinite(v):
                    raise ParseError(path, r, c + 1, row[c])
            rows.append(values)
    if not rows:
        raise StructuralError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def _is_float(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_id_csv(path, header: bool = False) -> np.ndarray:
    table = read_numeric_csv(path, header=header)
    if table.shape[1] != 1:
        raise StructuralError(f"{path}: expected a single column, found {table.shape[1]}")
    ids = table[:, 0]
    if np.any(ids < 0) or np.any(ids != np.round(ids)):
        raise StructuralError(f"{path}: ids must be non-negative integers")
    return ids.astype(np.int64)


def write_matrix_csv(path, x: np.ndarray) -> None:
    # 17 significant digits round-trip any float64 exactly
    np.savetxt(path, np.asarray(x), delimiter=",", fmt="%.17g")


def write_ids_csv(path, ids: np.ndarray) -> None:
    np.savetxt(path, np.asarray(ids, dtype=np.int64).reshape(-1, 1), delimiter=",", fmt="%d")


def load_dataset(manifest: DatasetManifest) -> MultiViewDataset:
    for p in [*manifest.view_paths, manifest.labels_path, manifest.sensitive_path]:
        if p is not None and not Path(p).exists():
            raise FileNotFoundError(p)
    views = [read_numeric_csv(p, header=manifest.header) for p in manifest.view_paths]
    n = views[0].shape[0]
    for p, x in zip(manifest.view_paths, views):
        if x.shape[0] != n:
            raise StructuralError(f"{p} has {x.shape[0]} rows, {manifest.view_paths[0]} has {n}")
    labels = None
    if manifest.labels_path is not None:
        labels = read_id_csv(manifest.labels_path, header=manifest.header)
        if labels.shape[0] != n:
            raise StructuralError(f"{manifest.labels_path} has {labels.shape[0]} rows, views have {n}")
    if manifest.sensitive_source == "file":
        sensitive = read_id_csv(manifest.sensitive_path, header=manifest.header)
        if sensitive.shape[0] != n:
            raise StructuralError(f"{manifest.sensitive_path} has {sensitive.shape[0]} rows, views have {n}")
    else:
        sensitive = None

    index = np.arange(n)
    if manifest.subsample is not None:
        if manifest.subsample > n:
            raise BoundsError(f"subsample {manifest.subsample} exceeds {n} available rows")
        if manifest.subsample < 1:
            raise BoundsError("subsample must be positive")
        rng = np.random.default_rng(manifest.seed)
        index = np.sort(rng.choice(n, size=manifest.subsample, replace=False))
    if sensitive is None:
        sensitive = synthesize_sensitive(len(index), manifest.bernoulli_p, manifest.seed)
    else:
        sensitive = sensitive[index]
    return MultiViewDataset(
        views=[x[index] for x in views],
        sensitive=sensitive,
        labels=None if labels is None else labels[index],
        name=manifest.name,
    )


def write_dataset(dataset: MultiViewDataset, directory, n_clusters: int, stem: str | None = None) -> Path:
    """Write views, labels and sensitive ids as CSV plus a manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = stem or dataset.name or "dataset"
    view_paths = []
    for v, x in enumerate(dataset.views):
        p = directory / f"{stem}_view{v}.csv"
        write_matrix_csv(p, x)
        view_paths.append(p)
    sens_path = directory / f"{stem}_sensitive.csv"
    write_ids_csv(sens_path, dataset.sensitive)
    labels_path = None
    if dataset.labels is not None:
        labels_path = directory / f"{stem}_labels.csv"
        write_ids_csv(labels_path, dataset.labels)
    manifest = DatasetManifest(
        view_paths=view_paths,
        n_clusters=n_clusters,
        labels_path=labels_path,
        sensitive_path=sens_path,
        sensitive_source="file",
        name=dataset.name or stem,
    )
    path = directory / f"{stem}_manifest.yaml"
    manifest.write(path)
    return path


def standardize(x: np.ndarray) -> np.ndarray:
    """Column-wise z-score with population std; constant columns map to zero."""
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=0)
    centered = x - mean
    std = centered.std(axis=0)
    # spread at rounding level relative to the column's magnitude counts as constant
    scale = np.abs(x).max(axis=0) if x.size else 0.0
    constant = std <= 1e-12 * np.maximum(scale, 1.0)
    return np.where(constant, 0.0, centered / np.where(constant, 1.0, std))


def synthesize_views(x: np.ndarray, transforms: Sequence[str]) -> list[np.ndarray]:
    """Derive one view per transform from the standardized table `x`."""
    if len(transforms) == 0:
        raise StructuralError("at least one transform is required")
    unknown = [t for t in transforms if t not in TRANSFORMS]
    if unknown:
        raise StructuralError(f"unknown transforms {unknown}; choose from {sorted(TRANSFORMS)}")
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise StructuralError("input table contains non-finite values")
    z = standardize(x)
    return [TRANSFORMS[t](z) for t in transforms]


def synthesize_sensitive(n: int, p: float, seed: int) -> np.ndarray:
    if n < 1:
        raise BoundsError(f"n must be >= 1, got {n}")
    if not 0.0 < p < 1.0:
        raise BoundsError(f"p must lie in (0, 1), got {p}")
    rng = np.random.default_rng(seed)
    return (rng.random(n) < p).astype(np.int64)


@dataclass
class BatchPlan:
    batch_size: int
    order: np.ndarray
    batches: list[np.ndarray] = field(init=False)

    def __post_init__(self):
        self.batches = [self.order[i : i + self.batch_size] for i in range(0, len(self.order), self.batch_size)]

    def __iter__(self):
        return iter(self.batches)

    def __len__(self):
        return len(self.batches)


def make_batches(n: int, batch_size: int, seed) -> BatchPlan:
    """Shuffle 0..n-1 with `seed` (an int or a numpy Generator) and chunk it."""
    if not 1 <= batch_size <= n:
        raise BoundsError(f"batch_size must lie in [1, {n}], got {batch_size}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return BatchPlan(batch_size, rng.permutation(n))
