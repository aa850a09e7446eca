"""Multiview feature data: file formats, normalization, splits, synthesis."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, FormatError, ShapeError

LPMV_MAGIC = b"LPMV"
LPMV_VERSION = 1
_LPMV_HEADER = struct.Struct("<4sIQQ")


def as_feature_matrix(x, name: str = "features") -> np.ndarray:
    """Validate and return ``x`` as a finite 2-D float64 array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"{name}: expected a 2-D matrix, got shape {x.shape}")
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise ShapeError(f"{name}: empty matrix {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name}: contains NaN or Inf")
    return x


@dataclass(frozen=True)
class MultiviewDataset:
    """Several feature views of the same ``n`` samples.

    ``ids`` default to ``0..n-1``; subsets keep the ids of the parent so that
    rows can be traced back after a split.
    """

    views: tuple[np.ndarray, ...]
    labels: np.ndarray | None = None
    ids: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        views = tuple(as_feature_matrix(v, f"view {m}") for m, v in enumerate(self.views))
        if not views:
            raise ShapeError("a dataset needs at least one view")
        n = views[0].shape[0]
        for m, v in enumerate(views):
            if v.shape[0] != n:
                raise ShapeError(f"view {m} has {v.shape[0]} rows, view 0 has {n}")
        object.__setattr__(self, "views", views)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64).ravel()
            if labels.shape[0] != n:
                raise ShapeError(f"{labels.shape[0]} labels for {n} samples")
            object.__setattr__(self, "labels", labels)
        ids = np.arange(n, dtype=np.int64) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if ids.shape != (n,):
            raise ShapeError(f"{ids.shape[0]} ids for {n} samples")
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.views[0].shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def dims(self) -> list[int]:
        return [v.shape[1] for v in self.views]

    def take(self, rows) -> "MultiviewDataset":
        rows = np.asarray(rows, dtype=np.int64)
        labels = None if self.labels is None else self.labels[rows]
        return MultiviewDataset(tuple(v[rows] for v in self.views), labels, self.ids[rows])

    def select_views(self, which: Sequence[int]) -> "MultiviewDataset":
        return MultiviewDataset(tuple(self.views[m] for m in which), self.labels, self.ids)


# --------------------------------------------------------------------------
# file formats


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("csv", "lpmv"):
            raise ConfigError(f"unknown feature format {fmt!r}")
        return fmt
    return "csv" if path.suffix.lower() in (".csv", ".txt") else "lpmv"


def load_features(path, fmt: str | None = None) -> np.ndarray:
    """Read a feature matrix from CSV or the binary ``lpmv`` format.

    The format is taken from the file suffix when ``fmt`` is None
    (``.csv``/``.txt`` are CSV, anything else is lpmv).
    """
    path = Path(path)
    fmt = _infer_format(path, fmt)
    if fmt == "csv":
        x = _read_csv(path)
    else:
        x = _read_lpmv(path)
    return as_feature_matrix(x, str(path))


def _read_csv(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            tokens = line.split(",")
            if width is None:
                width = len(tokens)
            elif len(tokens) != width:
                raise FormatError(f"{path}:{lineno}: expected {width} fields, got {len(tokens)}")
            try:
                rows.append([float(t) for t in tokens])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise FormatError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def _read_lpmv(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < _LPMV_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, d = _LPMV_HEADER.unpack_from(raw)
    if magic != LPMV_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != LPMV_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    body = raw[_LPMV_HEADER.size:]
    if len(body) != 8 * n * d:
        raise FormatError(f"{path}: expected {8 * n * d} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape(n, d).astype(np.float64)


def write_features(path, x, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = _infer_format(path, fmt)
    x = as_feature_matrix(x)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with open(path, "w", encoding="ascii") as fh:
            for row in x:
                fh.write(",".join(repr(float(v)) for v in row))
                fh.write("\n")
    else:
        n, d = x.shape
        with open(path, "wb") as fh:
            fh.write(_LPMV_HEADER.pack(LPMV_MAGIC, LPMV_VERSION, n, d))
            fh.write(np.ascontiguousarray(x, dtype="<f8").tobytes())


def load_labels(path) -> np.ndarray:
    labels = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: not an integer label: {line!r}") from None
    return np.array(labels, dtype=np.int64)


def write_labels(path, labels) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{int(v)}\n" for v in labels), encoding="ascii")


def load_dataset(view_paths: Sequence, labels_path=None) -> MultiviewDataset:
    views = tuple(load_features(p) for p in view_paths)
    labels = None if labels_path is None else load_labels(labels_path)
    return MultiviewDataset(views, labels)


# --------------------------------------------------------------------------
# normalization


@dataclass(frozen=True)
class NormStats:
    """Per-column affine transform ``(x - mean) / scale``."""

    mean: np.ndarray
    scale: np.ndarray

    def apply(self, x) -> np.ndarray:
        x = as_feature_matrix(x)
        if x.shape[1] != self.mean.shape[0]:
            raise ShapeError(f"expected {self.mean.shape[0]} columns, got {x.shape[1]}")
        return (x - self.mean) / self.scale


def normalize_view(x) -> tuple[np.ndarray, NormStats]:
    """Center every column and divide by its (population) standard deviation.

    Zero-variance columns keep scale 1, so they come out as all zeros.
    """
    x = as_feature_matrix(x)
    if x.shape[0] < 2:
        raise ValueError("normalization needs at least two samples")
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale <= 1e-12 * np.maximum(1.0, np.abs(mean))] = 1.0
    stats = NormStats(mean, scale)
    return stats.apply(x), stats


# --------------------------------------------------------------------------
# splitting


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    stratified: bool = False

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


def split_indices(n: int, spec: SplitSpec, labels=None) -> tuple[np.ndarray, np.ndarray]:
    """Sorted (train, query) row indices for a dataset of ``n`` samples."""
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        if labels is None:
            raise ConfigError("stratified split requires labels")
        labels = np.asarray(labels)
        train = []
        for c in np.unique(labels):
            members = np.flatnonzero(labels == c)
            members = members[rng.permutation(members.size)]
            train.append(members[: int(round(spec.train_fraction * members.size))])
        train = np.concatenate(train)
    else:
        perm = rng.permutation(n)
        train = perm[: int(round(spec.train_fraction * n))]
    mask = np.zeros(n, dtype=bool)
    mask[train] = True
    return np.flatnonzero(mask), np.flatnonzero(~mask)


def split(ds: MultiviewDataset, spec: SplitSpec) -> tuple[MultiviewDataset, MultiviewDataset]:
    train, query = split_indices(ds.n, spec, ds.labels)
    return ds.take(train), ds.take(query)


# --------------------------------------------------------------------------
# synthetic data


def synth_multiview(
    n: int,
    n_clusters: int,
    dims: Sequence[int],
    noise: float = 0.1,
    seed: int = 0,
    latent_dim: int | None = None,
) -> MultiviewDataset:
    """Clustered data seen through several random linear views.

    Cluster centers are orthonormal directions in a ``k``-dimensional latent
    space (pairwise distance sqrt(2)). Each latent sample is its center plus
    ``noise``-scaled Gaussian jitter shared by all views. View ``m`` maps the
    latent sample through its own random ``k x d_m`` matrix and adds
    independent Gaussian noise of standard deviation ``noise * sqrt(d_m / k)``;
    mapped back to the latent space that noise is about as large as the
    shared jitter, so every view is imperfect on its own and views carry
    complementary information. Labels are cluster ids in balanced proportions.
    """
    dims = [int(d) for d in dims]
    if n_clusters < 2 or n < n_clusters:
        raise ConfigError(f"need n >= n_clusters >= 2, got n={n}, n_clusters={n_clusters}")
    if not dims or min(dims) < 2:
        raise ConfigError(f"every view dimension must be >= 2, got {dims}")
    if noise < 0:
        raise ConfigError("noise must be non-negative")
    k = latent_dim or n_clusters
    if k < n_clusters:
        raise ConfigError("latent_dim must be at least n_clusters")
    rng = np.random.default_rng(seed)
    frame, _ = np.linalg.qr(rng.standard_normal((k, k)))
    centers = frame[:n_clusters]
    labels = np.arange(n) % n_clusters
    labels = labels[rng.permutation(n)]
    latent = centers[labels] + noise * rng.standard_normal((n, k))
    views = []
    for d in dims:
        embed = rng.standard_normal((k, d)) / np.sqrt(k)
        views.append(latent @ embed + noise * np.sqrt(d / k) * rng.standard_normal((n, d)))
    return MultiviewDataset(tuple(views), labels)
