"""Datasets of node time series: disk format, synthetic generation, sampling, splits.

On-disk layout of a dataset directory::

    manifest.json          {"num_nodes", "num_timepoints", "num_subjects", "label_map", "seed", "subjects"}
    subjects/<id>.csv      P rows x T columns, headerless decimal floats
    labels.csv             "id,label" rows (optional)
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.model_selection import StratifiedKFold

from .graph import ConnectivityGraph, normalize_adjacency, pearson_connectivity


class DatasetError(ValueError):
    """A dataset directory or array failed validation."""


@dataclass
class TimeSeriesDataset:
    """Subjects with node x time series, optional binary labels and derived graphs."""

    ids: list[str]
    series: np.ndarray  # (N, P, T)
    labels: np.ndarray | None = None
    label_map: dict[str, int] = field(default_factory=dict)
    seed: int | None = None
    adjacency: np.ndarray = field(init=False, repr=False)
    normalized: np.ndarray = field(init=False, repr=False)
    standardized: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.series = np.asarray(self.series, dtype=np.float64)
        if self.series.ndim != 3:
            raise DatasetError(f"series must be (subjects, nodes, time), got shape {self.series.shape}")
        if len(self.ids) != self.series.shape[0]:
            raise DatasetError(f"{len(self.ids)} ids for {self.series.shape[0]} subjects")
        if self.series.shape[0] == 0:
            raise DatasetError("dataset has no subjects")
        if self.labels is not None:
            self.labels = np.asarray(self.labels).astype(int)
            if self.labels.shape != (self.series.shape[0],):
                raise DatasetError("labels must have one entry per subject")
            if not np.isin(self.labels, (0, 1)).all():
                raise DatasetError("labels must be 0 or 1")
        adj, norm = [], []
        for sid, x in zip(self.ids, self.series):
            try:
                g = pearson_connectivity(x)
            except ValueError as exc:
                raise DatasetError(f"subject {sid}: {exc}") from None
            adj.append(g.adjacency)
            norm.append(g.normalized)
        self.adjacency = np.stack(adj)
        self.normalized = np.stack(norm)
        mu = self.series.mean(axis=2, keepdims=True)
        sd = self.series.std(axis=2, keepdims=True)
        self.standardized = (self.series - mu) / sd

    def __len__(self) -> int:
        return self.series.shape[0]

    @property
    def num_nodes(self) -> int:
        return self.series.shape[1]

    @property
    def num_timepoints(self) -> int:
        return self.series.shape[2]

    @property
    def is_labeled(self) -> bool:
        return self.labels is not None

    def graph(self, i: int) -> ConnectivityGraph:
        return ConnectivityGraph(self.adjacency[i], self.normalized[i])

    def subset(self, indices) -> "TimeSeriesDataset":
        indices = np.asarray(indices, dtype=int)
        sub = object.__new__(TimeSeriesDataset)
        sub.ids = [self.ids[i] for i in indices]
        sub.series = self.series[indices]
        sub.labels = None if self.labels is None else self.labels[indices]
        sub.label_map = dict(self.label_map)
        sub.seed = self.seed
        sub.adjacency = self.adjacency[indices]
        sub.normalized = self.normalized[indices]
        sub.standardized = self.standardized[indices]
        return sub


# ------------------------------------------------------------------ sampling


def sample_subsequence(series, length: int, rng: np.random.Generator) -> np.ndarray:
    """Contiguous window of ``length`` time points at a uniform offset, as ``(P, L, 1)``."""
    series = np.asarray(series)
    T = series.shape[-1]
    if length > T:
        raise DatasetError(f"window length {length} exceeds series length {T}")
    if length < 1:
        raise DatasetError("window length must be positive")
    start = int(rng.integers(0, T - length + 1))
    return series[:, start : start + length, None].copy()


def batch_windows(dataset: TimeSeriesDataset, indices, length: int, rng: np.random.Generator):
    """One fresh window per listed subject; returns ``(x, graphs)`` ready for the model."""
    x = np.stack([sample_subsequence(dataset.standardized[i], length, rng) for i in indices])
    return x, dataset.normalized[np.asarray(indices, dtype=int)]


def evaluation_windows(series, length: int) -> np.ndarray:
    """Non-overlapping windows covering the series (last one right-aligned), ``(W, P, L, 1)``."""
    T = series.shape[-1]
    if length > T:
        raise DatasetError(f"window length {length} exceeds series length {T}")
    starts = list(range(0, T - length + 1, length))
    if starts[-1] != T - length:
        starts.append(T - length)
    return np.stack([series[:, s : s + length, None] for s in starts])


# ------------------------------------------------------------------ splits


def kfold_split(dataset: TimeSeriesDataset, k: int = 5, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified ``k``-fold (train, test) index pairs."""
    if not dataset.is_labeled:
        raise DatasetError("k-fold splitting needs a labeled dataset")
    counts = np.bincount(dataset.labels, minlength=2)
    if k < 2:
        raise DatasetError("k must be at least 2")
    if k > counts.min():
        raise DatasetError(f"k={k} exceeds the smallest class count {counts.min()}")
    skf = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    return [(np.sort(tr), np.sort(te)) for tr, te in skf.split(np.zeros(len(dataset)), dataset.labels)]


def meta_split(labels, ratio: float = 0.8, rng: np.random.Generator | None = None,
               indices=None) -> tuple[np.ndarray, np.ndarray]:
    """Stratified disjoint split into meta-training (``floor(ratio*N)``) and meta-validation.

    ``labels`` are the fold's labels; the returned arrays index into
    ``indices`` (defaults to ``arange(len(labels))``).
    """
    labels = np.asarray(labels).astype(int)
    n = labels.size
    indices = np.arange(n) if indices is None else np.asarray(indices)
    if rng is None:
        rng = np.random.default_rng(0)
    n_train = int(np.floor(ratio * n))
    if not 0 < ratio < 1 or n_train == 0 or n_train == n:
        raise DatasetError(f"ratio {ratio} leaves an empty meta split for {n} subjects")
    by_class = [np.flatnonzero(labels == c) for c in (0, 1)]
    if any(c.size < 2 for c in by_class):
        raise DatasetError("each class needs at least 2 subjects for a meta split")
    exact = np.array([ratio * c.size for c in by_class])
    take = np.floor(exact).astype(int)
    for c in np.argsort(-(exact - take), kind="stable")[: n_train - take.sum()]:
        take[c] += 1
    take = np.clip(take, 1, [c.size - 1 for c in by_class])
    train, val = [], []
    for members, t in zip(by_class, take):
        perm = rng.permutation(members)
        train.append(perm[:t])
        val.append(perm[t:])
    return np.sort(indices[np.concatenate(train)]), np.sort(indices[np.concatenate(val)])


def class_balanced_indices(labels, batch_size: int, rng: np.random.Generator, pool=None) -> np.ndarray:
    """``batch_size/2`` subjects per class, drawn with replacement from ``pool``."""
    labels = np.asarray(labels).astype(int)
    pool = np.arange(labels.size) if pool is None else np.asarray(pool)
    if batch_size < 2 or batch_size % 2:
        raise DatasetError("batch_size must be a positive even number")
    half = batch_size // 2
    picks = []
    for c in (0, 1):
        members = pool[labels[pool] == c]
        if members.size == 0:
            raise DatasetError(f"class {c} has no subjects to sample from")
        picks.append(rng.choice(members, size=half, replace=True))
    return np.concatenate(picks)


def sample_class_balanced_batch(dataset: TimeSeriesDataset, batch_size: int, rng: np.random.Generator,
                                pool=None, length: int | None = None):
    """Balanced batch with one fresh window per pick; returns ``(x, graphs, labels, indices)``."""
    idx = class_balanced_indices(dataset.labels, batch_size, rng, pool)
    length = dataset.num_timepoints if length is None else length
    x, graphs = batch_windows(dataset, idx, length, rng)
    return x, graphs, dataset.labels[idx], idx


# ------------------------------------------------------------------ synthetic


@dataclass(frozen=True)
class SyntheticConfig:
    num_source: int = 300
    num_target: int = 200
    num_nodes: int = 22
    num_timepoints: int = 256
    separability: float = 0.6
    target_positive_fraction: float = 0.5
    num_communities: int = 4
    community_loading: float = 0.6
    planted_size: int = 6
    planted_loading: float = 1.0
    auxiliary_loading: float = 1.0
    subject_jitter: float = 0.3
    nuisance_loading: float = 0.5
    ar_coefficient: float = 0.5

    def __post_init__(self):
        if min(self.num_source, self.num_target) < 4:
            raise DatasetError("need at least 4 subjects per domain")
        if self.num_nodes < 2 * self.planted_size:
            raise DatasetError("num_nodes must fit two disjoint planted blocks")
        if self.num_timepoints < 3:
            raise DatasetError("num_timepoints must be at least 3")
        if self.separability < 0:
            raise DatasetError("separability must be nonnegative")
        if not 0 < self.target_positive_fraction < 1:
            raise DatasetError("target_positive_fraction must lie in (0, 1)")
        if not 0 <= self.ar_coefficient < 1:
            raise DatasetError("ar_coefficient must lie in [0, 1)")


def _simulate_ar1(loadings: np.ndarray, unique: np.ndarray, T: int, phi: float, rng) -> np.ndarray:
    """Stationary AR(1) series whose marginal covariance is ``L L^T + diag(unique)``."""
    P, F = loadings.shape
    innov_scale = np.sqrt(1.0 - phi**2)
    x = np.empty((P, T))
    state = loadings @ rng.standard_normal(F) + np.sqrt(unique) * rng.standard_normal(P)
    for t in range(T):
        noise = loadings @ rng.standard_normal(F) + np.sqrt(unique) * rng.standard_normal(P)
        state = phi * state + innov_scale * noise
        x[:, t] = state
    return x


def generate_synthetic(config: SyntheticConfig = SyntheticConfig(), seed: int = 0):
    """Return ``(source, target)`` datasets with connectivity-borne class signal.

    Every subject's covariance is a factor model: community factors shared by
    all subjects, a planted factor on block ``S1``, an auxiliary factor on a
    disjoint block ``S2`` and a subject-specific nuisance factor, all with
    per-subject loading jitter.  Target class 1 loads the planted factor with
    strength ``separability * planted_loading``; class 0 does not load it.
    Source subjects load ``S1`` at a uniform random strength (unrelated to
    any label) and carry the auxiliary block as their binary label.
    """
    rng = np.random.default_rng(seed)
    P = config.num_nodes
    perm = rng.permutation(P)
    planted = perm[: config.planted_size]
    auxiliary = perm[config.planted_size : 2 * config.planted_size]
    community = rng.permutation(np.arange(P) % config.num_communities)

    def subject(strength_s1: float, strength_s2: float) -> np.ndarray:
        F = config.num_communities + 3
        L = np.zeros((P, F))
        L[np.arange(P), community] = config.community_loading
        L[planted, config.num_communities] = strength_s1
        L[auxiliary, config.num_communities + 1] = strength_s2
        L[:, -1] = config.nuisance_loading * rng.standard_normal(P)
        L[:, :-1] *= 1.0 + config.subject_jitter * rng.standard_normal((P, F - 1))
        return _simulate_ar1(L, np.ones(P), config.num_timepoints, config.ar_coefficient, rng)

    source_labels = (np.arange(config.num_source) % 2)[rng.permutation(config.num_source)]
    source_series = np.stack([
        subject(config.planted_loading * rng.uniform(0.0, 1.0), config.auxiliary_loading * y)
        for y in source_labels
    ])
    n_pos = int(round(config.target_positive_fraction * config.num_target))
    target_labels = np.r_[np.zeros(config.num_target - n_pos, dtype=int), np.ones(n_pos, dtype=int)]
    target_labels = target_labels[rng.permutation(config.num_target)]
    target_series = np.stack([
        subject(config.separability * config.planted_loading * y, 0.0) for y in target_labels
    ])
    width = len(str(max(config.num_source, config.num_target) - 1))
    source = TimeSeriesDataset(
        ids=[f"src{i:0{width}d}" for i in range(config.num_source)],
        series=source_series, labels=source_labels, label_map={"0": 0, "1": 1}, seed=seed,
    )
    target = TimeSeriesDataset(
        ids=[f"tgt{i:0{width}d}" for i in range(config.num_target)],
        series=target_series, labels=target_labels, label_map={"0": 0, "1": 1}, seed=seed,
    )
    return source, target


# ------------------------------------------------------------------ disk I/O


def save_dataset(dataset: TimeSeriesDataset, directory, write_labels: bool = True) -> None:
    root = Path(directory)
    (root / "subjects").mkdir(parents=True, exist_ok=True)
    manifest = {
        "num_nodes": dataset.num_nodes,
        "num_timepoints": dataset.num_timepoints,
        "num_subjects": len(dataset),
        "label_map": dataset.label_map,
        "seed": dataset.seed,
        "subjects": list(dataset.ids),
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for sid, x in zip(dataset.ids, dataset.series):
        np.savetxt(root / "subjects" / f"{sid}.csv", x, delimiter=",", fmt="%.17g")
    if write_labels and dataset.labels is not None:
        with open(root / "labels.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", "label"])
            writer.writerows((sid, int(y)) for sid, y in zip(dataset.ids, dataset.labels))


def load_dataset(directory, require_labels: bool = False) -> TimeSeriesDataset:
    root = Path(directory)
    if not root.is_dir():
        raise DatasetError(f"{root}: not a directory")
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise DatasetError(f"{root}: missing manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text())
        P, T = int(manifest["num_nodes"]), int(manifest["num_timepoints"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{manifest_path}: invalid manifest ({exc})") from None
    ids = manifest.get("subjects")
    if ids is None:
        ids = sorted(p.stem for p in (root / "subjects").glob("*.csv"))
    if not ids:
        raise DatasetError(f"{root}: no subjects")
    if "num_subjects" in manifest and int(manifest["num_subjects"]) != len(ids):
        raise DatasetError(f"{manifest_path}: num_subjects={manifest['num_subjects']} but {len(ids)} listed")
    series = []
    for sid in ids:
        path = root / "subjects" / f"{sid}.csv"
        if not path.exists():
            raise DatasetError(f"{path}: missing subject file")
        try:
            x = np.loadtxt(path, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise DatasetError(f"{path}: unreadable ({exc})") from None
        if x.shape != (P, T):
            raise DatasetError(f"{path}: expected {P}x{T} values, found {x.shape[0]}x{x.shape[1]}")
        if not np.all(np.isfinite(x)):
            raise DatasetError(f"{path}: non-finite values")
        series.append(x)
    labels = None
    labels_path = root / "labels.csv"
    label_map = {str(k): int(v) for k, v in (manifest.get("label_map") or {}).items()}
    if labels_path.exists():
        with open(labels_path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        if rows and rows[0][:2] == ["id", "label"]:
            rows = rows[1:]
        raw = {r[0]: r[1] for r in rows}
        missing = [sid for sid in ids if sid not in raw]
        if missing:
            raise DatasetError(f"{labels_path}: no label for subject {missing[0]}")
        try:
            labels = np.array([label_map[raw[s]] if raw[s] in label_map else int(raw[s]) for s in ids])
        except ValueError:
            raise DatasetError(f"{labels_path}: labels must be 0/1 or keys of label_map") from None
    elif require_labels:
        raise DatasetError(f"{root}: missing labels.csv")
    return TimeSeriesDataset(ids=list(ids), series=np.stack(series), labels=labels,
                             label_map=label_map, seed=manifest.get("seed"))
