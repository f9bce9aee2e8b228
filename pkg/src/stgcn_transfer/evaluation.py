"""Metrics, cross-validated comparison runs and the node-importance analysis."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .data import TimeSeriesDataset, evaluation_windows, kfold_split
from .graph import PROPERTY_NAMES, nodal_properties
from .model import ModelConfig, ModelParameters, feature_extractor_forward, node_importance, predict_proba
from .training import STRATEGIES, TrainConfig, run_strategy

log = logging.getLogger(__name__)


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2)."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("AUC needs both classes present")
    if pos.size + neg.size != labels.size:
        raise ValueError("labels must be 0 or 1")
    # rank-sum form of the Mann-Whitney statistic with midranks for ties
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    u = ranks[labels == 1].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    if x.size < 3:
        raise ValueError("pearson_r needs at least 3 observations")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(xc @ xc), np.sqrt(yc @ yc)
    if sx <= 1e-12 * max(1.0, np.abs(x).max()) or sy <= 1e-12 * max(1.0, np.abs(y).max()):
        raise ValueError("pearson_r is undefined for a zero-variance input")
    return float(np.clip(xc @ yc / (sx * sy), -1.0, 1.0))


def pca_reduce(X, n_components: int):
    """Project centered rows onto the leading covariance eigenvectors.

    Returns ``(scores, components, explained_variance)``; ``components`` is
    ``(n_components, D)`` and variances are non-increasing.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    n, d = X.shape
    if not 1 <= n_components <= min(n, d):
        raise ValueError(f"n_components must lie in [1, {min(n, d)}], got {n_components}")
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / max(n - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    # deterministic sign: largest-magnitude loading positive
    signs = np.sign(evecs[np.abs(evecs).argmax(axis=0), np.arange(d)])
    evecs = evecs * np.where(signs == 0, 1.0, signs)
    components = evecs[:, :n_components].T
    return Xc @ components.T, components, evals


def _inv_sqrt(C: np.ndarray, ridge: float, name: str) -> np.ndarray:
    evals, evecs = np.linalg.eigh((C + C.T) / 2)
    top = max(evals.max(), 0.0)
    floor = ridge * top if top > 0 else ridge
    if evals.min() <= 1e-12 * max(top, 1e-300):
        if ridge <= 0:
            raise np.linalg.LinAlgError(f"{name} covariance is singular; pass ridge > 0")
    # only near-singular directions are lifted, so well-conditioned inputs are untouched
    evals = np.maximum(evals, floor)
    return evecs @ np.diag(evals**-0.5) @ evecs.T


def cca(X, Y, ridge: float = 1e-8) -> np.ndarray:
    """Canonical correlations between column sets ``X`` (N, p) and ``Y`` (N, q)."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y must have the same number of rows")
    n = X.shape[0]
    if n < 2:
        raise ValueError("cca needs at least 2 observations")
    Xc, Yc = X - X.mean(axis=0), Y - Y.mean(axis=0)
    Cxx = Xc.T @ Xc / (n - 1)
    Cyy = Yc.T @ Yc / (n - 1)
    Cxy = Xc.T @ Yc / (n - 1)
    M = _inv_sqrt(Cxx, ridge, "X") @ Cxy @ _inv_sqrt(Cyy, ridge, "Y")
    corr = np.linalg.svd(M, compute_uv=False)
    return np.clip(corr[: min(X.shape[1], Y.shape[1])], 0.0, 1.0)


# ------------------------------------------------------------------ model scoring


def predict_subject_scores(params: ModelParameters, dataset: TimeSeriesDataset, indices, length: int,
                           chunk: int = 64) -> np.ndarray:
    """Class-1 probability per subject, averaged over non-overlapping windows."""
    scores = []
    for i in np.asarray(indices, dtype=int):
        windows = evaluation_windows(dataset.standardized[i], length)
        graphs = np.broadcast_to(dataset.normalized[i], (len(windows),) + dataset.normalized[i].shape)
        probs = np.concatenate([
            predict_proba(params, windows[s : s + chunk], graphs[s : s + chunk])[:, 1]
            for s in range(0, len(windows), chunk)
        ])
        scores.append(probs.mean())
    return np.asarray(scores)


def subject_features(params: ModelParameters, dataset: TimeSeriesDataset, length: int) -> np.ndarray:
    """Extractor output averaged over windows and time: ``(N, P, C_f)``."""
    feats = []
    for i in range(len(dataset)):
        windows = evaluation_windows(dataset.standardized[i], length)
        graphs = np.broadcast_to(dataset.normalized[i], (len(windows),) + dataset.normalized[i].shape)
        f = feature_extractor_forward(windows, graphs, params.phi).data  # (W, P, L, C)
        feats.append(f.mean(axis=(0, 2)))
    return np.stack(feats)


def importance_property_analysis(params: ModelParameters, dataset: TimeSeriesDataset, length: int,
                                 n_components: int | None = None, importance=None) -> dict:
    """Correlate node importance with nodal graph properties; CCA of learned features vs properties.

    Node importance is a model-level quantity, so it is repeated for every
    subject before pooling over (subjects x nodes).
    """
    importance = node_importance(params.phi) if importance is None else np.asarray(importance, dtype=np.float64)
    N, P = len(dataset), dataset.num_nodes
    props = np.stack([
        np.column_stack([nodal_properties(dataset.adjacency[i])[name] for name in PROPERTY_NAMES])
        for i in range(N)
    ])  # (N, P, 4)
    pooled_importance = np.tile(importance, N)
    correlations = {
        name: pearson_r(pooled_importance, props[:, :, j].ravel()) for j, name in enumerate(PROPERTY_NAMES)
    }
    result = {
        "node_importance": importance.tolist(),
        "pearson": correlations,
    }
    if dataset.is_labeled:
        by_group = {}
        for c in (0, 1):
            members = np.flatnonzero(dataset.labels == c)
            if members.size == 0:
                continue
            group = {}
            for j, name in enumerate(PROPERTY_NAMES):
                try:
                    group[name] = pearson_r(np.tile(importance, members.size), props[members, :, j].ravel())
                except ValueError:
                    group[name] = None
            by_group[str(c)] = group
        result["pearson_by_class"] = by_group

    feats = subject_features(params, dataset, length).reshape(N * P, -1)
    k = n_components or min(8, feats.shape[1], N * P - 1)
    reduced, _, _ = pca_reduce(feats, k)
    result["pca_components"] = int(k)
    result["canonical_correlations"] = cca(reduced, props.reshape(N * P, -1)).tolist()
    return result


# ------------------------------------------------------------------ cross-validation


def _run_fold(args):
    strategy, train_config, model_config, source, target, seed, fold, train_idx, test_idx = args
    cfg = replace(train_config, strategy=strategy, seed=seed)
    rng = np.random.default_rng([seed, fold])
    result = run_strategy(cfg, model_config, target, source if strategy in ("ft", "mtl", "metsk") else None,
                          train_indices=train_idx, rng=rng)
    scores = predict_subject_scores(result.params, target, test_idx, cfg.subsequence_length)
    fold_auc = auc(scores, target.labels[test_idx])
    log.info("%s seed=%d fold=%d auc=%.4f", strategy, seed, fold, fold_auc)
    return {
        "strategy": strategy,
        "seed": seed,
        "fold": fold,
        "auc": fold_auc,
        "test_ids": [target.ids[i] for i in test_idx],
        "scores": scores.tolist(),
        "node_importance": node_importance(result.params.phi).tolist(),
        "history": result.history,
    }


def summarize(values) -> dict:
    values = [float(v) for v in values]
    mean = math.fsum(values) / len(values)
    std = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1)) if len(values) > 1 else 0.0
    return {"mean": mean, "std": std}


def cross_validate(strategies, train_config: TrainConfig, model_config: ModelConfig, target: TimeSeriesDataset,
                   source: TimeSeriesDataset | None = None, seeds=(0,), n_folds: int = 5, jobs: int = 1,
                   keep_history: bool = True) -> dict:
    """Run every strategy on every (seed, fold) and aggregate AUCs.

    Folds depend only on the seed, so all strategies see identical splits.
    """
    for s in strategies:
        if s not in STRATEGIES:
            raise ValueError(f"unknown strategy {s!r}")
    tasks = []
    for seed in seeds:
        folds = kfold_split(target, n_folds, seed)
        for strategy in strategies:
            for fold, (tr, te) in enumerate(folds):
                tasks.append((strategy, train_config, model_config, source, target, int(seed), fold, tr, te))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_fold, tasks))
    else:
        runs = [_run_fold(t) for t in tasks]
    if not keep_history:
        for r in runs:
            r.pop("history")
    summary = {}
    for strategy in strategies:
        mine = [r for r in runs if r["strategy"] == strategy]
        per_fold = [
            math.fsum(r["auc"] for r in mine if r["fold"] == f) / len(seeds) for f in range(n_folds)
        ]
        summary[strategy] = {**summarize([r["auc"] for r in mine]), "fold_mean_auc": per_fold}
    return {"summary": summary, "runs": runs}


def table_rows(report: dict) -> list[dict]:
    """Strategy x (mean, std, per-fold AUC) rows in strategy order."""
    rows = []
    for strategy, s in report["summary"].items():
        row = {"strategy": strategy, "mean_auc": s["mean"], "std_auc": s["std"]}
        for f, v in enumerate(s["fold_mean_auc"], start=1):
            row[f"fold_{f}"] = v
        rows.append(row)
    return rows
