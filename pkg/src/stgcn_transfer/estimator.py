"""scikit-learn compatible wrappers.

:class:`TransferClassifier` trains the ST-GCN with any of the transfer
strategies; :class:`ConnectivityFeatures` turns node time series into
connectivity or nodal-property features for conventional estimators.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data import TimeSeriesDataset
from .evaluation import predict_subject_scores
from .graph import PROPERTY_NAMES, nodal_properties, pearson_connectivity
from .model import ModelConfig, node_importance
from .training import TrainConfig, run_strategy
from .validation import as_dataset, check_binary_labels, check_series


class TransferClassifier(ClassifierMixin, BaseEstimator):
    """Binary ST-GCN classifier for node x time series with optional source-domain transfer.

    ``X`` is ``(subjects, nodes, time)``; the connectivity graph of each
    subject is computed from its own series.  Source data is passed to
    :meth:`fit` as ``X_source`` (and ``y_source`` for the supervised source
    task).

    Attributes set by ``fit``: ``classes_``, ``params_``, ``history_``,
    ``model_config_``, ``train_config_``, ``n_features_in_`` (node count).
    """

    def __init__(self, strategy="metsk", source_task="contrastive", inner_steps=30, outer_iterations=3600,
                 warmup_iterations=1800, batch_size=32, inner_lr=0.01, outer_lr=0.001, lam=15.0, tau=30.0,
                 subsequence_length=64, meta_split_ratio=0.8, reinit_target_head=True,
                 extractor_channels=(16, 32, 64), head_channels=64, embed_dim=64, temporal_kernel=9,
                 random_state=0):
        self.strategy = strategy
        self.source_task = source_task
        self.inner_steps = inner_steps
        self.outer_iterations = outer_iterations
        self.warmup_iterations = warmup_iterations
        self.batch_size = batch_size
        self.inner_lr = inner_lr
        self.outer_lr = outer_lr
        self.lam = lam
        self.tau = tau
        self.subsequence_length = subsequence_length
        self.meta_split_ratio = meta_split_ratio
        self.reinit_target_head = reinit_target_head
        self.extractor_channels = extractor_channels
        self.head_channels = head_channels
        self.embed_dim = embed_dim
        self.temporal_kernel = temporal_kernel
        self.random_state = random_state

    def _configs(self, num_nodes: int) -> tuple[TrainConfig, ModelConfig]:
        train = TrainConfig(
            strategy=self.strategy, source_task=self.source_task, inner_steps=self.inner_steps,
            outer_iterations=self.outer_iterations, warmup_iterations=self.warmup_iterations,
            batch_size=self.batch_size, inner_lr=self.inner_lr, outer_lr=self.outer_lr, lam=self.lam,
            tau=self.tau, seed=int(self.random_state), subsequence_length=self.subsequence_length,
            meta_split_ratio=self.meta_split_ratio, reinit_target_head=self.reinit_target_head,
        )
        model = ModelConfig(
            num_nodes=num_nodes, extractor_channels=tuple(self.extractor_channels), head_channels=self.head_channels,
            embed_dim=self.embed_dim, temporal_kernel=self.temporal_kernel, source_kind=self.source_task,
        )
        return train, model

    def fit(self, X, y, X_source=None, y_source=None):
        series = check_series(X)
        labels, self.classes_ = check_binary_labels(y, series.shape[0])
        target = as_dataset(series, labels, prefix="t")
        source = None
        if X_source is not None:
            src_labels = None
            if y_source is not None:
                src_series = check_series(X_source)
                src_labels, _ = check_binary_labels(y_source, src_series.shape[0])
                X_source = src_series
            source = X_source if isinstance(X_source, TimeSeriesDataset) else as_dataset(X_source, src_labels, "s")
        train_config, model_config = self._configs(target.num_nodes)
        result = run_strategy(train_config, model_config, target, source)
        self.params_ = result.params
        self.history_ = result.history
        self.train_config_ = result.config
        self.model_config_ = result.model_config
        self.n_features_in_ = target.num_nodes
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        series = check_series(X)
        if series.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {series.shape[1]} nodes; the model was fit on {self.n_features_in_}")
        length = min(self.train_config_.subsequence_length, series.shape[2])
        p1 = predict_subject_scores(self.params_, as_dataset(series), np.arange(series.shape[0]), length)
        return np.column_stack([1.0 - p1, p1])

    def decision_function(self, X):
        p = self.predict_proba(X)
        return np.log(p[:, 1]) - np.log(p[:, 0])

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[(proba[:, 1] > 0.5).astype(int)]

    @property
    def node_importance_(self) -> np.ndarray:
        check_is_fitted(self, "params_")
        return node_importance(self.params_.phi)


class ConnectivityFeatures(TransformerMixin, BaseEstimator):
    """Per-subject connectivity features.

    ``kind="edges"`` gives the upper triangle of the |Pearson r| matrix;
    ``kind="properties"`` gives the four nodal statistics per node,
    flattened node-major.
    """

    def __init__(self, kind="edges"):
        self.kind = kind

    def fit(self, X, y=None):
        if self.kind not in ("edges", "properties"):
            raise ValueError(f"kind must be 'edges' or 'properties', got {self.kind!r}")
        self.n_features_in_ = check_series(X).shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        series = check_series(X)
        if series.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {series.shape[1]} nodes; fit saw {self.n_features_in_}")
        rows = []
        iu = np.triu_indices(series.shape[1], 1)
        for x in series:
            A = pearson_connectivity(x).adjacency
            if self.kind == "edges":
                rows.append(A[iu])
            else:
                props = nodal_properties(A)
                rows.append(np.column_stack([props[n] for n in PROPERTY_NAMES]).ravel())
        return np.vstack(rows)
