"""Optimizers and the five transfer strategies.

``baseline``  supervised extractor + target head on target data only.
``ft``        source pre-training of extractor + source head, then a fresh
              target head trained with the extractor on target data.
``mtl``       one loop; every step minimizes ``L_S + lam * L_T`` over all heads.
``mel``       bi-level loop on target data only (no source head).
``metsk``     source warm-up, then the bi-level loop: the inner loop adapts
              only the target head by SGD on a meta-training batch, the outer
              loop freezes it and takes one Adam step on extractor + source
              head with ``L_S + lam * L_T(meta-validation)``.

The outer gradient is first order: ``L_T`` is differentiated at the adapted
head, treated as a constant.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import autodiff as ad
from .data import (
    DatasetError,
    TimeSeriesDataset,
    batch_windows,
    class_balanced_indices,
    meta_split,
)
from .losses import cross_entropy, graph_contrastive_loss, total_meta_loss
from .model import (
    ModelConfig,
    ModelParameters,
    feature_extractor_forward,
    head_forward,
    init_extractor,
    init_head,
)

log = logging.getLogger(__name__)

STRATEGIES = ("baseline", "ft", "mtl", "mel", "metsk")
SOURCE_TASKS = ("contrastive", "supervised")
NEEDS_SOURCE = {"ft", "mtl", "metsk"}


@dataclass(frozen=True)
class TrainConfig:
    strategy: str = "metsk"
    source_task: str = "contrastive"
    inner_steps: int = 30
    outer_iterations: int = 3600
    warmup_iterations: int = 1800
    batch_size: int = 32
    inner_lr: float = 0.01
    outer_lr: float = 0.001
    lam: float = 15.0
    tau: float = 30.0
    seed: int = 0
    subsequence_length: int = 64
    meta_split_ratio: float = 0.8
    reinit_target_head: bool = True

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.source_task not in SOURCE_TASKS:
            raise ValueError(f"source_task must be one of {SOURCE_TASKS}, got {self.source_task!r}")
        if self.inner_lr <= 0 or self.outer_lr <= 0 or self.tau <= 0:
            raise ValueError("learning rates and temperature must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if min(self.inner_steps, self.outer_iterations, self.warmup_iterations) < 0:
            raise ValueError("iteration counts must be nonnegative")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ValueError("batch_size must be a positive even number")
        if self.subsequence_length < 1:
            raise ValueError("subsequence_length must be positive")
        if not 0 < self.meta_split_ratio < 1:
            raise ValueError("meta_split_ratio must lie in (0, 1)")

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise KeyError(f"unknown training config key {unknown[0]!r}")
        return cls(**values)

    def to_dict(self) -> dict:
        return asdict(self)


# ------------------------------------------------------------------ optimizers


def _check_same_shapes(params: dict, grads: dict) -> None:
    for name, value in params.items():
        if name not in grads:
            raise KeyError(f"missing gradient for {name!r}")
        if np.shape(grads[name]) != np.shape(value):
            raise ad.ShapeError(f"{name}: gradient shape {np.shape(grads[name])} != parameter shape {np.shape(value)}")


def sgd_step(params: dict, grads: dict, lr: float) -> dict:
    _check_same_shapes(params, grads)
    return {k: v - lr * grads[k] for k, v in params.items()}


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(state: AdamState, params: dict, grads: dict, lr: float) -> tuple[AdamState, dict]:
    _check_same_shapes(params, grads)
    for name, value in params.items():
        if name in state.m and state.m[name].shape != value.shape:
            raise ad.ShapeError(f"{name}: optimizer state shape {state.m[name].shape} != {value.shape}")
    t = state.step + 1
    m, v, out = dict(state.m), dict(state.v), {}
    for name, value in params.items():
        g = grads[name]
        m[name] = state.beta1 * m.get(name, np.zeros_like(value)) + (1 - state.beta1) * g
        v[name] = state.beta2 * v.get(name, np.zeros_like(value)) + (1 - state.beta2) * g * g
        m_hat = m[name] / (1 - state.beta1**t)
        v_hat = v[name] / (1 - state.beta2**t)
        out[name] = value - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return AdamState(m, v, t, state.beta1, state.beta2, state.eps), out


def _project(params: dict) -> dict:
    """Keep edge-importance masks nonnegative."""
    return {k: (np.maximum(v, 0.0) if k.endswith(".E") else v) for k, v in params.items()}


def _watch(tape: ad.Tape, part: dict) -> dict:
    return {k: tape.watch(v) for k, v in part.items()}


def _grads(tape: ad.Tape, root: ad.Tensor, *watched: dict) -> list[dict]:
    leaves = [leaf for w in watched for leaf in w.values()]
    g = ad.backward(tape, root, leaves)
    return [{k: g[leaf] for k, leaf in w.items()} for w in watched]


# ------------------------------------------------------------------ batches


@dataclass
class SupervisedBatch:
    x: np.ndarray
    graphs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.labels) == 0:
            raise DatasetError("empty batch")


@dataclass
class ContrastiveViews:
    view1: np.ndarray
    view2: np.ndarray
    graphs: np.ndarray


def supervised_batch(dataset: TimeSeriesDataset, pool, batch_size: int, length: int, rng) -> SupervisedBatch:
    idx = class_balanced_indices(dataset.labels, batch_size, rng, pool)
    x, graphs = batch_windows(dataset, idx, length, rng)
    return SupervisedBatch(x, graphs, dataset.labels[idx])


def contrastive_batch(dataset: TimeSeriesDataset, batch_size: int, length: int, rng) -> ContrastiveViews:
    """Two independent windows of each of ``batch_size`` distinct subjects."""
    n = len(dataset)
    idx = rng.choice(n, size=min(batch_size, n), replace=False)
    x1, graphs = batch_windows(dataset, idx, length, rng)
    x2, _ = batch_windows(dataset, idx, length, rng)
    return ContrastiveViews(x1, x2, graphs)


def full_batch(dataset: TimeSeriesDataset, pool, length: int, rng) -> SupervisedBatch:
    pool = np.asarray(pool)
    x, graphs = batch_windows(dataset, pool, length, rng)
    return SupervisedBatch(x, graphs, dataset.labels[pool])


# ------------------------------------------------------------------ losses on batches


def source_loss(phi, theta_s, batch, config: TrainConfig) -> ad.Tensor:
    if config.source_task == "contrastive":
        e1 = head_forward(feature_extractor_forward(batch.view1, batch.graphs, phi), batch.graphs, theta_s, "source")
        e2 = head_forward(feature_extractor_forward(batch.view2, batch.graphs, phi), batch.graphs, theta_s, "source")
        return graph_contrastive_loss(e1, e2, config.tau)
    logits = head_forward(feature_extractor_forward(batch.x, batch.graphs, phi), batch.graphs, theta_s, "source")
    return cross_entropy(logits, batch.labels)


def target_loss(phi, theta_t, batch: SupervisedBatch) -> ad.Tensor:
    logits = head_forward(feature_extractor_forward(batch.x, batch.graphs, phi), batch.graphs, theta_t)
    return cross_entropy(logits, batch.labels)


def sample_source_batch(source: TimeSeriesDataset, config: TrainConfig, rng):
    if config.source_task == "contrastive":
        return contrastive_batch(source, config.batch_size, config.subsequence_length, rng)
    if not source.is_labeled:
        raise DatasetError("a supervised source task needs labeled source data")
    return supervised_batch(source, None, config.batch_size, config.subsequence_length, rng)


# ------------------------------------------------------------------ loop pieces


def inner_loop_adapt(theta_t: dict, phi: dict, batch: SupervisedBatch, k: int, lr: float,
                     features: np.ndarray | None = None) -> dict:
    """``k`` plain SGD steps on the target head; features are computed once from ``phi``."""
    if len(batch.labels) == 0:
        raise DatasetError("empty meta-training batch")
    if features is None:
        features = feature_extractor_forward(batch.x, batch.graphs, phi).data
    theta = dict(theta_t)
    for _ in range(k):
        with ad.Tape() as tape:
            w = _watch(tape, theta)
            loss = cross_entropy(head_forward(features, batch.graphs, w), batch.labels)
        (g,) = _grads(tape, loss, w)
        theta = _project(sgd_step(theta, g, lr))
    return theta


def outer_loop_step(phi: dict, theta_s: dict, theta_t: dict, source_batch, val_batch: SupervisedBatch,
                    state: AdamState, config: TrainConfig):
    """One Adam step on extractor + source head from ``L_S + lam * L_T``; ``theta_t`` stays fixed.

    Returns ``(phi, theta_s, state, losses)``.  With ``source_batch=None``
    (meta-learning on target data only) only the extractor is updated.
    """
    if val_batch is None or len(val_batch.labels) == 0:
        raise DatasetError("empty meta-validation batch")
    with ad.Tape() as tape:
        wphi = _watch(tape, phi)
        lt = target_loss(wphi, theta_t, val_batch)
        if source_batch is not None:
            ws = _watch(tape, theta_s)
            ls = source_loss(wphi, ws, source_batch, config)
            total = total_meta_loss(ls, lt, config.lam)
        else:
            ws, ls = {}, None
            total = ad.scale(lt, config.lam)
    gphi, gs = _grads(tape, total, wphi, ws)
    state, updated = adam_step(state, {**phi, **_prefixed(theta_s)}, {**gphi, **_prefixed(gs)}, config.outer_lr)
    updated = _project(updated)
    new_phi = {k: updated[k] for k in phi}
    new_s = {k: updated["s:" + k] for k in theta_s}
    losses = {"L_T": float(lt.data)}
    if ls is not None:
        losses["L_S"] = float(ls.data)
    return new_phi, new_s, state, losses


def _prefixed(d: dict, tag: str = "s:") -> dict:
    return {tag + k: v for k, v in d.items()}


def _joint_step(parts: dict[str, dict], loss_fn, state: AdamState, lr: float):
    """Adam step on the union of named partitions for the scalar built by ``loss_fn``."""
    with ad.Tape() as tape:
        watched = {name: _watch(tape, p) for name, p in parts.items()}
        loss, info = loss_fn(watched)
    grads = _grads(tape, loss, *watched.values())
    flat_p = {f"{n}:{k}": v for n, p in parts.items() for k, v in p.items()}
    flat_g = {f"{n}:{k}": v for n, g in zip(parts, grads) for k, v in g.items()}
    state, flat_new = adam_step(state, flat_p, flat_g, lr)
    flat_new = _project(flat_new)
    new = {n: {k: flat_new[f"{n}:{k}"] for k in p} for n, p in parts.items()}
    return new, state, info


# ------------------------------------------------------------------ strategies


@dataclass
class TrainResult:
    params: ModelParameters
    history: list[dict]
    model_config: ModelConfig
    config: TrainConfig


def _source_only_phase(params: ModelParameters, source, config, rng, iterations, history, phase):
    state = AdamState()
    for it in range(iterations):
        batch = sample_source_batch(source, config, rng)

        def loss_fn(w, batch=batch):
            ls = source_loss(w["phi"], w["theta_s"], batch, config)
            return ls, {"L_S": float(ls.data)}

        new, state, info = _joint_step({"phi": params.phi, "theta_s": params.theta_s}, loss_fn, state,
                                       config.outer_lr)
        params.phi, params.theta_s = new["phi"], new["theta_s"]
        history.append({"phase": phase, "iteration": it, **info})
    return state


def _supervised_phase(params: ModelParameters, target, pool, config, rng, iterations, history, phase):
    state = AdamState()
    for it in range(iterations):
        batch = supervised_batch(target, pool, config.batch_size, config.subsequence_length, rng)

        def loss_fn(w, batch=batch):
            lt = target_loss(w["phi"], w["theta_t"], batch)
            return lt, {"L_T": float(lt.data)}

        new, state, info = _joint_step({"phi": params.phi, "theta_t": params.theta_t}, loss_fn, state,
                                       config.outer_lr)
        params.phi, params.theta_t = new["phi"], new["theta_t"]
        history.append({"phase": phase, "iteration": it, **info})


def mtl_iteration(params: ModelParameters, source_batch, target_batch, state: AdamState, config: TrainConfig):
    """One multi-task step: every partition updated from ``L_S + lam * L_T`` in a single tape."""

    def loss_fn(w):
        ls = source_loss(w["phi"], w["theta_s"], source_batch, config)
        lt = target_loss(w["phi"], w["theta_t"], target_batch)
        return total_meta_loss(ls, lt, config.lam), {"L_S": float(ls.data), "L_T": float(lt.data)}

    new, state, info = _joint_step(
        {"phi": params.phi, "theta_s": params.theta_s, "theta_t": params.theta_t}, loss_fn, state, config.outer_lr
    )
    params.phi, params.theta_s, params.theta_t = new["phi"], new["theta_s"], new["theta_t"]
    return state, info


def bilevel_loop(params: ModelParameters, source, target, pool, config: TrainConfig, model_config: ModelConfig,
                 rng, history: list, hooks=None) -> None:
    """Outer iterations of the meta loop (``source=None`` gives target-only meta-learning).

    ``hooks`` is an optional object with ``on_split``, ``on_inner`` and
    ``on_outer`` callbacks used by tests to observe loop boundaries.
    """
    pool = np.asarray(pool)
    state = AdamState()
    for it in range(config.outer_iterations):
        if config.reinit_target_head:
            params.theta_t = init_head(model_config, rng, "target")
        tr, val = meta_split(target.labels[pool], config.meta_split_ratio, rng, indices=pool)
        if hooks:
            hooks.on_split(it, tr, val, pool)
        train_batch = supervised_batch(target, tr, config.batch_size, config.subsequence_length, rng)
        before = params.theta_t
        params.theta_t = inner_loop_adapt(params.theta_t, params.phi, train_batch, config.inner_steps,
                                          config.inner_lr)
        if hooks:
            hooks.on_inner(it, before, params)
        val_batch = supervised_batch(target, val, config.batch_size, config.subsequence_length, rng)
        src_batch = sample_source_batch(source, config, rng) if source is not None else None
        snapshot = params.theta_t
        params.phi, params.theta_s, state, losses = outer_loop_step(
            params.phi, params.theta_s, params.theta_t, src_batch, val_batch, state, config
        )
        if hooks:
            hooks.on_outer(it, snapshot, params)
        history.append({"phase": "meta", "iteration": it, **losses})


def final_adaptation(params: ModelParameters, target, pool, config: TrainConfig, model_config: ModelConfig, rng):
    """Fresh target head adapted with the inner-loop rule on the whole training pool."""
    params.theta_t = init_head(model_config, rng, "target")
    batch = full_batch(target, pool, config.subsequence_length, rng)
    params.theta_t = inner_loop_adapt(params.theta_t, params.phi, batch, config.inner_steps, config.inner_lr)


def run_strategy(config: TrainConfig, model_config: ModelConfig, target: TimeSeriesDataset,
                 source: TimeSeriesDataset | None = None, train_indices=None, rng=None, hooks=None) -> TrainResult:
    """Train one model with ``config.strategy`` on ``target[train_indices]``."""
    if config.strategy in NEEDS_SOURCE and source is None:
        raise DatasetError(f"strategy {config.strategy!r} needs source data")
    if not target.is_labeled:
        raise DatasetError("target data must be labeled")
    if source is not None and source.num_nodes != target.num_nodes:
        raise DatasetError("source and target datasets have different node counts")
    if model_config.num_nodes != target.num_nodes:
        raise DatasetError(f"model expects {model_config.num_nodes} nodes, data has {target.num_nodes}")
    if config.subsequence_length > target.num_timepoints or (
        source is not None and config.subsequence_length > source.num_timepoints
    ):
        raise DatasetError("subsequence_length exceeds the series length")
    if model_config.source_kind != config.source_task:
        model_config = replace(model_config, source_kind=config.source_task)
    rng = np.random.default_rng(config.seed) if rng is None else rng
    pool = np.arange(len(target)) if train_indices is None else np.asarray(train_indices)
    strategy = config.strategy
    uses_source = strategy in NEEDS_SOURCE
    phi = init_extractor(model_config, rng)
    theta_t = init_head(model_config, rng, "target")
    theta_s = init_head(model_config, rng, "source") if uses_source else {}
    params = ModelParameters(phi, theta_t, theta_s)
    history: list[dict] = []

    if strategy == "baseline":
        _supervised_phase(params, target, pool, config, rng, config.outer_iterations, history, "target")
    elif strategy == "ft":
        _source_only_phase(params, source, config, rng, config.warmup_iterations, history, "pretrain")
        params.theta_t = init_head(model_config, rng, "target")
        _supervised_phase(params, target, pool, config, rng, config.outer_iterations, history, "target")
    elif strategy == "mtl":
        state = AdamState()
        for it in range(config.outer_iterations):
            src_batch = sample_source_batch(source, config, rng)
            tgt_batch = supervised_batch(target, pool, config.batch_size, config.subsequence_length, rng)
            state, info = mtl_iteration(params, src_batch, tgt_batch, state, config)
            history.append({"phase": "joint", "iteration": it, **info})
    else:
        if strategy == "metsk":
            _source_only_phase(params, source, config, rng, config.warmup_iterations, history, "warmup")
        bilevel_loop(params, source if strategy == "metsk" else None, target, pool, config, model_config, rng,
                     history, hooks)
        if config.reinit_target_head and config.outer_iterations > 0:
            final_adaptation(params, target, pool, config, model_config, rng)
    log.debug("%s finished with %d history entries", strategy, len(history))
    return TrainResult(params=params, history=history, model_config=model_config, config=config)
