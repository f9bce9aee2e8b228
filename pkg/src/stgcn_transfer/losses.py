"""Source, target and combined training objectives."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine similarity is undefined for a zero-norm vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def graph_contrastive_loss(view1, view2, tau: float) -> ad.Tensor:
    """Cross-view contrastive loss with the positive pair left out of the denominator.

    Row ``n`` of ``view1`` and ``view2`` embed two windows of subject ``n``.
    For each subject the numerator is ``exp(sim(v1_n, v2_n)/tau)`` and the
    denominator sums ``exp(sim(v1_n, v2_m)/tau)`` over ``m != n``.  Because the
    positive pair is excluded the loss can go negative; it always lies in
    ``[-2/tau - log(N-1), 2/tau + log(N-1)]``.
    """
    view1, view2 = ad.as_tensor(view1), ad.as_tensor(view2)
    if view1.ndim != 2 or view1.shape != view2.shape:
        raise ad.ShapeError(f"views must be matching (N, d) arrays, got {view1.shape} and {view2.shape}")
    n = view1.shape[0]
    if n < 2:
        raise ValueError("contrastive loss needs at least 2 subjects per batch")
    if tau <= 0:
        raise ValueError("temperature must be positive")
    sims = ad.scale(ad.cosine_similarity_matrix(view1, view2), 1.0 / tau)
    eye = np.eye(n)
    positive = ad.sum(ad.mul(sims, eye), axis=1)
    negatives = ad.sum(ad.mul(ad.exp(sims), 1.0 - eye), axis=1)
    return ad.mean(ad.sub(ad.log(negatives), positive))


def cross_entropy(logits, labels) -> ad.Tensor:
    """Mean softmax cross-entropy of integer ``labels`` under ``logits`` (N, C)."""
    logits = ad.as_tensor(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ad.ShapeError(f"logits {logits.shape} and labels {labels.shape} do not match")
    n_classes = logits.shape[1]
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise ValueError("labels must be integer class indices")
        labels = labels.astype(int)
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes - 1}]")
    onehot = np.eye(n_classes)[labels]
    return ad.neg(ad.mean(ad.sum(ad.mul(ad.log_softmax(logits, axis=1), onehot), axis=1)))


def total_meta_loss(source_loss, target_loss, lam: float):
    """``source_loss + lam * target_loss``; works on floats and tensors."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if isinstance(source_loss, ad.Tensor) or isinstance(target_loss, ad.Tensor):
        return ad.add(source_loss, ad.scale(target_loss, lam))
    return source_loss + lam * target_loss
