import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import roc_auc_score

from stgcn_transfer.data import SyntheticConfig, generate_synthetic
from stgcn_transfer.evaluation import (
    auc,
    cca,
    importance_property_analysis,
    pca_reduce,
    pearson_r,
    summarize,
)
from stgcn_transfer.graph import node_strength
from stgcn_transfer.model import ModelConfig, init_parameters


def pair_count_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


def test_auc_examples():
    assert auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]) == 0.0
    assert auc([0.5] * 4, [1, 0, 1, 0]) == 0.5


def test_auc_single_class():
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [1, 1])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 1)), min_size=2, max_size=30))
def test_auc_matches_pair_counting_with_ties(pairs):
    scores = [float(s) for s, _ in pairs]
    labels = [y for _, y in pairs]
    if len(set(labels)) < 2:
        return
    assert auc(scores, labels) == pytest.approx(pair_count_auc(scores, labels), abs=1e-12)
    assert auc(scores, labels) == pytest.approx(roc_auc_score(labels, scores), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_auc_complement_and_monotone_invariance(seed):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=20)
    y = np.r_[np.zeros(10, int), np.ones(10, int)]
    assert auc(s, y) + auc(-s, y) == pytest.approx(1.0, abs=1e-12)
    assert auc(np.exp(3 * s) + 1, y) == auc(s, y)


def test_pearson_examples():
    x = np.array([1.0, 2.0, 3.0, 4.5])
    assert pearson_r(x, x) == pytest.approx(1.0)
    assert pearson_r(x, -2 * x + 7) == pytest.approx(-1.0)
    assert pearson_r([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        pearson_r([1, 1, 1], [1, 2, 3])


def test_pca_rank_one_reconstruction():
    t = np.linspace(-1, 1, 15)
    X = np.column_stack([2 * t + 1, -t + 3])
    scores, comps, _ = pca_reduce(X, 1)
    recon = scores @ comps + X.mean(axis=0)
    np.testing.assert_allclose(recon, X, atol=1e-12)


def test_pca_variance_trace_identity_and_order():
    X = np.random.default_rng(0).normal(size=(20, 5))
    _, _, var = pca_reduce(X, 3)
    assert np.all(np.diff(var) <= 0)
    assert var.sum() == pytest.approx(np.var(X, axis=0, ddof=1).sum(), abs=1e-9)


def test_pca_invalid_components():
    with pytest.raises(ValueError):
        pca_reduce(np.ones((3, 2)), 3)


def test_cca_identical_sets():
    X = np.random.default_rng(1).normal(size=(50, 3))
    np.testing.assert_allclose(cca(X, X), np.ones(3), atol=1e-8)


def test_cca_independent_sets_small():
    rng = np.random.default_rng(2)
    X, Y = rng.normal(size=(1000, 2)), rng.normal(size=(1000, 2))
    # Monte-Carlo reference on the same stream family: top correlations for independent draws
    ref = [cca(r.normal(size=(1000, 2)), r.normal(size=(1000, 2)))[0]
           for r in (np.random.default_rng(s) for s in range(20))]
    assert max(ref) < 0.15
    assert cca(X, Y)[0] < 0.15


def test_cca_affine_invariance_and_range():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(60, 3))
    Y = X[:, :2] @ rng.normal(size=(2, 2)) + 0.5 * rng.normal(size=(60, 2))
    base = cca(X, Y)
    M = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    np.testing.assert_allclose(cca(X @ M + 4.0, Y), base, atol=1e-8)
    assert np.all((base >= 0) & (base <= 1)) and np.all(np.diff(base) <= 0)


def test_cca_singular_without_ridge():
    X = np.random.default_rng(4).normal(size=(30, 2))
    X = np.column_stack([X, X[:, 0]])
    with pytest.raises(np.linalg.LinAlgError):
        cca(X, X[:, :2], ridge=0.0)
    assert np.all(np.isfinite(cca(X, X[:, :2])))


def test_summarize_sample_std():
    s = summarize([0.6, 0.7, 0.8])
    assert s["mean"] == pytest.approx(0.7)
    assert s["std"] == pytest.approx(0.1)


@pytest.fixture(scope="module")
def small_target():
    _, tgt = generate_synthetic(SyntheticConfig(num_source=4, num_target=12, num_timepoints=64), seed=0)
    return tgt


def test_analysis_constant_importance_errors(small_target):
    params = init_parameters(ModelConfig(extractor_channels=(2, 2, 2), head_channels=2, embed_dim=2,
                                         temporal_kernel=3), np.random.default_rng(0))
    with pytest.raises(ValueError, match="zero-variance"):
        importance_property_analysis(params, small_target, length=32)


def test_analysis_importance_equal_to_strength(small_target):
    params = init_parameters(ModelConfig(extractor_channels=(2, 2, 2), head_channels=2, embed_dim=2,
                                         temporal_kernel=3), np.random.default_rng(0))
    single = small_target.subset([0])
    result = importance_property_analysis(params, single, length=32,
                                          importance=node_strength(single.adjacency[0]))
    assert result["pearson"]["strength"] == pytest.approx(1.0)
    assert len(result["canonical_correlations"]) >= 1
