import json

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from stgcn_transfer.data import (
    DatasetError,
    SyntheticConfig,
    TimeSeriesDataset,
    class_balanced_indices,
    generate_synthetic,
    kfold_split,
    load_dataset,
    meta_split,
    sample_class_balanced_batch,
    sample_subsequence,
    save_dataset,
)
from stgcn_transfer.evaluation import auc

SMALL = SyntheticConfig(num_source=12, num_target=20, num_nodes=22, num_timepoints=64)


def _write_subject(root, sid, x):
    np.savetxt(root / "subjects" / f"{sid}.csv", x, delimiter=",")


def _make_dir(tmp_path, P=22, T=235, n=2, labels=True):
    rng = np.random.default_rng(0)
    (tmp_path / "subjects").mkdir()
    ids = [f"s{i}" for i in range(n)]
    for sid in ids:
        _write_subject(tmp_path, sid, rng.normal(size=(P, T)))
    (tmp_path / "manifest.json").write_text(json.dumps({
        "num_nodes": P, "num_timepoints": T, "num_subjects": n, "label_map": {"TDC": 0, "ADHD": 1},
        "seed": None, "subjects": ids,
    }))
    if labels:
        (tmp_path / "labels.csv").write_text("id,label\n" + "\n".join(
            f"{sid},{'ADHD' if i % 2 else 'TDC'}" for i, sid in enumerate(ids)) + "\n")
    return ids


def test_load_two_subjects(tmp_path):
    _make_dir(tmp_path)
    ds = load_dataset(tmp_path)
    assert len(ds) == 2 and ds.num_nodes == 22 and ds.num_timepoints == 235
    np.testing.assert_array_equal(ds.labels, [0, 1])
    assert ds.normalized.shape == (2, 22, 22)


def test_load_wrong_row_count_names_file(tmp_path):
    _make_dir(tmp_path)
    _write_subject(tmp_path, "s1", np.random.default_rng(1).normal(size=(21, 235)))
    with pytest.raises(DatasetError, match="s1.csv"):
        load_dataset(tmp_path)


def test_load_empty_directory(tmp_path):
    with pytest.raises(DatasetError):
        load_dataset(tmp_path)


def test_load_missing_label(tmp_path):
    _make_dir(tmp_path)
    (tmp_path / "labels.csv").write_text("id,label\ns0,TDC\n")
    with pytest.raises(DatasetError, match="s1"):
        load_dataset(tmp_path)


def test_load_zero_variance_node(tmp_path):
    _make_dir(tmp_path)
    x = np.random.default_rng(2).normal(size=(22, 235))
    x[5] = 3.0
    _write_subject(tmp_path, "s0", x)
    with pytest.raises(DatasetError, match="node 5"):
        load_dataset(tmp_path)


def test_save_load_round_trip(tmp_path):
    src, tgt = generate_synthetic(SMALL, seed=3)
    save_dataset(tgt, tmp_path / "t")
    back = load_dataset(tmp_path / "t")
    assert back.ids == tgt.ids
    np.testing.assert_array_equal(back.series, tgt.series)
    np.testing.assert_array_equal(back.labels, tgt.labels)


def test_subsequence_full_length_is_deterministic():
    x = np.arange(12.0).reshape(3, 4)
    out = sample_subsequence(x, 4, np.random.default_rng(0))
    assert out.shape == (3, 4, 1)
    np.testing.assert_array_equal(out[..., 0], x)


def test_subsequence_too_long():
    with pytest.raises(DatasetError):
        sample_subsequence(np.zeros((2, 5)), 6, np.random.default_rng(0))


def test_subsequence_offsets_differ_at_expected_rate():
    T, L = 10, 6  # 5 possible offsets
    x = np.tile(np.arange(T, dtype=float), (2, 1))
    rng = np.random.default_rng(123)
    differ = sum(sample_subsequence(x, L, rng)[0, 0, 0] != sample_subsequence(x, L, rng)[0, 0, 0]
                 for _ in range(1000))
    # two independent uniform offsets among 5 values differ with probability 4/5
    assert abs(differ / 1000 - 4 / 5) < 0.05


def test_balanced_batch_counts():
    src, tgt = generate_synthetic(SMALL, seed=0)
    rng = np.random.default_rng(0)
    x, graphs, labels, idx = sample_class_balanced_batch(tgt, 32, rng, length=16)
    assert x.shape == (32, 22, 16, 1) and graphs.shape == (32, 22, 22)
    assert np.bincount(labels).tolist() == [16, 16]
    for _ in range(100):
        idx = class_balanced_indices(tgt.labels, 8, rng)
        assert np.bincount(tgt.labels[idx], minlength=2).tolist() == [4, 4]


def test_balanced_batch_repeats_single_subject_per_class():
    labels = np.array([0, 1])
    idx = class_balanced_indices(labels, 6, np.random.default_rng(0))
    assert sorted(idx.tolist()) == [0, 0, 0, 1, 1, 1]


def test_balanced_batch_missing_class():
    with pytest.raises(DatasetError):
        class_balanced_indices(np.zeros(5, dtype=int), 4, np.random.default_rng(0))


def test_synthetic_deterministic():
    a = generate_synthetic(SMALL, seed=9)
    b = generate_synthetic(SMALL, seed=9)
    for x, y in zip(a, b):
        assert x.series.tobytes() == y.series.tobytes()
        assert x.labels.tobytes() == y.labels.tobytes()


def test_synthetic_graph_invariants():
    src, tgt = generate_synthetic(SMALL, seed=1)
    for ds in (src, tgt):
        A = ds.adjacency
        assert np.allclose(A, A.transpose(0, 2, 1))
        assert np.all(np.diagonal(A, axis1=1, axis2=2) == 0)
        assert A.min() >= 0 and A.max() <= 1
        assert np.abs(np.linalg.eigvalsh(ds.normalized)).max() <= 1 + 1e-12


def _upper(ds):
    iu = np.triu_indices(ds.num_nodes, 1)
    return ds.adjacency[:, iu[0], iu[1]]


def test_default_synthetic_is_learnable_by_connectivity_logistic_oracle():
    _, tgt = generate_synthetic(SyntheticConfig(num_source=4), seed=0)
    X, y = _upper(tgt), tgt.labels
    rng = np.random.default_rng(0)
    perm = rng.permutation(len(y))
    train, test = perm[:140], perm[140:]
    clf = LogisticRegression(max_iter=5000).fit(X[train], y[train])
    assert auc(clf.decision_function(X[test]), y[test]) > 0.65


def test_zero_separability_has_no_class_signal():
    _, tgt = generate_synthetic(SyntheticConfig(num_source=4, separability=0.0), seed=0)
    X, y = _upper(tgt), tgt.labels
    D = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))
    off = ~np.eye(len(y), dtype=bool)

    def cross_minus_within(labels):
        same = labels[:, None] == labels[None, :]
        return D[~same].mean() - D[same & off].mean()

    observed = cross_minus_within(y)
    rng = np.random.default_rng(1)
    null = np.array([cross_minus_within(rng.permutation(y)) for _ in range(300)])
    p_value = (1 + np.sum(null >= observed)) / (1 + len(null))
    assert p_value > 0.01


def test_kfold_balanced_and_partitioning():
    labels = np.r_[np.zeros(50, int), np.ones(50, int)]
    ds = TimeSeriesDataset(ids=[str(i) for i in range(100)],
                           series=np.random.default_rng(0).normal(size=(100, 3, 8)), labels=labels)
    folds = kfold_split(ds, 5, seed=0)
    tests = [te for _, te in folds]
    assert all(len(te) == 20 and np.bincount(labels[te]).tolist() == [10, 10] for te in tests)
    assert sorted(np.concatenate(tests).tolist()) == list(range(100))
    for tr, te in folds:
        assert not set(tr) & set(te)
    again = kfold_split(ds, 5, seed=0)
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(folds, again))


def test_kfold_too_many_folds():
    labels = np.r_[np.zeros(8, int), np.ones(3, int)]
    ds = TimeSeriesDataset(ids=[str(i) for i in range(11)],
                           series=np.random.default_rng(0).normal(size=(11, 3, 8)), labels=labels)
    with pytest.raises(DatasetError):
        kfold_split(ds, 5)


def test_kfold_ratio_within_one_subject():
    labels = np.r_[np.zeros(143, int), np.ones(102, int)]
    ds = TimeSeriesDataset(ids=[str(i) for i in range(245)],
                           series=np.random.default_rng(0).normal(size=(245, 2, 5)), labels=labels)
    for _, te in kfold_split(ds, 5, seed=4):
        expected = len(te) * 102 / 245
        assert abs(labels[te].sum() - expected) <= 1


def test_meta_split_sizes():
    labels = np.r_[np.zeros(114, int), np.ones(82, int)]
    tr, val = meta_split(labels, 0.8, np.random.default_rng(0))
    assert (len(tr), len(val)) == (156, 40)


def test_meta_split_disjoint_and_exhaustive():
    labels = np.r_[np.zeros(23, int), np.ones(17, int)]
    pool = np.arange(100, 140)
    for seed in range(50):
        tr, val = meta_split(labels, 0.8, np.random.default_rng(seed), indices=pool)
        assert not set(tr) & set(val)
        assert sorted(np.r_[tr, val].tolist()) == pool.tolist()
        assert set(labels[tr - 100]) == {0, 1} and set(labels[val - 100]) == {0, 1}


def test_meta_split_full_ratio_rejected():
    with pytest.raises(DatasetError):
        meta_split(np.r_[np.zeros(5, int), np.ones(5, int)], 1.0)
