import numpy as np
import pytest

from layermatch.data import (
    Domain,
    DomainDataset,
    SigmoidRange,
    load_labeled_csv,
    load_multifeatures,
    split_trial,
    standardize,
)
from layermatch.exceptions import LoadError


def test_standardize_zero_mean_unit_var(rng):
    x = rng.normal(3.0, 2.5, size=(200, 7))
    z, fit = standardize(x)
    assert np.allclose(z.mean(axis=0), 0.0, atol=1e-10)
    assert np.allclose(z.std(axis=0), 1.0, atol=1e-10)
    # the fitted transform reproduces the training output
    assert np.allclose(fit.apply(x), z)


def test_standardize_constant_column(rng):
    x = rng.normal(size=(50, 3))
    x[:, 1] = 4.2
    z, _ = standardize(x)
    assert np.allclose(z[:, 1], 0.0)
    assert np.isfinite(z).all()


def test_sigmoid_range_band(rng):
    x = rng.normal(size=(100, 5))
    sr = SigmoidRange.fit(x)
    y = sr.apply(x)
    assert y.min() >= 0.1 - 1e-12 and y.max() <= 0.9 + 1e-12
    # out-of-range values extend linearly past the band
    wide = sr.apply(x * 3.0)
    assert wide.max() > 0.9


def test_load_multifeatures_shapes(tmp_path, rng):
    profile = rng.integers(0, 100, size=(2000, 216))
    pixel = rng.integers(0, 7, size=(2000, 240))
    pp = tmp_path / "prof.txt"
    xp = tmp_path / "pix.txt"
    np.savetxt(pp, profile, fmt="%d")
    np.savetxt(xp, pixel, fmt="%d")
    source, target = load_multifeatures(str(pp), str(xp))
    assert source.domain is Domain.SOURCE and target.domain is Domain.TARGET
    assert source.features.shape == (2000, 240)  # pixel view is the source
    assert target.features.shape == (2000, 216)
    assert np.array_equal(source.labels, np.repeat(np.arange(10), 200))


def test_load_multifeatures_rejects_bad_shape(tmp_path, rng):
    pp = tmp_path / "prof.txt"
    xp = tmp_path / "pix.txt"
    np.savetxt(pp, rng.random((10, 216)))
    np.savetxt(xp, rng.random((10, 240)))
    with pytest.raises(LoadError):
        load_multifeatures(str(pp), str(xp))


def test_load_labeled_csv(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1,0.5,2.0\n-1,1.5,3.0\n1,2.5,4.0\n")
    ds = load_labeled_csv(str(path), Domain.SOURCE)
    assert ds.features.shape == (3, 2)
    assert ds.labels.tolist() == [1, -1, 1]


def test_load_labeled_csv_rejects_text(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1,0.5\n1,oops\n")
    with pytest.raises(LoadError, match="oops"):
        load_labeled_csv(str(path), Domain.SOURCE)


def _toy_pair(n_per=30, dim_s=8, dim_t=5, classes=(0, 1, 2), seed=0):
    rng = np.random.default_rng(seed)
    labels = np.repeat(classes, n_per)
    n = labels.size
    fs = rng.normal(size=(n, dim_s)) + labels[:, None]
    ft = rng.normal(size=(n, dim_t)) - labels[:, None]
    return (
        DomainDataset(fs, labels, Domain.SOURCE),
        DomainDataset(ft, labels, Domain.TARGET),
    )


def test_split_trial_blocks_disjoint():
    source, target = _toy_pair()
    split = split_trial(source, target, (0, 2), ratios=(0.6, 0.2), seed=3)
    co = set(split.co_indices.tolist())
    train = set(split.train_indices.tolist())
    test = set(split.test_indices.tolist())
    assert not (co & train) and not (co & test) and not (train & test)
    # task scope: every index belongs to the two task classes
    task_rows = set(np.flatnonzero((source.labels == 0) | (source.labels == 2)).tolist())
    assert (co | train | test) == task_rows
    assert len(co) == round(0.6 * 60)
    assert len(train) == round(0.2 * 60)


def test_split_trial_pairs_aligned():
    source, target = _toy_pair()
    split = split_trial(source, target, (0, 1), seed=11)
    # co rows must be the same instances in both domains
    z, fit = standardize(source.features[split.co_indices])
    assert np.allclose(split.co_source, z)
    assert np.array_equal(
        split.train_source[1], source.labels[split.train_indices]
    )


def test_split_trial_standardizes_on_co_block_only():
    source, target = _toy_pair()
    split = split_trial(source, target, (0, 1), seed=5)
    assert np.allclose(split.co_source.mean(axis=0), 0.0, atol=1e-9)
    # train rows use the co block's statistics, not their own
    assert not np.allclose(split.train_source[0].mean(axis=0), 0.0, atol=1e-3)


def test_split_trial_global_scope_mixes_classes():
    source, target = _toy_pair()
    split = split_trial(source, target, (0, 1), seed=2, co_scope="global")
    co_labels = set(source.labels[split.co_indices].tolist())
    assert 2 in co_labels  # off-task class present in co block
    for idx_set in (split.train_indices, split.test_indices):
        assert set(source.labels[idx_set].tolist()) <= {0, 1}


def test_split_trial_deterministic():
    source, target = _toy_pair()
    a = split_trial(source, target, (1, 2), seed=9)
    b = split_trial(source, target, (1, 2), seed=9)
    assert np.array_equal(a.co_indices, b.co_indices)
    assert np.allclose(a.co_source, b.co_source)
    c = split_trial(source, target, (1, 2), seed=10)
    assert not np.array_equal(a.co_indices, c.co_indices)


def test_split_trial_validates():
    source, target = _toy_pair()
    with pytest.raises(ValueError, match="absent"):
        split_trial(source, target, (0, 7))
    with pytest.raises(ValueError, match="ratios"):
        split_trial(source, target, (0, 1), ratios=(0.9, 0.2))
    with pytest.raises(ValueError, match="co_scope"):
        split_trial(source, target, (0, 1), co_scope="nope")


def test_shipped_dataset_contract(dataset):
    source, target = dataset
    assert source.features.shape == (2000, 240)
    assert target.features.shape == (2000, 216)
    assert np.array_equal(source.labels, target.labels)
    assert (source.features >= 0).all() and (target.features >= 0).all()
