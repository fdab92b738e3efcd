import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dbat.data import LabeledDataset, adv_label, fold_back, load_csv, make_blobs


@pytest.fixture(scope="module")
def blobs():
    return make_blobs([(-1, 0), (1, 0)], 0.1, 10000, 0)


def test_blob_counts_and_means(blobs):
    assert len(blobs) == 20000 and blobs.num_classes == 2
    for c, center in enumerate([(-1, 0), (1, 0)]):
        mean = blobs.features[blobs.labels == c].mean(axis=0)
        assert np.all(np.abs(mean - center) < 0.01)


def test_blob_covariance(blobs):
    for c in range(2):
        cov = np.cov(blobs.features[blobs.labels == c].T)
        assert np.all(np.abs(np.diag(cov) / 0.01 - 1) < 0.1)
        assert abs(cov[0, 1]) < 0.1 * 0.01


def test_blobs_tiny_std():
    ds = make_blobs([(-1, 0), (1, 0)], 1e-12, 5, 0)
    centers = np.array([(-1, 0), (1, 0)])[ds.labels]
    assert np.all(np.abs(ds.features - centers) < 1e-9)


def test_blobs_deterministic():
    a = make_blobs([(0, 0), (3, 3)], 0.5, 50, 3)
    b = make_blobs([(0, 0), (3, 3)], 0.5, 50, 3)
    assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)


def test_blobs_bad_args():
    with pytest.raises(ValueError):
        make_blobs([(0, 0)], 0.1, 5, 0)
    with pytest.raises(ValueError):
        make_blobs([(0, 0), (1, 1)], 0.0, 5, 0)


def test_dataset_is_read_only(blobs):
    with pytest.raises(ValueError):
        blobs.features[0, 0] = 5.0


def test_dataset_label_range():
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((2, 2)), [0, 2], 2)
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((3, 2)), [0, 1], 2)


def write(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text)
    return p


def test_csv_basic(tmp_path):
    ds = load_csv(write(tmp_path, "a,b,label\n1,2,0\n3,4,1\n5,6,0\n"))
    assert len(ds) == 3 and ds.num_classes == 2
    assert ds.features.tolist() == [[1, 2], [3, 4], [5, 6]]


def test_csv_label_column_anywhere(tmp_path):
    ds = load_csv(write(tmp_path, "y,a\n1,0.5\n0,0.25\n"), label_column="y")
    assert ds.labels.tolist() == [1, 0] and ds.features.ravel().tolist() == [0.5, 0.25]


def test_csv_missing_label_column(tmp_path):
    with pytest.raises(ValueError, match="label"):
        load_csv(write(tmp_path, "a,b\n1,2\n"))


def test_csv_empty_class_warns(tmp_path):
    with pytest.warns(UserWarning, match=r"\[1\]"):
        ds = load_csv(write(tmp_path, "a,label\n1,0\n2,2\n"))
    assert ds.num_classes == 3 and ds.missing_classes() == [1]


@pytest.mark.parametrize("text", ["a,label\n1,0\n2\n", "a,label\nx,0\n", "a,label\n1,-1\n", "a,label\n1,0.5\n"])
def test_csv_malformed(tmp_path, text):
    with pytest.raises(ValueError):
        load_csv(write(tmp_path, text))


def test_adv_label_examples():
    assert adv_label(0, 10) == 10 and adv_label(9, 10) == 19


def test_adv_label_range_error():
    with pytest.raises(ValueError):
        adv_label(10, 10)


@given(st.integers(1, 50))
def test_adv_label_fold_back_inverse(c):
    y = np.arange(c)
    a = adv_label(y, c)
    assert np.array_equal(np.sort(a), np.arange(c, 2 * c))
    assert np.array_equal(fold_back(a, c), y)
    assert np.array_equal(fold_back(y, c), y)
