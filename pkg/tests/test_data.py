import numpy as np
import pytest

from cyclelr import data
from cyclelr.data import DataError


def test_two_moons_shape_and_split():
    ds = data.two_moons()
    assert ds.features.shape == (2000, 2)
    assert np.bincount(ds.labels).tolist() == [1000, 1000]
    assert ds.train_idx.size == 1600 and ds.test_idx.size == 400
    assert np.intersect1d(ds.train_idx, ds.test_idx).size == 0


def test_two_moons_noise_free_geometry():
    ds = data.two_moons(n=10, noise_sigma=0.0)
    upper, lower = ds.features[:5], ds.features[5:]
    np.testing.assert_allclose(np.hypot(upper[:, 0], upper[:, 1]), 1.0)
    np.testing.assert_allclose(np.hypot(lower[:, 0] - 1.0, lower[:, 1] - 0.5), 1.0)
    assert upper[0].tolist() == [1.0, 0.0]


def test_seeded_reproducibility():
    for gen in data.GENERATORS.values():
        assert gen(seed=4) == gen(seed=4)
        assert gen(seed=4) != gen(seed=5)


def test_noise_level():
    clean = data.two_moons(n=20000, noise_sigma=0.0)
    noisy = data.two_moons(n=20000, noise_sigma=0.3, seed=1)
    assert (noisy.features - clean.features).std() == pytest.approx(0.3, rel=0.02)


def test_blobs():
    ds = data.gaussian_blobs(n=3000, k=3, separation=10.0, noise_sigma=0.5, seed=2)
    centres = data.blob_centres(3, 10.0)
    for j in range(3):
        np.testing.assert_allclose(ds.features[ds.labels == j].mean(axis=0), centres[j], atol=0.06)
    np.testing.assert_allclose(np.linalg.norm(centres, axis=1), 10.0)
    assert data.gaussian_blobs(n=40, k=4, dim=5).d == 5


def test_spirals_radius_and_arms():
    ds = data.spirals(n=400, turns=2.0, k=4)
    r = np.hypot(ds.features[:, 0], ds.features[:, 1])
    m = 100
    np.testing.assert_allclose(r[:m], (np.arange(m) + 1) / m)
    assert ds.k == 4 and np.bincount(ds.labels).tolist() == [100] * 4


@pytest.mark.parametrize("call", [
    lambda: data.two_moons(n=3),
    lambda: data.two_moons(noise_sigma=-1),
    lambda: data.gaussian_blobs(n=10, k=3),
    lambda: data.gaussian_blobs(k=1),
    lambda: data.spirals(n=9, k=2),
    lambda: data.two_moons(test_fraction=1.0),
])
def test_generator_validation(call):
    with pytest.raises(DataError):
        call()


def test_arrays_are_read_only():
    ds = data.two_moons(n=20)
    with pytest.raises(ValueError):
        ds.features[0, 0] = 5.0


def test_csv_roundtrip(tmp_path):
    ds = data.gaussian_blobs(n=30, k=3, seed=1)
    path = tmp_path / "d.csv"
    data.write_csv(ds, path)
    back = data.load_csv(path, seed=1)
    assert back == ds


def test_csv_label_reindexing_and_named_column(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("cls,a,b\n7,0.5,1\n3,1.5,2\n7,2.5,3\n")
    ds = data.load_csv(path, label_column="cls", test_fraction=0.0)
    assert ds.labels.tolist() == [1, 0, 1]
    assert ds.features.tolist() == [[0.5, 1.0], [1.5, 2.0], [2.5, 3.0]]
    assert ds.k == 2


@pytest.mark.parametrize("text,msg", [
    ("", "empty"),
    ("a,label\n", "no data rows"),
    ("a,label\n1,0\n2\n", ":3: expected 2 fields"),
    ("a,label\nx,0\n", ":2: non-numeric"),
    ("a,label\n1,0.5\n", "not an integer"),
])
def test_csv_errors(tmp_path, text, msg):
    path = tmp_path / "d.csv"
    path.write_text(text)
    with pytest.raises(DataError, match=msg):
        data.load_csv(path)


def test_minibatches_cover_training_rows_once():
    ds = data.two_moons(n=100)
    batches = data.minibatches(ds, 30, seed=0, epoch=0)
    assert [b.size for b in batches] == [30, 30, 20]
    assert np.array_equal(np.sort(np.concatenate(batches)), ds.train_idx)
    assert len(batches) == data.batches_per_epoch(80, 30)


def test_minibatches_seeded_per_epoch():
    ds = data.two_moons(n=100)
    a = data.minibatches(ds, 10, seed=3, epoch=1)
    b = data.minibatches(ds, 10, seed=3, epoch=1)
    c = data.minibatches(ds, 10, seed=3, epoch=2)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not all(np.array_equal(x, y) for x, y in zip(a, c))


def test_full_batch_is_unshuffled():
    ds = data.two_moons(n=100)
    (only,) = data.minibatches(ds, 80, seed=9, epoch=5)
    assert np.array_equal(only, ds.train_idx)
    with pytest.raises(DataError):
        data.minibatches(ds, 81, seed=0, epoch=0)


def test_split_is_partition():
    tr, te = data.split(101, 0.3, 0)
    assert te.size == 30 and tr.size == 71
    assert np.array_equal(np.sort(np.concatenate([tr, te])), np.arange(101))
