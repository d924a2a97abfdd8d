import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from druid_vl.data import (AgentShard, DataFormatError, Dataset, format_libsvm, ijcnn1_like,
                           make_synthetic, parse_libsvm, parse_libsvm_lines, partition,
                           sample_batch, write_libsvm)


def test_parse_basic_line():
    ds = parse_libsvm_lines(["1 1:0.5 3:-2"], d=3)
    np.testing.assert_array_equal(ds[0].w, [0.5, 0, -2])
    assert ds[0].y == 1


def test_parse_negative_label():
    ds = parse_libsvm_lines(["-1 2:1"], d=2)
    np.testing.assert_array_equal(ds[0].w, [0, 1])
    assert ds[0].y == 0


def test_parse_errors_carry_line_number():
    with pytest.raises(DataFormatError, match="line 2"):
        parse_libsvm_lines(["1 1:1", "0 1:abc"], d=2)
    with pytest.raises(DataFormatError, match="line 1"):
        parse_libsvm_lines(["1 4:1"], d=3)
    with pytest.raises(DataFormatError):
        parse_libsvm_lines(["7 1:1"], d=1)


def test_parse_file_limit(tmp_path):
    ds = ijcnn1_like(50)
    write_libsvm(ds, tmp_path / "a.svm")
    back = parse_libsvm(tmp_path / "a.svm", 22, limit=40)
    assert len(back) == 40
    np.testing.assert_array_equal(back.W, ds.W[:40])
    np.testing.assert_array_equal(back.y, ds.y[:40])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_format_roundtrip(d, N, seed):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(N, d)) * (rng.random((N, d)) < 0.6)
    y = rng.integers(0, 2, N).astype(float)
    back = parse_libsvm_lines(format_libsvm(Dataset(W, y)).splitlines(), d)
    np.testing.assert_array_equal(back.W, W)
    np.testing.assert_array_equal(back.y, y)


def test_even_split():
    shards = partition(ijcnn1_like(4000), 10, "shuffled", np.random.default_rng(0))
    assert [s.size for s in shards] == [400] * 10


def test_contiguous_sizes_and_identity():
    ds = Dataset(np.arange(10.0).reshape(5, 2), np.array([0, 1, 0, 1, 1.0]))
    assert [s.size for s in partition(ds, 2, "contiguous")] == [3, 2]
    one = partition(ds, 1, "contiguous")[0]
    np.testing.assert_array_equal(one.W, ds.W)
    with pytest.raises(DataFormatError):
        partition(ds, 6, "contiguous")


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 60), st.integers(1, 12), st.integers(0, 1000))
def test_partition_is_set_partition(N, n, seed):
    if n > N:
        return
    ds = Dataset(np.arange(N, dtype=float)[:, None], np.zeros(N))
    shards = partition(ds, n, "shuffled", np.random.default_rng(seed))
    got = np.concatenate([s.W[:, 0] for s in shards])
    assert sorted(got) == list(range(N))
    assert {s.size for s in shards} <= {N // n, -(-N // n)}


def test_full_batch_is_permutation():
    idx = sample_batch(400, 400, np.random.default_rng(0))
    assert sorted(idx) == list(range(400))


def test_batch_reproducible_and_bounds():
    shard = AgentShard(0, np.zeros((400, 2)), np.zeros(400))
    a = sample_batch(shard, 100, np.random.default_rng(9))
    b = sample_batch(shard, 100, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)
    assert len(set(a)) == 100
    with pytest.raises(ValueError):
        sample_batch(shard, 401, np.random.default_rng(0))


def test_batch_frequencies_uniform():
    rng = np.random.default_rng(123)
    counts = np.bincount([sample_batch(10, 1, rng)[0] for _ in range(100_000)], minlength=10)
    sd = np.sqrt(1e5 * 0.1 * 0.9)
    assert np.all(np.abs(counts - 1e4) <= 3 * sd)


def test_standin_shape():
    ds = ijcnn1_like()
    assert ds.W.shape == (4000, 22)
    assert set(np.unique(ds.y)) == {0.0, 1.0}
    assert 0.07 < ds.y.mean() < 0.13
    assert np.all(np.abs(ds.W) <= 1)
    np.testing.assert_array_equal(ds.W[:, :10].sum(axis=1), 1.0)
    np.testing.assert_array_equal(ijcnn1_like().W, ds.W)
    assert make_synthetic(10, 4, np.random.default_rng(0), n_categorical=2).W.shape == (10, 4)


def test_synthetic_rejects_wide_one_hot():
    with pytest.raises(ValueError, match="n_categorical"):
        make_synthetic(10, 3, np.random.default_rng(0))
