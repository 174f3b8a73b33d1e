import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from replaybounds.numerics import RngStream
from replaybounds.tasks import (BufferIndex, IdxCountMismatch, IdxMagicError, IdxTruncated, InsufficientSamples,
                                TaskSequence, draw_buffer_index, draw_membership, flip_labels,
                                gen_synthetic_sequence, load_idx, split_classes, write_idx)


def _seq(T=3, n=10, dim=2, seed=0):
    return gen_synthetic_sequence(T, n, dim, 4.0, 0.5, RngStream(seed))


def test_synthetic_shapes_and_determinism():
    a, b = _seq(), _seq()
    assert a.features.shape == (3, 10, 2, 2) and a.labels.shape == (3, 10, 2)
    np.testing.assert_array_equal(a.features, b.features)
    assert not np.array_equal(a.features, _seq(seed=1).features)
    assert a.meta["generator"] == "gaussian_rotation"


def test_synthetic_rejects_bad_config():
    with pytest.raises(ValueError, match="invalid config"):
        gen_synthetic_sequence(1, 10, 2, 4.0, 0.5, RngStream(0))
    with pytest.raises(ValueError, match="invalid config"):
        gen_synthetic_sequence(3, 10, 2, 0.0, 0.5, RngStream(0))


def test_synthetic_class_means_rotate():
    seq = gen_synthetic_sequence(2, 4000, 2, 4.0, math.pi / 2, RngStream(1))
    for t, axis in ((0, 0), (1, 1)):
        X = seq.features[t].reshape(-1, 2)
        y = seq.labels[t].reshape(-1)
        diff = X[y == 1].mean(0) - X[y == 0].mean(0)
        assert diff[axis] == pytest.approx(4.0, abs=0.15)
        assert diff[1 - axis] == pytest.approx(0.0, abs=0.15)


def test_training_view_picks_membership_column():
    seq = _seq()
    S = draw_membership(seq.T, seq.n, RngStream(2))
    X, y = seq.training_view(1, S)
    for j in range(seq.n):
        np.testing.assert_array_equal(X[j], seq.features[1, j, S[1, j]])
        assert y[j] == seq.labels[1, j, S[1, j]]


def test_sequence_is_read_only_and_roundtrips():
    seq = _seq()
    with pytest.raises(ValueError):
        seq.features[0, 0, 0, 0] = 1.0
    back = TaskSequence.from_json(seq.to_json())
    np.testing.assert_array_equal(back.features, seq.features)
    np.testing.assert_array_equal(back.labels, seq.labels)
    assert back.meta == seq.meta


def test_sequence_validation():
    with pytest.raises(ValueError):
        TaskSequence(np.zeros((2, 3, 2, 2)), np.full((2, 3, 2), 5), 2)
    with pytest.raises(ValueError):
        TaskSequence(np.zeros((2, 3, 3, 2)), np.zeros((2, 3, 3), dtype=int), 2)


def test_membership_bits():
    S = draw_membership(4, 1000, RngStream(0))
    assert S.shape == (4, 1000) and set(np.unique(S)) <= {0, 1}
    assert S.mean() == pytest.approx(0.5, abs=0.03)
    with pytest.raises(ValueError):
        draw_membership(0, 3, RngStream(0))


def test_flip_labels_rate_and_range():
    seq = gen_synthetic_sequence(2, 5000, 2, 4.0, 0.0, RngStream(0))
    noisy = flip_labels(seq, 0.1, RngStream(1))
    assert (noisy.labels != seq.labels).mean() == pytest.approx(0.1, abs=0.01)
    assert noisy.meta["delta"] == 0.1
    np.testing.assert_array_equal(flip_labels(seq, 0.0, RngStream(1)).labels, seq.labels)
    with pytest.raises(ValueError):
        flip_labels(seq, 1.5, RngStream(1))


@settings(max_examples=100, deadline=None)
@given(current=st.integers(1, 6), n=st.integers(1, 12), seed=st.integers(0, 10 ** 6), data=st.data())
def test_uniform_buffer_is_product(current, n, seed, data):
    k = data.draw(st.integers(0, current))
    l = data.draw(st.integers(0, n))
    buf = draw_buffer_index(current, k, l, n, RngStream(seed))
    assert buf.k == k and buf.size == k * l
    assert len(set(buf.tasks.tolist())) == k and all(0 <= u < current for u in buf.tasks)
    if k:
        assert all(np.array_equal(row, buf.samples[0]) for row in buf.samples)
        assert len(set(buf.samples[0].tolist())) == l
    assert len({tuple(c) for c in buf.cells()}) == k * l


def test_buffer_draw_errors():
    with pytest.raises(ValueError):
        draw_buffer_index(2, 3, 1, 5, RngStream(0))
    with pytest.raises(ValueError):
        draw_buffer_index(2, 1, 6, 5, RngStream(0))
    with pytest.raises(ValueError):
        draw_buffer_index(2, 1, 2, 5, RngStream(0), mode="other")


def test_buffer_is_uniform_over_subsets():
    counts = {}
    for s in range(3000):
        buf = draw_buffer_index(3, 2, 1, 3, RngStream(s))
        key = (tuple(buf.tasks), int(buf.samples[0, 0]))
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 3 * 3
    assert max(counts.values()) / min(counts.values()) < 1.4


def test_balanced_buffer_per_task_rows():
    labels = np.zeros((3, 8), dtype=int)
    labels[:, :3] = 1
    buf = draw_buffer_index(2, 2, 4, 8, RngStream(0), mode="balanced", train_labels=labels, num_classes=2)
    for u, row in zip(buf.tasks, buf.samples):
        assert (labels[u, row] == 1).sum() == 2
    with pytest.raises(ValueError):
        draw_buffer_index(2, 1, 2, 8, RngStream(0), mode="balanced")


def test_buffer_restrict_and_roundtrip():
    buf = BufferIndex(np.array([0, 2]), np.array([[1, 3], [1, 3]]))
    assert buf.restrict(2).tasks.tolist() == [0]
    back = BufferIndex.from_dict(buf.to_dict())
    np.testing.assert_array_equal(back.samples, buf.samples)
    assert BufferIndex.empty(3).size == 0


def test_idx_roundtrip(tmp_path):
    g = np.random.default_rng(0)
    images = g.integers(0, 256, size=(7, 3, 4), dtype=np.uint8)
    labels = g.integers(0, 10, size=7)
    write_idx(images, labels, tmp_path / "i", tmp_path / "l")
    X, y = load_idx(tmp_path / "i", tmp_path / "l")
    np.testing.assert_allclose(X, images.reshape(7, 12) / 255.0)
    np.testing.assert_array_equal(y, labels)


def test_idx_errors(tmp_path):
    images = np.zeros((4, 2, 2), dtype=np.uint8)
    write_idx(images, np.arange(4), tmp_path / "i", tmp_path / "l")
    write_idx(images[:3], np.arange(3), tmp_path / "i3", tmp_path / "l3")
    with pytest.raises(IdxCountMismatch):
        load_idx(tmp_path / "i", tmp_path / "l3")
    data = (tmp_path / "i").read_bytes()
    (tmp_path / "short").write_bytes(data[:-1])
    with pytest.raises(IdxTruncated):
        load_idx(tmp_path / "short", tmp_path / "l")
    (tmp_path / "bad").write_bytes(b"\x00\x00\x08\x01" + data[4:])
    with pytest.raises(IdxMagicError):
        load_idx(tmp_path / "bad", tmp_path / "l")


def test_split_classes():
    g = np.random.default_rng(0)
    X = g.normal(size=(400, 5))
    y = np.repeat(np.arange(4), 100)
    seq = split_classes(X, y, 2, 2, 30, RngStream(0))
    assert seq.features.shape == (2, 30, 2, 5)
    assert set(np.unique(seq.labels)) == {0, 1}
    src = np.array(seq.meta["source_indices"])
    assert len(np.unique(src)) == src.size
    assert seq.meta["class_assignment"] == [[0, 1], [2, 3]]
    assert set(y[src[1].ravel()]) <= {2, 3}
    with pytest.raises(InsufficientSamples):
        split_classes(X, y, 2, 3, 30, RngStream(0))
    with pytest.raises(InsufficientSamples):
        split_classes(X, y, 2, 2, 150, RngStream(0))


def test_smaller_n_is_a_prefix_of_larger_n():
    small = gen_synthetic_sequence(3, 50, 2, 4.0, 0.5, RngStream(5))
    big = gen_synthetic_sequence(3, 200, 2, 4.0, 0.5, RngStream(5))
    np.testing.assert_array_equal(small.features, big.features[:, :50])
    np.testing.assert_array_equal(draw_membership(3, 50, RngStream(2)), draw_membership(3, 200, RngStream(2))[:, :50])
    np.testing.assert_array_equal(flip_labels(small, 0.2, RngStream(1)).labels,
                                  flip_labels(big, 0.2, RngStream(1)).labels[:, :50])
