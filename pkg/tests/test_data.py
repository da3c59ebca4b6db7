import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from akann.data import (Dataset, VecsFormatError, compute_ground_truth, exact_scores, gaussian_mixture,
                        load_dataset, mean_recall, read_vecs, recall_at_k, synthetic_split, write_vecs)


def test_single_record_layout(tmp_path):
    path = tmp_path / "one.fvecs"
    write_vecs(path, np.array([[1.0, 2.0]]))
    raw = path.read_bytes()
    assert raw == b"\x02\x00\x00\x00" + struct.pack("<ff", 1.0, 2.0)
    assert read_vecs(path).tolist() == [[1.0, 2.0]]


def test_empty_file(tmp_path):
    path = tmp_path / "e.fvecs"
    path.write_bytes(b"")
    assert read_vecs(path).shape == (0, 0)
    with pytest.raises(ValueError):
        load_dataset(path)


@pytest.mark.parametrize("fmt,dtype", [("fvecs", np.float32), ("ivecs", np.int32), ("bvecs", np.uint8)])
def test_roundtrip_bit_exact(tmp_path, fmt, dtype):
    rng = np.random.default_rng(0)
    if fmt == "fvecs":
        x = rng.standard_normal((50, 7)).astype(dtype)
    else:
        x = rng.integers(0, 200, size=(50, 7)).astype(dtype)
    path = tmp_path / f"x.{fmt}"
    write_vecs(path, x)
    back = read_vecs(path)
    assert back.dtype == np.dtype(dtype)
    assert back.tobytes() == x.tobytes()


@settings(max_examples=40, deadline=None)
@given(x=hnp.arrays(np.float32, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=12),
                    elements=st.floats(-1e6, 1e6, width=32)))
def test_fvecs_roundtrip_property(tmp_path_factory, x):
    path = tmp_path_factory.mktemp("v") / "p.fvecs"
    write_vecs(path, x)
    assert read_vecs(path).tobytes() == x.tobytes()


def test_malformed_files(tmp_path):
    path = tmp_path / "bad.fvecs"
    write_vecs(path, np.ones((3, 4)))
    good = path.read_bytes()
    path.write_bytes(good[:-2])
    with pytest.raises(VecsFormatError):
        read_vecs(path)
    mixed = good[:20] + struct.pack("<i", 3) + good[24:-4]
    path.write_bytes(mixed)
    with pytest.raises(VecsFormatError):
        read_vecs(path)
    path.write_bytes(b"\x01\x00")
    with pytest.raises(VecsFormatError):
        read_vecs(path)
    with pytest.raises(ValueError):
        read_vecs(path, "xvecs")


def test_integer_overflow_rejected(tmp_path):
    with pytest.raises(OverflowError):
        write_vecs(tmp_path / "b.bvecs", np.array([[256]]))


def test_dataset_contract():
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan, 1.0]], dtype=np.float32))
    with pytest.raises(ValueError):
        Dataset(np.array([[2.0, 0.0]], dtype=np.float32), "angular")
    ds = Dataset.from_array(np.array([[3.0, 4.0]]), "angular")
    np.testing.assert_allclose(ds.vectors, [[0.6, 0.8]], atol=1e-7)
    with pytest.raises(ValueError):
        Dataset(np.ones(3, dtype=np.float32))


def test_query_equal_to_point_ranks_first():
    x = np.random.default_rng(1).standard_normal((100, 8)).astype(np.float32)
    gt = compute_ground_truth(Dataset.from_array(x), Dataset.from_array(x[[17]]), 5)
    assert gt.ids[0, 0] == 17
    assert gt.scores[0, 0] == pytest.approx(0.0, abs=1e-6)


def test_hand_checked_toy_set():
    base = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 1.0]])
    q = np.array([[2.0, 0.0]])
    gt = compute_ground_truth(Dataset.from_array(base), Dataset.from_array(q), 1)
    assert gt.ids.tolist() == [[1]]
    assert gt.scores[0, 0] == pytest.approx(1.0)
    ip = compute_ground_truth(Dataset.from_array(base), Dataset.from_array(q), 3, "ip")
    assert ip.ids.tolist() == [[1, 0, 2]]
    assert ip.scores[0].tolist() == [6.0, 0.0, 0.0]


def test_ties_break_by_id():
    base = np.ones((6, 3))
    gt = compute_ground_truth(Dataset.from_array(base), Dataset.from_array(np.zeros((1, 3))), 4)
    assert gt.ids.tolist() == [[0, 1, 2, 3]]


def test_angular_needs_normalized_inputs():
    raw = Dataset(np.array([[1.0, 0.0]], dtype=np.float32), "l2")
    with pytest.raises(ValueError):
        compute_ground_truth(raw, raw, 1, "angular")


def test_ground_truth_matches_full_sort():
    rng = np.random.default_rng(2)
    base = rng.standard_normal((500, 6)).astype(np.float32)
    qs = rng.standard_normal((20, 6)).astype(np.float32)
    gt = compute_ground_truth(Dataset.from_array(base), Dataset.from_array(qs), 10, chunk=7)
    full = exact_scores(base, qs, "l2")
    np.testing.assert_array_equal(gt.ids, np.argsort(full, axis=1, kind="stable")[:, :10])


def test_recall_examples():
    a = list(range(10))
    assert recall_at_k(a, a, 10) == 1.0
    assert recall_at_k(a, list(range(10, 20)), 10) == 0.0
    assert recall_at_k(a, list(range(5, 15)), 10) == 0.5
    with pytest.raises(ValueError):
        recall_at_k([1], [1, 2], 2)


def test_mean_recall():
    gt = compute_ground_truth(Dataset.from_array(np.eye(4)), Dataset.from_array(np.eye(4)[:2]), 1)
    assert mean_recall(np.array([[0], [3]]), gt, 1) == 0.5


def test_synthetic_determinism_and_disjoint_streams():
    a, qa = synthetic_split("mixture", 200, 10, 16, seed=3)
    b, qb = synthetic_split("mixture", 200, 10, 16, seed=3)
    assert a.tobytes() == b.tobytes() and qa.tobytes() == qb.tobytes()
    assert not np.array_equal(a[:10], qa)
    s, _ = synthetic_split("sphere", 100, 5, 8, seed=0)
    np.testing.assert_allclose(np.linalg.norm(s, axis=1), 1, atol=1e-6)
    with pytest.raises(ValueError):
        synthetic_split("cube", 1, 1, 1, 0)


def test_mixture_is_clustered():
    x = gaussian_mixture(2000, 32, seed=0, clusters=4, spread=0.1)
    # four tight blobs: most pairs are either near-identical or far apart in direction
    u = x / np.linalg.norm(x, axis=1, keepdims=True)
    cos = u[:200] @ u[:200].T
    assert np.mean(cos > 0.9) > 0.2
