import gzip
import struct
from collections import Counter

import numpy as np
import pytest

from src.adafl.data import (
    DataSpec,
    Dataset,
    DatasetError,
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
    PartitionError,
    build_federated_data,
    generate_synthetic,
    load_idx,
    partition_iid,
    partition_noniid_shards,
    train_test_split,
)


def _write_images(path, images, magic=2051):
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    payload = struct.pack('>IIII', magic, count, rows, cols) + images.tobytes()
    if str(path).endswith('.gz'):
        with gzip.open(path, 'wb') as f:
            f.write(payload)
    else:
        path.write_bytes(payload)
    return path


def _write_labels(path, labels, magic=2049, count=None):
    labels = np.asarray(labels, dtype=np.uint8)
    count = len(labels) if count is None else count
    path.write_bytes(struct.pack('>II', magic, count) + labels.tobytes())
    return path


def _sorted_dataset(n, n_classes):
    labels = np.repeat(np.arange(n_classes), n // n_classes)
    features = np.arange(n, dtype=np.float64).reshape(n, 1)
    return Dataset(features, labels, n_classes)


class TestDataset:

    def test_row_count_must_match_labels(self):
        with pytest.raises(DatasetError):
            Dataset(np.zeros((3, 2)), np.zeros(2), 2)

    def test_labels_must_be_below_class_count(self):
        with pytest.raises(DatasetError):
            Dataset(np.zeros((2, 2)), np.array([0, 2]), 2)


class TestGenerateSynthetic:

    def test_same_seed_is_bit_identical(self):
        a = generate_synthetic(200, 5, 4, 1.0, seed=9)
        b = generate_synthetic(200, 5, 4, 1.0, seed=9)
        assert a.features.tobytes() == b.features.tobytes()
        assert np.array_equal(a.labels, b.labels)

    def test_different_seeds_differ(self):
        a = generate_synthetic(200, 5, 4, 1.0, seed=9)
        b = generate_synthetic(200, 5, 4, 1.0, seed=10)
        assert not np.array_equal(a.features, b.features)

    def test_classes_are_balanced(self):
        dataset = generate_synthetic(100, 3, 10, 1.0, seed=0)
        assert np.bincount(dataset.labels, minlength=10).tolist() == [10] * 10

    def test_uneven_counts_differ_by_at_most_one(self):
        counts = np.bincount(generate_synthetic(103, 3, 10, 1.0, seed=0).labels, minlength=10)
        assert counts.max() - counts.min() <= 1

    def test_tiny_spread_is_separable_by_nearest_mean(self):
        dataset = generate_synthetic(200, 8, 5, 1e-6, seed=4)
        means = np.array([dataset.features[dataset.labels == c].mean(axis=0) for c in range(5)])
        distances = np.linalg.norm(dataset.features[:, None, :] - means[None, :, :], axis=2)
        assert np.mean(np.argmin(distances, axis=1) == dataset.labels) == 1.0

    @pytest.mark.parametrize('kwargs', [
        {'n_samples': 5, 'n_classes': 10},
        {'cluster_spread': 0.0},
        {'n_features': 0},
    ])
    def test_invalid_arguments(self, kwargs):
        args = {'n_samples': 100, 'n_features': 3, 'n_classes': 10, 'cluster_spread': 1.0, 'seed': 0}
        args.update(kwargs)
        with pytest.raises(DatasetError):
            generate_synthetic(**args)


class TestTrainTestSplit:

    def test_split_is_disjoint_and_exhaustive(self):
        dataset = _sorted_dataset(60, 3)
        train, test = train_test_split(dataset, 15, seed=1)
        assert len(train) == 45 and len(test) == 15
        combined = sorted(train.features[:, 0].tolist() + test.features[:, 0].tolist())
        assert combined == list(range(60))

    def test_rejects_empty_side(self):
        with pytest.raises(DatasetError):
            train_test_split(_sorted_dataset(10, 2), 10, seed=1)


class TestShardPartition:

    def test_each_client_gets_equal_share(self):
        partition = partition_noniid_shards(_sorted_dataset(600, 3), 3, 2, seed=5)
        assert partition.sizes == [200, 200, 200]

    def test_single_client_holds_sorted_dataset(self):
        dataset = generate_synthetic(40, 2, 4, 1.0, seed=2)
        partition = partition_noniid_shards(dataset, 1, 1, seed=0)
        assert len(partition.clients[0]) == 40
        assert np.all(np.diff(partition.clients[0].labels) >= 0)

    def test_at_most_two_labels_per_client(self):
        dataset = generate_synthetic(1000, 3, 10, 1.0, seed=3)
        partition = partition_noniid_shards(dataset, 100, 2, seed=3)
        assert all(len(np.unique(c.labels)) <= 2 for c in partition.clients)

    def test_partition_is_exhaustive_and_disjoint(self):
        dataset = generate_synthetic(120, 2, 4, 1.0, seed=8)
        partition = partition_noniid_shards(dataset, 6, 2, seed=8)
        used = np.sort(np.concatenate(partition.indices))
        assert np.array_equal(used, np.arange(120))
        assert sum(partition.sizes) == len(dataset)

    def test_same_seed_same_partition(self):
        dataset = generate_synthetic(120, 2, 4, 1.0, seed=8)
        a = partition_noniid_shards(dataset, 6, 2, seed=1)
        b = partition_noniid_shards(dataset, 6, 2, seed=1)
        assert all(np.array_equal(x, y) for x, y in zip(a.indices, b.indices))

    def test_indivisible_size_names_requirement(self):
        with pytest.raises(PartitionError, match='multiple of 6'):
            partition_noniid_shards(_sorted_dataset(100, 2), 3, 2, seed=0)


class TestIidPartition:

    def test_one_sample_per_client(self):
        partition = partition_iid(generate_synthetic(100, 2, 10, 1.0, seed=0), 100, seed=0)
        assert partition.sizes == [1] * 100

    def test_label_multiset_preserved(self):
        dataset = generate_synthetic(90, 2, 3, 1.0, seed=6)
        partition = partition_iid(dataset, 9, seed=6)
        union = Counter()
        for client in partition.clients:
            union.update(client.labels.tolist())
        assert union == Counter(dataset.labels.tolist())

    def test_same_seed_same_partition(self):
        dataset = generate_synthetic(90, 2, 3, 1.0, seed=6)
        a, b = partition_iid(dataset, 9, seed=2), partition_iid(dataset, 9, seed=2)
        assert all(np.array_equal(x, y) for x, y in zip(a.indices, b.indices))

    def test_indivisible_size(self):
        with pytest.raises(PartitionError):
            partition_iid(_sorted_dataset(10, 2), 3, seed=0)


class TestLoadIdx:

    def test_reads_images_and_labels(self, tmp_path):
        images = np.array([[[0, 255], [128, 0]], [[255, 255], [0, 0]]])
        img = _write_images(tmp_path / 'img.idx', images)
        lbl = _write_labels(tmp_path / 'lbl.idx', [3, 7])

        dataset = load_idx(img, lbl)
        assert dataset.features.shape == (2, 4)
        assert dataset.features[0, 1] == 1.0
        assert dataset.features[0, 0] == 0.0
        assert dataset.labels.tolist() == [3, 7]

    def test_image_header_bytes(self, tmp_path):
        img = _write_images(tmp_path / 'img.idx', np.zeros((1, 1, 1)))
        assert img.read_bytes()[:4] == bytes([0x00, 0x00, 0x08, 0x03])
        load_idx(img, _write_labels(tmp_path / 'lbl.idx', [0]))

    def test_gzip_files(self, tmp_path):
        img = _write_images(tmp_path / 'img.idx.gz', np.full((3, 2, 2), 51))
        lbl = _write_labels(tmp_path / 'lbl.idx', [0, 1, 2])
        dataset = load_idx(img, lbl)
        assert np.allclose(dataset.features, 0.2)

    def test_wrong_magic(self, tmp_path):
        img = _write_images(tmp_path / 'img.idx', np.zeros((1, 2, 2)), magic=2049)
        with pytest.raises(IdxMagicError):
            load_idx(img, _write_labels(tmp_path / 'lbl.idx', [0]))

    def test_truncated_images(self, tmp_path):
        img = _write_images(tmp_path / 'img.idx', np.zeros((2, 2, 2)))
        img.write_bytes(img.read_bytes()[:-1])
        with pytest.raises(IdxTruncatedError):
            load_idx(img, _write_labels(tmp_path / 'lbl.idx', [0, 1]))

    def test_count_mismatch(self, tmp_path):
        img = _write_images(tmp_path / 'img.idx', np.zeros((3, 1, 1)))
        lbl = _write_labels(tmp_path / 'lbl.idx', [0, 1])
        with pytest.raises(IdxCountMismatchError):
            load_idx(img, lbl)


class TestBuildFederatedData:

    def test_synthetic_sizes(self):
        spec = DataSpec(n_samples=200, n_test=50, n_features=5, n_classes=4)
        data = build_federated_data(spec, num_clients=10, seed=1)
        assert data.partition.sizes == [20] * 10
        assert len(data.test) == 50
        assert data.num_features == 5 and data.num_classes == 4

    def test_data_seed_overrides_experiment_seed(self):
        spec = DataSpec(n_samples=100, n_test=20, n_features=3, n_classes=2, seed=42)
        a = build_federated_data(spec, 5, seed=1)
        b = build_federated_data(spec, 5, seed=2)
        assert np.array_equal(a.test.features, b.test.features)

    def test_idx_source_requires_paths(self):
        with pytest.raises(DatasetError, match='train_images'):
            DataSpec(source='idx')

    def test_unknown_partition(self):
        with pytest.raises(DatasetError):
            DataSpec(partition='dirichlet')
