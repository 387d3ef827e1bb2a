"""Datasets: synthetic generator, IID and shard non-IID partitioners, IDX loader."""

import gzip
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import AdaflError

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


class DatasetError(AdaflError, ValueError):
    """Invalid dataset contents or generator arguments."""
    pass


class PartitionError(DatasetError):
    """Dataset cannot be split into the requested client partition."""
    pass


class IdxFormatError(DatasetError):
    """Base error for malformed IDX files."""
    pass


class IdxMagicError(IdxFormatError):
    """Magic number does not announce unsigned-byte data of the expected rank."""
    pass


class IdxTruncatedError(IdxFormatError):
    """File ends before the payload its header promises."""
    pass


class IdxCountMismatchError(IdxFormatError):
    """Image and label files disagree on the number of items."""
    pass


@dataclass
class Dataset:
    """Samples as an (N, d) float64 matrix with N integer labels in [0, num_classes)."""
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DatasetError(f"Features must be a 2-D matrix, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise DatasetError(
                f"{self.features.shape[0]} feature rows but labels have shape {self.labels.shape}"
            )
        if self.num_classes < 1:
            raise DatasetError(f"num_classes must be positive, got {self.num_classes}")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DatasetError(f"Labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> 'Dataset':
        return Dataset(self.features[indices], self.labels[indices], self.num_classes)


@dataclass
class ClientPartition:
    """One private dataset per client, plus the source indices each was built from."""
    clients: List[Dataset]
    indices: List[np.ndarray] = field(default_factory=list)

    @property
    def num_clients(self) -> int:
        return len(self.clients)

    @property
    def sizes(self) -> List[int]:
        return [len(c) for c in self.clients]


def generate_synthetic(
    n_samples: int,
    n_features: int,
    n_classes: int,
    cluster_spread: float,
    seed: int,
) -> Dataset:
    """Gaussian-cluster classification data.

    Each class gets a random mean vector drawn from a standard normal; samples
    are the class mean plus isotropic noise of scale cluster_spread. Labels
    cycle through the classes, so counts differ by at most one, and the rows
    are then shuffled.
    """
    if n_classes < 1 or n_features < 1:
        raise DatasetError(f"Need at least one class and feature, got {n_classes} and {n_features}")
    if n_samples < n_classes:
        raise DatasetError(f"n_samples ({n_samples}) must be at least n_classes ({n_classes})")
    if cluster_spread <= 0:
        raise DatasetError(f"cluster_spread must be positive, got {cluster_spread}")

    rng = np.random.default_rng(seed)
    means = rng.standard_normal((n_classes, n_features))
    labels = rng.permutation(np.arange(n_samples) % n_classes)
    noise = rng.standard_normal((n_samples, n_features))
    features = means[labels] + cluster_spread * noise
    return Dataset(features, labels, n_classes)


def train_test_split(dataset: Dataset, n_test: int, seed: int):
    """Deterministically hold out n_test samples. Returns (train, test)."""
    if not 0 < n_test < len(dataset):
        raise DatasetError(f"n_test must lie in (0, {len(dataset)}), got {n_test}")
    order = np.random.default_rng(seed).permutation(len(dataset))
    return dataset.subset(np.sort(order[n_test:])), dataset.subset(np.sort(order[:n_test]))


def partition_noniid_shards(dataset: Dataset, num_clients: int, shards_per_client: int, seed: int) -> ClientPartition:
    """Label-sorted shard partition.

    Samples are sorted by label and cut into num_clients * shards_per_client
    contiguous shards; a seeded permutation hands each client
    shards_per_client of them. A client's shards are kept in ascending order.
    """
    if num_clients < 1 or shards_per_client < 1:
        raise PartitionError(
            f"Need at least one client and shard, got {num_clients} clients and {shards_per_client} shards"
        )
    n = len(dataset)
    num_shards = num_clients * shards_per_client
    if n % num_shards != 0:
        raise PartitionError(
            f"{n} samples cannot be cut into {num_shards} equal shards "
            f"({num_clients} clients x {shards_per_client} shards); "
            f"n must be a multiple of {num_shards}"
        )

    shard_size = n // num_shards
    order = np.argsort(dataset.labels, kind='stable')
    shard_ids = np.random.default_rng(seed).permutation(num_shards)

    indices = []
    for k in range(num_clients):
        own = np.sort(shard_ids[k * shards_per_client:(k + 1) * shards_per_client])
        indices.append(np.concatenate([order[s * shard_size:(s + 1) * shard_size] for s in own]))

    logger.debug("Shard partition: %d clients, %d shards of %d samples", num_clients, num_shards, shard_size)
    return ClientPartition([dataset.subset(idx) for idx in indices], indices)


def partition_iid(dataset: Dataset, num_clients: int, seed: int) -> ClientPartition:
    """Seeded shuffle followed by an equal contiguous split."""
    if num_clients < 1:
        raise PartitionError(f"Need at least one client, got {num_clients}")
    n = len(dataset)
    if n % num_clients != 0:
        raise PartitionError(
            f"{n} samples cannot be split equally among {num_clients} clients; "
            f"n must be a multiple of {num_clients}"
        )
    order = np.random.default_rng(seed).permutation(n)
    indices = np.split(order, num_clients)
    return ClientPartition([dataset.subset(idx) for idx in indices], list(indices))


def _read_idx(path) -> bytes:
    path = Path(path)
    if path.suffix == '.gz':
        with gzip.open(path, 'rb') as f:
            return f.read()
    return path.read_bytes()


def _read_header(raw: bytes, path, expected_magic: int, num_dims: int):
    header_size = 4 * (1 + num_dims)
    if len(raw) < header_size:
        raise IdxTruncatedError(f"{path}: file too short for an IDX header ({len(raw)} bytes)")
    magic = struct.unpack('>I', raw[:4])[0]
    if magic != expected_magic:
        raise IdxMagicError(f"{path}: magic number {magic}, expected {expected_magic}")
    dims = struct.unpack(f'>{num_dims}I', raw[4:header_size])
    return dims, header_size


def load_idx(images_path, labels_path, num_classes: int = 10) -> Dataset:
    """Load an IDX image/label file pair (MNIST layout).

    Pixels are unsigned bytes scaled to [0, 1]; each image is flattened to
    rows*cols features. Files ending in .gz are decompressed.
    """
    raw_images = _read_idx(images_path)
    (count, rows, cols), offset = _read_header(raw_images, images_path, IDX_IMAGE_MAGIC, 3)
    expected = count * rows * cols
    if len(raw_images) - offset < expected:
        raise IdxTruncatedError(
            f"{images_path}: expected {expected} pixel bytes, found {len(raw_images) - offset}"
        )

    raw_labels = _read_idx(labels_path)
    (label_count,), label_offset = _read_header(raw_labels, labels_path, IDX_LABEL_MAGIC, 1)
    if len(raw_labels) - label_offset < label_count:
        raise IdxTruncatedError(
            f"{labels_path}: expected {label_count} label bytes, found {len(raw_labels) - label_offset}"
        )

    if count != label_count:
        raise IdxCountMismatchError(f"{count} images but {label_count} labels")

    pixels = np.frombuffer(raw_images, dtype=np.uint8, count=expected, offset=offset)
    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    labels = np.frombuffer(raw_labels, dtype=np.uint8, count=label_count, offset=label_offset)

    logger.info("Loaded %d images of %dx%d from %s", count, rows, cols, images_path)
    return Dataset(features, labels.astype(np.int64), num_classes)


DATA_SOURCES = ('synthetic', 'idx')
PARTITIONS = ('shards', 'iid')


@dataclass
class DataSpec:
    """Where the federated training and test data come from and how it is split."""
    source: str = 'synthetic'
    partition: str = 'shards'
    shards_per_client: int = 2
    # synthetic workload; n_samples is the training-set size
    n_samples: int = 5000
    n_test: int = 1000
    n_features: int = 20
    n_classes: int = 10
    cluster_spread: float = 1.0
    # IDX workload
    train_images: str = ''
    train_labels: str = ''
    test_images: str = ''
    test_labels: str = ''
    # defaults to the experiment seed
    seed: Optional[int] = None

    def __post_init__(self):
        if self.source not in DATA_SOURCES:
            raise DatasetError(f"Unknown data source '{self.source}', expected one of {list(DATA_SOURCES)}")
        if self.partition not in PARTITIONS:
            raise DatasetError(f"Unknown partition '{self.partition}', expected one of {list(PARTITIONS)}")
        if self.shards_per_client < 1:
            raise DatasetError(f"shards_per_client must be at least 1, got {self.shards_per_client}")
        if self.source == 'idx':
            missing = [k for k in ('train_images', 'train_labels', 'test_images', 'test_labels') if not getattr(self, k)]
            if missing:
                raise DatasetError(f"IDX source needs paths for: {', '.join(missing)}")
        elif self.n_test < 1:
            raise DatasetError(f"n_test must be at least 1, got {self.n_test}")


@dataclass
class FederatedData:
    partition: ClientPartition
    test: Dataset

    @property
    def num_features(self) -> int:
        return self.test.num_features

    @property
    def num_classes(self) -> int:
        return self.test.num_classes


def build_federated_data(spec: DataSpec, num_clients: int, seed: int) -> FederatedData:
    """Materialise the test set and the per-client training partition."""
    data_seed = seed if spec.seed is None else spec.seed

    if spec.source == 'synthetic':
        full = generate_synthetic(
            spec.n_samples + spec.n_test, spec.n_features, spec.n_classes, spec.cluster_spread, data_seed
        )
        train, test = train_test_split(full, spec.n_test, data_seed)
    else:
        train = load_idx(spec.train_images, spec.train_labels, spec.n_classes)
        test = load_idx(spec.test_images, spec.test_labels, spec.n_classes)
        if train.num_features != test.num_features:
            raise DatasetError(
                f"Train images have {train.num_features} pixels but test images have {test.num_features}"
            )

    if spec.partition == 'shards':
        partition = partition_noniid_shards(train, num_clients, spec.shards_per_client, data_seed)
    else:
        partition = partition_iid(train, num_clients, data_seed)

    logger.info(
        "Data ready: %d training samples over %d clients (%s), %d test samples",
        len(train), num_clients, spec.partition, len(test),
    )
    return FederatedData(partition, test)
